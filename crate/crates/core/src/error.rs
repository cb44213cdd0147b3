use alloc::string::String;

/// Errors raised by the tracking core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is numerically singular in {0} (Cholesky failed after jitter)")]
    Singular(&'static str),

    #[error("{0}: input list is empty")]
    Empty(&'static str),

    #[error("total weight is zero in {0}")]
    ZeroWeight(&'static str),

    #[error("weights are not normalized: sum = {sum}")]
    Unnormalized { sum: f64 },

    #[error(
        "{fov_count} particles in the field of view exceeds the enumeration limit of {limit}; \
         raise epsilon or shrink the field of view"
    )]
    CombinatorialBlowup { fov_count: usize, limit: usize },

    #[error("combination has no active particle")]
    NoActiveParticle,

    #[error("particle {0} is not active in the combination")]
    InactiveParticle(usize),

    #[error("mean sensor needs at least one target")]
    NoTargets,

    #[error("cell index {index} outside grid of {cells} cells")]
    InvalidCell { index: usize, cells: usize },

    #[error("{requested} cells requested but the sensor can measure at most {limit}")]
    TooManyCells { requested: usize, limit: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

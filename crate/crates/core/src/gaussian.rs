//! Gaussian algebra shared by every filter: densities, Mahalanobis distance,
//! moment-matched merging and covariance upkeep.

use core::f64::consts::PI;

use nalgebra::{Cholesky, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::{Matrix, Vector};

/// Covariance entries are compared against this when checking symmetry and
/// positive semi-definiteness.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Relative jitter added to the diagonal when a Cholesky factorization fails.
const JITTER_SCALE: f64 = 1e-12;

/// A multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianState {
    /// Builds a state, checking that the covariance is square and matches the
    /// mean. The covariance is symmetrized.
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        check_dim("GaussianState covariance rows", mean.len(), cov.nrows())?;
        check_dim("GaussianState covariance columns", mean.len(), cov.ncols())?;
        let mut state = Self { mean, cov };
        state.symmetrize();
        Ok(state)
    }

    pub fn from_diagonal(mean: Vector, variances: &[f64]) -> Result<Self> {
        check_dim("GaussianState diagonal", mean.len(), variances.len())?;
        let cov = Matrix::from_diagonal(&Vector::from_column_slice(variances));
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Replaces the covariance by `(P + Pᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        symmetrize(&mut self.cov);
    }

    /// Symmetric within `tol` and no eigenvalue below `-tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.mean.len() == self.cov.nrows() && is_symmetric_psd(&self.cov, tol)
    }

    /// Restriction to the given state components.
    pub fn marginal(&self, indices: &[usize]) -> GaussianState {
        let mean = Vector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = Matrix::from_fn(indices.len(), indices.len(), |r, c| {
            self.cov[(indices[r], indices[c])]
        });
        GaussianState { mean, cov }
    }

    /// Draws one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let root = psd_sqrt(&self.cov);
        &self.mean + root * standard_normal_vector(self.dim(), rng)
    }
}

/// A Gaussian hypothesis together with the probability that a target with
/// that state distribution exists.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParticle {
    pub weight: f64,
    pub state: GaussianState,
}

impl GaussianParticle {
    pub fn new(weight: f64, state: GaussianState) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: alloc::format!("{weight} is outside [0, 1]"),
            });
        }
        Ok(Self { weight, state })
    }

    pub fn mean(&self) -> &Vector {
        &self.state.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.state.cov
    }
}

/// How the covariance of merged particles is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeCovariance {
    /// Mixture covariance including the spread of the means.
    #[default]
    MomentMatch,
    /// Plain sum of the component covariances.
    Sum,
}

pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
}

pub fn is_symmetric_psd(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            if (m[(r, c)] - m[(c, r)]).abs() > tol {
                return false;
            }
        }
    }
    if n == 0 {
        return true;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().all(|&l| l >= -tol)
}

/// Cholesky factorization that retries once with diagonal jitter
/// `1e-12 * trace / n` before giving up.
pub fn cholesky_jittered(m: &Matrix, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol);
    }
    let n = m.nrows().max(1) as f64;
    let jitter = JITTER_SCALE * m.trace() / n;
    if jitter > 0.0 && jitter.is_finite() {
        let mut padded = m.clone();
        for i in 0..m.nrows() {
            padded[(i, i)] += jitter;
        }
        if let Some(chol) = padded.cholesky() {
            return Ok(chol);
        }
    }
    Err(Error::Singular(context))
}

/// Matrix square root `L` with `L Lᵀ = m` for a symmetric PSD `m`.
///
/// Cholesky when possible; otherwise an eigen-decomposition with negative
/// eigenvalues clamped to zero, which covers rank-deficient covariances.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    if m.iter().all(|&v| v == 0.0) {
        return Matrix::zeros(m.nrows(), m.ncols());
    }
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    &eig.eigenvectors * Matrix::from_diagonal(&roots)
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Log density of `g` at `x`.
pub fn log_pdf(g: &GaussianState, x: &Vector) -> Result<f64> {
    check_dim("log_pdf point", g.dim(), x.len())?;
    let chol = cholesky_jittered(&g.cov, "log_pdf covariance")?;
    let diff = x - &g.mean;
    let quad = diff.dot(&chol.solve(&diff));
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum();
    let n = g.dim() as f64;
    Ok(-0.5 * quad - 0.5 * n * libm::log(2.0 * PI) - half_log_det)
}

/// Quadratic form `(a - b)ᵀ M (a - b)`.
pub fn mahalanobis_sq(a: &Vector, b: &Vector, m: &Matrix) -> Result<f64> {
    check_dim("mahalanobis_sq operands", a.len(), b.len())?;
    check_dim("mahalanobis_sq matrix rows", a.len(), m.nrows())?;
    check_dim("mahalanobis_sq matrix columns", a.len(), m.ncols())?;
    let diff = a - b;
    Ok(diff.dot(&(m * &diff)).max(0.0))
}

/// Replaces a weighted set of particles by a single particle whose weight is
/// the summed weight (clamped to 1) and whose mean and covariance match the
/// first two moments of the mixture.
pub fn moment_match_merge(particles: &[GaussianParticle]) -> Result<GaussianParticle> {
    merge_particles(particles, MergeCovariance::MomentMatch)
}

pub fn merge_particles(
    particles: &[GaussianParticle],
    rule: MergeCovariance,
) -> Result<GaussianParticle> {
    let first = particles.first().ok_or(Error::Empty("merge_particles"))?;
    if particles.len() == 1 {
        return Ok(first.clone());
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let components: alloc::vec::Vec<(f64, &GaussianState)> =
        particles.iter().map(|p| (p.weight, &p.state)).collect();
    let state = match rule {
        MergeCovariance::MomentMatch => mixture_moments(&components)?,
        MergeCovariance::Sum => {
            let mut merged = mixture_moments(&components)?;
            merged.cov = Matrix::zeros(first.state.dim(), first.state.dim());
            for p in particles {
                merged.cov += &p.state.cov;
            }
            merged
        }
    };
    Ok(GaussianParticle {
        weight: total.min(1.0),
        state,
    })
}

/// Mean and covariance of a weighted Gaussian mixture. Weights need not be
/// normalized but must have a positive sum.
pub fn mixture_moments(components: &[(f64, &GaussianState)]) -> Result<GaussianState> {
    let (_, first) = components.first().ok_or(Error::Empty("mixture_moments"))?;
    let n = first.dim();
    for (_, g) in components {
        check_dim("mixture component", n, g.dim())?;
    }
    let total: f64 = components.iter().map(|(w, _)| *w).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight("mixture_moments"));
    }
    let mut mean = Vector::zeros(n);
    for (w, g) in components {
        mean.axpy(*w / total, &g.mean, 1.0);
    }
    let mut cov = Matrix::zeros(n, n);
    for (w, g) in components {
        let spread = &g.mean - &mean;
        cov += (&g.cov + &spread * spread.transpose()) * (*w / total);
    }
    symmetrize(&mut cov);
    Ok(GaussianState { mean, cov })
}

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::standard_normal_vector;
use crate::geometry::Rect;
use crate::{Matrix, Vector};

/// `truth[k][i]` is the `(x, vx, y, vy)` state of target `i` at step `k`.
pub type Truth = Vec<Vec<Vector>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_targets: usize,
    pub n_steps: usize,
    /// Time-step length.
    pub tau: f64,
    /// Diagonal of the process-noise covariance, `(x, vx, y, vy)` order.
    pub q_diag: [f64; 4],
    pub workspace: Rect,
    pub seed: u64,
    /// Initial `(x, vx, y, vy)` per target; drawn uniformly over the
    /// workspace with zero velocity when absent.
    pub initial_states: Option<Vec<[f64; 4]>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_targets: 3,
            n_steps: 100,
            tau: 1.0,
            q_diag: [20.0, 0.2, 20.0, 0.2],
            workspace: Rect {
                x_min: 0.0,
                y_min: 0.0,
                x_max: 12.0,
                y_max: 12.0,
            },
            seed: 0,
            initial_states: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "at least one step is required".into(),
            });
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: alloc::format!("{} must be positive", self.tau),
            });
        }
        if self.q_diag.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "q_diag",
                reason: "variances must be finite and non-negative".into(),
            });
        }
        if let Some(init) = &self.initial_states {
            if init.len() != self.n_targets {
                return Err(Error::InvalidParameter {
                    name: "initial_states",
                    reason: alloc::format!(
                        "{} states given for {} targets",
                        init.len(),
                        self.n_targets
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn transition(&self) -> Matrix {
        constant_velocity(self.tau)
    }

    pub fn process_noise(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(&self.q_diag))
    }
}

/// Constant-velocity transition for the `(x, vx, y, vy)` layout.
pub fn constant_velocity(tau: f64) -> Matrix {
    let mut f = Matrix::identity(4, 4);
    f[(0, 1)] = tau;
    f[(2, 3)] = tau;
    f
}

/// Propagates every target for `n_steps` states, the first being the
/// initial state. Targets are not confined to the workspace.
pub fn generate_truth<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Truth> {
    config.validate()?;
    let ws = &config.workspace;
    let mut current: Vec<Vector> = match &config.initial_states {
        Some(init) => init.iter().map(|s| Vector::from_column_slice(s)).collect(),
        None => (0..config.n_targets)
            .map(|_| {
                let x = ws.x_min + rng.random::<f64>() * ws.width();
                let y = ws.y_min + rng.random::<f64>() * ws.height();
                Vector::from_column_slice(&[x, 0.0, y, 0.0])
            })
            .collect(),
    };
    let f = config.transition();
    let sd = Vector::from_iterator(4, config.q_diag.iter().map(|q| libm::sqrt(*q)));
    let mut truth = Vec::with_capacity(config.n_steps);
    truth.push(current.clone());
    for _ in 1..config.n_steps {
        current = current
            .iter()
            .map(|x| &f * x + standard_normal_vector(4, rng).component_mul(&sd))
            .collect();
        truth.push(current.clone());
    }
    Ok(truth)
}

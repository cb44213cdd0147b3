//! Gaussian particle filter for an unknown number of targets.
//!
//! Each particle is a Gaussian hypothesis for one target together with the
//! probability that the target exists. The set as a whole is the multi-target
//! belief and its weight sum estimates the number of targets. A step is
//!
//! 1. predict every particle through the linear dynamics,
//! 2. split off the particles whose mean lies in the field of view,
//! 3. update those particles against the measurement,
//! 4. merge particles that have become indistinguishable,
//! 5. add birth particles and prune light or surplus ones.
//!
//! With the mean sensor, step 3 enumerates existence combinations and runs a
//! coupled Kalman update per combination (see [`combination`]). With the grid
//! sensor the binary cell returns carry no position information beyond the
//! cell, so step 3 only revises existence weights by Bayes' rule and births
//! are placed at cells that fired.

pub mod combination;
pub mod maintenance;

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{GaussianParticle, GaussianState, MergeCovariance};
use crate::geometry::Rect;
use crate::kalman::predict;
use crate::sensors::{CellReturn, GridSensorModel, MeanSensorModel, POSITION_INDICES};
use crate::{Matrix, Vector};

pub use combination::{
    combination_log_weight, combination_predictive, combination_weight, conditional_kf_update,
    enumerate_combinations, marginalize_existence, normalize_log_weights, ExistenceCombination,
};
pub use maintenance::{birth_and_prune, estimate_cardinality, merge_close_particles, merge_distance};

/// The multi-target belief at time `step`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GpfParticleSet {
    pub particles: Vec<GaussianParticle>,
    pub step: u64,
}

impl GpfParticleSet {
    pub fn new(particles: Vec<GaussianParticle>) -> Self {
        Self { particles, step: 0 }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn cardinality(&self) -> f64 {
        estimate_cardinality(&self.particles)
    }
}

/// Region in which the sensor sees targets.
#[derive(Debug, Clone, PartialEq)]
pub enum FovRegion {
    Full,
    /// Union of closed rectangles.
    Rects(Vec<Rect>),
}

impl FovRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            FovRegion::Full => true,
            FovRegion::Rects(rects) => rects.iter().any(|r| r.contains_closed(x, y)),
        }
    }
}

/// The measurement delivered to a filter at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Vector(Vector),
    Cells(Vec<CellReturn>),
}

/// Sensor the filter assumes produced the measurement.
#[derive(Debug, Clone, Copy)]
pub enum GpfSensor<'a> {
    Mean(&'a MeanSensorModel),
    Grid(&'a GridSensorModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpfConfig {
    pub transition: Matrix,
    pub process_noise: Matrix,
    /// Combinations with a Bernoulli prior at or below this are ignored.
    pub epsilon: f64,
    /// Largest field-of-view particle count the enumeration accepts.
    pub s_max: usize,
    /// Squared Mahalanobis distance below which particles merge.
    pub d_thresh: f64,
    pub w_prune: f64,
    pub n_max: usize,
    /// Existence weight of a particle born from a positive cell return.
    pub w_birth: f64,
    /// Prior variance of the non-position components of a birth particle.
    pub birth_velocity_var: f64,
    pub merge_cov: MergeCovariance,
    /// Likelihood of a mean-sensor measurement when no particle is present.
    pub clutter_density: f64,
    pub fov: FovRegion,
    /// Position components of the state.
    pub position: [usize; 2],
    /// Existence weights are capped here before a grid update so that a
    /// merged particle clamped to 1 can still be refuted by empty returns.
    pub existence_ceiling: f64,
}

impl GpfConfig {
    /// Defaults for a constant-velocity `(x, vx, y, vy)` state.
    pub fn new(transition: Matrix, process_noise: Matrix) -> Self {
        Self {
            transition,
            process_noise,
            epsilon: 1e-3,
            s_max: 20,
            d_thresh: 1.0,
            w_prune: 1e-3,
            n_max: 200,
            w_birth: 0.1,
            birth_velocity_var: 1.0,
            merge_cov: MergeCovariance::MomentMatch,
            clutter_density: 1.0 / 144.0,
            fov: FovRegion::Full,
            position: POSITION_INDICES,
            existence_ceiling: 0.999,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.transition.nrows();
        check_dim("transition columns", n, self.transition.ncols())?;
        check_dim("process noise rows", n, self.process_noise.nrows())?;
        check_dim("process noise columns", n, self.process_noise.ncols())?;
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", "must lie in (0, 1)");
        }
        if !(self.d_thresh > 0.0) {
            return bad("d_thresh", "must be positive");
        }
        if !(self.w_prune >= 0.0 && self.w_prune < 1.0) {
            return bad("w_prune", "must lie in [0, 1)");
        }
        if !(self.w_birth > 0.0 && self.w_birth <= 1.0) {
            return bad("w_birth", "must lie in (0, 1]");
        }
        if !(self.clutter_density > 0.0) {
            return bad("clutter_density", "must be positive");
        }
        if !(self.existence_ceiling > 0.0 && self.existence_ceiling <= 1.0) {
            return bad("existence_ceiling", "must lie in (0, 1]");
        }
        if self.position.iter().any(|&i| i >= n) {
            return bad("position", "component index outside the state");
        }
        Ok(())
    }
}

/// Result of one [`gpf_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct GpfStep {
    pub set: GpfParticleSet,
    /// The measurement could not be used (no combination passed the
    /// threshold); only prediction was applied.
    pub degenerate: bool,
    /// Normalized posterior weights of the combination family, mean sensor only.
    pub combination_weights: Vec<f64>,
    pub fov_count: usize,
    pub births: usize,
}

/// Predicts every particle; existence weights are unchanged.
pub fn gpf_predict(set: &GpfParticleSet, f: &Matrix, q: &Matrix) -> Result<GpfParticleSet> {
    let particles = set
        .particles
        .iter()
        .map(|p| {
            Ok(GaussianParticle {
                weight: p.weight,
                state: predict(&p.state, f, q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GpfParticleSet {
        particles,
        step: set.step,
    })
}

/// Partitions particle indices by whether the mean position lies in `fov`.
pub fn select_fov_particles(
    set: &GpfParticleSet,
    fov: &FovRegion,
    position: [usize; 2],
) -> (Vec<usize>, Vec<usize>) {
    let [ix, iy] = position;
    (0..set.len()).partition(|&i| {
        let m = &set.particles[i].state.mean;
        fov.contains(m[ix], m[iy])
    })
}

/// One full recursion of the filter.
pub fn gpf_step(
    set: &GpfParticleSet,
    z: &Measurement,
    sensor: GpfSensor<'_>,
    config: &GpfConfig,
) -> Result<GpfStep> {
    let predicted = gpf_predict(set, &config.transition, &config.process_noise)?;
    let mut step = match (sensor, z) {
        (GpfSensor::Mean(model), Measurement::Vector(z)) => {
            mean_sensor_update(predicted, z, model, config)?
        }
        (GpfSensor::Grid(model), Measurement::Cells(returns)) => {
            grid_sensor_update(predicted, returns, model, config)?
        }
        _ => {
            return Err(Error::Unsupported(
                "measurement does not match the configured sensor".into(),
            ))
        }
    };
    step.set.step = set.step + 1;
    Ok(step)
}

fn mean_sensor_update(
    predicted: GpfParticleSet,
    z: &Vector,
    model: &MeanSensorModel,
    config: &GpfConfig,
) -> Result<GpfStep> {
    let (in_fov, _) = select_fov_particles(&predicted, &config.fov, config.position);
    let fov_particles: Vec<GaussianParticle> =
        in_fov.iter().map(|&i| predicted.particles[i].clone()).collect();

    let mut combinations = enumerate_combinations(&fov_particles, config.epsilon, config.s_max)?;
    let mut particles = predicted.particles;
    let mut degenerate = combinations.is_empty();
    let mut combination_weights = Vec::new();

    if !degenerate {
        let mut log_weights = Vec::with_capacity(combinations.len());
        for c in combinations.iter_mut() {
            for j in 0..c.bits.len() {
                if c.bits[j] {
                    let upd = conditional_kf_update(j, &c.bits, &fov_particles, z, model)?;
                    c.updated_states[j] = Some(upd.posterior);
                }
            }
            log_weights.push(combination_log_weight(
                c,
                &fov_particles,
                z,
                model,
                config.clutter_density,
            )?);
        }
        match normalize_log_weights(&log_weights) {
            Ok(weights) => {
                for (c, w) in combinations.iter_mut().zip(&weights) {
                    c.posterior_weight = *w;
                }
                let updated = marginalize_existence(&combinations, &fov_particles)?;
                for (slot, p) in in_fov.iter().zip(updated) {
                    particles[*slot] = p;
                }
                combination_weights = weights;
            }
            Err(_) => {
                log::warn!("gpf_step: every combination weight underflowed, skipping update");
                degenerate = true;
            }
        }
    } else {
        log::debug!("gpf_step: no existence combination above epsilon, skipping update");
    }

    let merged = merge_close_particles(particles, config.d_thresh, &config.position, config.merge_cov);
    let particles = birth_and_prune(merged, Vec::new(), config.w_prune, config.n_max);
    Ok(GpfStep {
        set: GpfParticleSet { particles, step: 0 },
        degenerate,
        combination_weights,
        fov_count: in_fov.len(),
        births: 0,
    })
}

/// Bayes update of existence weights from binary cell returns.
///
/// A particle whose mean lies in a measured cell is revised with
/// `P(return | exists) = p_d^{z} (1 - p_d)^{1-z}` against
/// `P(return | absent) = p_f^{z} (1 - p_f)^{1-z}`; other particles are left
/// alone. States are not moved.
pub fn grid_existence_update(
    particles: &mut [GaussianParticle],
    returns: &[CellReturn],
    model: &GridSensorModel,
    ceiling: f64,
) {
    let total = model.grid.cell_count();
    let mut by_cell: Vec<Option<bool>> = alloc::vec![None; total];
    for r in returns {
        if r.cell < total {
            by_cell[r.cell] = Some(r.detected);
        }
    }
    let [ix, iy] = model.position;
    for p in particles.iter_mut() {
        let m = &p.state.mean;
        let Some(cell) = model.grid.cell_of(m[ix], m[iy]) else {
            continue;
        };
        let Some(detected) = by_cell[cell] else {
            continue;
        };
        let w = p.weight.min(ceiling);
        let present = w * model.return_likelihood(detected, 1);
        let absent = (1.0 - w) * model.return_likelihood(detected, 0);
        p.weight = if present + absent > 0.0 {
            (present / (present + absent)).clamp(0.0, 1.0)
        } else {
            w
        };
    }
}

/// One birth particle per positive return, centred in the cell with zero
/// velocity and the covariance of a uniform distribution over the cell.
pub fn grid_births(
    returns: &[CellReturn],
    model: &GridSensorModel,
    config: &GpfConfig,
) -> Result<Vec<GaussianParticle>> {
    let n = config.transition.nrows();
    let [ix, iy] = config.position;
    returns
        .iter()
        .filter(|r| r.detected)
        .map(|r| {
            let rect = model.grid.cell(r.cell)?;
            let (cx, cy) = rect.center();
            let mut mean = Vector::zeros(n);
            mean[ix] = cx;
            mean[iy] = cy;
            let mut var = alloc::vec![config.birth_velocity_var; n];
            var[ix] = rect.width() * rect.width() / 12.0;
            var[iy] = rect.height() * rect.height() / 12.0;
            GaussianParticle::new(config.w_birth, GaussianState::from_diagonal(mean, &var)?)
        })
        .collect()
}

fn grid_sensor_update(
    predicted: GpfParticleSet,
    returns: &[CellReturn],
    model: &GridSensorModel,
    config: &GpfConfig,
) -> Result<GpfStep> {
    let cells = returns
        .iter()
        .map(|r| model.grid.cell(r.cell))
        .collect::<Result<Vec<_>>>()?;
    let (in_fov, _) = select_fov_particles(&predicted, &FovRegion::Rects(cells), config.position);
    let mut particles = predicted.particles;
    grid_existence_update(&mut particles, returns, model, config.existence_ceiling);

    let births = grid_births(returns, model, config)?;
    let birth_count = births.len();
    let merged = merge_close_particles(particles, config.d_thresh, &config.position, config.merge_cov);
    let particles = birth_and_prune(merged, births, config.w_prune, config.n_max);
    Ok(GpfStep {
        set: GpfParticleSet { particles, step: 0 },
        degenerate: false,
        combination_weights: Vec::new(),
        fov_count: in_fov.len(),
        births: birth_count,
    })
}

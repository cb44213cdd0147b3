//! Existence combinations and the coupled Kalman update.
//!
//! One aggregate measurement `z = P * mean(x_i) + w` is explained by a
//! boolean vector `E` saying which field-of-view particles are present. For a
//! fixed `E` with `m` active particles, particle `j` sees
//!
//! ```text
//! H     = P / m
//! z'    = z - P * Σ_{i≠j} e_i μ_i / m
//! R_eff = P (Σ_{i≠j} e_i Σ_i) Pᵀ / m² + R
//! ```
//!
//! so that `S = H Σ_j Hᵀ + R_eff = R + P (Σ_i e_i Σ_i) Pᵀ / m²` couples every
//! active particle through the innovation covariance.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{log_pdf, mixture_moments, GaussianParticle, GaussianState};
use crate::kalman::{update, KalmanUpdate};
use crate::sensors::MeanSensorModel;
use crate::{Matrix, Vector};

/// A hypothesis about which field-of-view particles exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceCombination {
    pub bits: Vec<bool>,
    /// `Π w_i^{e_i} (1 - w_i)^{1 - e_i}`.
    pub prior: f64,
    /// Normalized posterior weight within its family; zero until weighted.
    pub posterior_weight: f64,
    /// Conditional posterior of each active particle, `None` where `e_i = 0`.
    pub updated_states: Vec<Option<GaussianState>>,
}

impl ExistenceCombination {
    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty_hypothesis(&self) -> bool {
        self.bits.iter().all(|b| !b)
    }
}

/// All existence vectors whose Bernoulli prior exceeds `epsilon`.
///
/// The search is depth-first over particles, trying `e_i = 1` before
/// `e_i = 0`, and abandons a branch once its partial product drops to
/// `epsilon` since later factors can only shrink it. The output order is
/// therefore deterministic.
pub fn enumerate_combinations(
    fov_particles: &[GaussianParticle],
    epsilon: f64,
    s_max: usize,
) -> Result<Vec<ExistenceCombination>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: alloc::format!("{epsilon} is outside (0, 1)"),
        });
    }
    let s = fov_particles.len();
    if s > s_max {
        return Err(Error::CombinatorialBlowup {
            fov_count: s,
            limit: s_max,
        });
    }
    let weights: Vec<f64> = fov_particles.iter().map(|p| p.weight).collect();
    let mut out = Vec::new();
    let mut bits = Vec::with_capacity(s);
    descend(&weights, epsilon, 1.0, &mut bits, &mut out);
    Ok(out)
}

fn descend(
    weights: &[f64],
    epsilon: f64,
    partial: f64,
    bits: &mut Vec<bool>,
    out: &mut Vec<ExistenceCombination>,
) {
    if partial <= epsilon {
        return;
    }
    let depth = bits.len();
    if depth == weights.len() {
        out.push(ExistenceCombination {
            bits: bits.clone(),
            prior: partial,
            posterior_weight: 0.0,
            updated_states: alloc::vec![None; depth],
        });
        return;
    }
    let w = weights[depth];
    for (present, factor) in [(true, w), (false, 1.0 - w)] {
        bits.push(present);
        descend(weights, epsilon, partial * factor, bits, out);
        bits.pop();
    }
}

/// Coupled Kalman update of particle `j` given existence vector `bits`.
///
/// `fov_particles` hold the predicted moments.
pub fn conditional_kf_update(
    j: usize,
    bits: &[bool],
    fov_particles: &[GaussianParticle],
    z: &Vector,
    sensor: &MeanSensorModel,
) -> Result<KalmanUpdate> {
    check_dim("conditional_kf_update existence vector", fov_particles.len(), bits.len())?;
    check_dim("conditional_kf_update measurement", sensor.measurement_dim(), z.len())?;
    if j >= bits.len() || !bits[j] {
        return Err(Error::InactiveParticle(j));
    }
    let m = bits.iter().filter(|b| **b).count() as f64;
    let n = fov_particles[j].state.dim();
    let mut others_mean = Vector::zeros(n);
    let mut others_cov = Matrix::zeros(n, n);
    for (i, (p, on)) in fov_particles.iter().zip(bits).enumerate() {
        if *on && i != j {
            check_dim("conditional_kf_update state", n, p.state.dim())?;
            others_mean += &p.state.mean;
            others_cov += &p.state.cov;
        }
    }
    let proj = &sensor.projection;
    let h = proj / m;
    let z_eff = z - proj * others_mean / m;
    let r_eff = proj * others_cov * proj.transpose() / (m * m) + &sensor.r;
    update(&fov_particles[j].state, &h, &r_eff, &z_eff)
}

/// Predictive moments `(μ_c, Σ_c)` of the measurement under a combination:
/// `μ_c = P Σ e_i μ_i / m`, `Σ_c = P (Σ e_i Σ_i) Pᵀ / m² + R`.
pub fn combination_predictive(
    bits: &[bool],
    fov_particles: &[GaussianParticle],
    sensor: &MeanSensorModel,
) -> Result<GaussianState> {
    check_dim("combination existence vector", fov_particles.len(), bits.len())?;
    let m = bits.iter().filter(|b| **b).count();
    if m == 0 {
        return Err(Error::NoActiveParticle);
    }
    let m = m as f64;
    let n = sensor.state_dim();
    let mut mean_sum = Vector::zeros(n);
    let mut cov_sum = Matrix::zeros(n, n);
    for (p, on) in fov_particles.iter().zip(bits) {
        if *on {
            check_dim("combination state", n, p.state.dim())?;
            mean_sum += &p.state.mean;
            cov_sum += &p.state.cov;
        }
    }
    let proj = &sensor.projection;
    GaussianState::new(
        proj * mean_sum / m,
        proj * cov_sum * proj.transpose() / (m * m) + &sensor.r,
    )
}

/// Log of the unnormalized combination weight: `ln prior + ln N(z; μ_c, Σ_c)`,
/// or `ln prior + ln clutter_density` for the all-absent hypothesis.
pub fn combination_log_weight(
    combination: &ExistenceCombination,
    fov_particles: &[GaussianParticle],
    z: &Vector,
    sensor: &MeanSensorModel,
    clutter_density: f64,
) -> Result<f64> {
    check_dim("combination_weight measurement", sensor.measurement_dim(), z.len())?;
    let log_prior = libm::log(combination.prior);
    if combination.is_empty_hypothesis() {
        return Ok(log_prior + libm::log(clutter_density));
    }
    let predictive = combination_predictive(&combination.bits, fov_particles, sensor)?;
    Ok(log_prior + log_pdf(&predictive, z)?)
}

/// Unnormalized weight `prior * N(z; μ_c, Σ_c)` of a combination.
pub fn combination_weight(
    combination: &ExistenceCombination,
    fov_particles: &[GaussianParticle],
    z: &Vector,
    sensor: &MeanSensorModel,
    clutter_density: f64,
) -> Result<f64> {
    combination_log_weight(combination, fov_particles, z, sensor, clutter_density).map(libm::exp)
}

/// Converts log weights into weights summing to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ZeroWeight("combination weights"));
    }
    let exps: Vec<f64> = log_weights.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Per-particle posterior from a normalized combination family.
///
/// The existence weight of particle `i` is the total posterior weight of the
/// combinations with `e_i = 1`; its state is the moment-matched mixture of its
/// conditional posteriors over those combinations. A particle that is active
/// in no combination keeps its predicted weight and state.
pub fn marginalize_existence(
    combinations: &[ExistenceCombination],
    fov_particles: &[GaussianParticle],
) -> Result<Vec<GaussianParticle>> {
    if combinations.is_empty() {
        return Err(Error::Empty("marginalize_existence"));
    }
    for c in combinations {
        check_dim("marginalize_existence bits", fov_particles.len(), c.bits.len())?;
    }
    fov_particles
        .iter()
        .enumerate()
        .map(|(i, prior)| {
            let mut components: Vec<(f64, &GaussianState)> = Vec::new();
            let mut active_anywhere = false;
            for c in combinations.iter().filter(|c| c.bits[i]) {
                active_anywhere = true;
                let state = c.updated_states[i].as_ref().unwrap_or(&prior.state);
                if c.posterior_weight > 0.0 {
                    components.push((c.posterior_weight, state));
                }
            }
            if !active_anywhere {
                return Ok(prior.clone());
            }
            let weight: f64 = components.iter().map(|(w, _)| *w).sum();
            let state = match components.as_slice() {
                [] => prior.state.clone(),
                [(_, only)] => (*only).clone(),
                _ => mixture_moments(&components)?,
            };
            Ok(GaussianParticle {
                weight: weight.clamp(0.0, 1.0),
                state,
            })
        })
        .collect()
}

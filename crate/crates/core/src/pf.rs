//! Bootstrap (SIR) particle filter for a single target.
//!
//! Particles are propagated through the transition prior, reweighted by the
//! measurement likelihood and resampled when the effective sample size drops
//! below half the particle count.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{psd_sqrt, standard_normal_vector, GaussianState};
use crate::kalman::LinearGaussianModel;
use crate::{Matrix, Vector};

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Weighted point-mass approximation of a single-target posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParticleSet {
    states: Vec<Vector>,
    weights: Vec<f64>,
}

impl PointParticleSet {
    /// Builds a set; weights are normalized to sum to one.
    pub fn new(states: Vec<Vector>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("PointParticleSet"));
        }
        check_dim("PointParticleSet weights", states.len(), weights.len())?;
        let dim = states[0].len();
        for s in &states {
            check_dim("PointParticleSet state", dim, s.len())?;
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "weights must be finite and non-negative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeight("PointParticleSet"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { states, weights })
    }

    /// `n` equally weighted draws from `prior`.
    pub fn sample_from<R: Rng + ?Sized>(prior: &GaussianState, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("PointParticleSet"));
        }
        let root = psd_sqrt(&prior.cov);
        let states = (0..n)
            .map(|_| &prior.mean + &root * standard_normal_vector(prior.dim(), rng))
            .collect();
        Ok(Self {
            states,
            weights: uniform_weights(n),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean and covariance of the particle cloud.
    pub fn moments(&self) -> GaussianState {
        let n = self.states[0].len();
        let mut mean = Vector::zeros(n);
        for (s, w) in self.states.iter().zip(&self.weights) {
            mean.axpy(*w, s, 1.0);
        }
        let mut cov = Matrix::zeros(n, n);
        for (s, w) in self.states.iter().zip(&self.weights) {
            let d = s - &mean;
            cov += (&d * d.transpose()) * *w;
        }
        crate::gaussian::symmetrize(&mut cov);
        GaussianState { mean, cov }
    }

    pub fn effective_sample_size(&self) -> f64 {
        ess_unchecked(&self.weights)
    }
}

fn uniform_weights(n: usize) -> Vec<f64> {
    alloc::vec![1.0 / n as f64; n]
}

/// Resampling scheme used by [`pf_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig {
    pub resampling: Resampling,
    /// Resample when ESS falls below this fraction of N.
    pub ess_fraction: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            resampling: Resampling::Multinomial,
            ess_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfStep {
    pub set: PointParticleSet,
    /// ESS after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    /// Every likelihood was zero; weights were reset to uniform.
    pub degenerate: bool,
}

/// `1 / Σ w²` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Unnormalized { sum });
    }
    Ok(ess_unchecked(weights))
}

fn ess_unchecked(weights: &[f64]) -> f64 {
    let first = weights[0];
    if weights.iter().all(|w| *w == first) {
        return weights.len() as f64;
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    (1.0 / sq).clamp(1.0, weights.len() as f64)
}

/// Draws N indices with replacement proportional to the weights and returns
/// the equally weighted result.
pub fn resample_multinomial<R: Rng + ?Sized>(set: &PointParticleSet, rng: &mut R) -> PointParticleSet {
    let cdf = cumulative(&set.weights);
    let n = set.len();
    let states = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            set.states[search(&cdf, u)].clone()
        })
        .collect();
    PointParticleSet {
        states,
        weights: uniform_weights(n),
    }
}

/// One uniform offset, N evenly spaced pointers into the CDF.
pub fn resample_systematic<R: Rng + ?Sized>(set: &PointParticleSet, rng: &mut R) -> PointParticleSet {
    let cdf = cumulative(&set.weights);
    let n = set.len();
    let offset: f64 = rng.random();
    let mut idx = 0;
    let states = (0..n)
        .map(|i| {
            let u = (i as f64 + offset) / n as f64;
            while idx + 1 < n && cdf[idx] <= u {
                idx += 1;
            }
            set.states[idx].clone()
        })
        .collect();
    PointParticleSet {
        states,
        weights: uniform_weights(n),
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

// first index with cdf[i] > u
fn search(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// One propagate / reweight / resample cycle with the transition prior as
/// proposal. Control input is taken as zero.
pub fn pf_step<Z, L, R>(
    set: &PointParticleSet,
    model: &LinearGaussianModel,
    likelihood: L,
    z: &Z,
    config: &PfConfig,
    rng: &mut R,
) -> Result<PfStep>
where
    Z: ?Sized,
    L: Fn(&Vector, &Z) -> f64,
    R: Rng + ?Sized,
{
    check_dim("pf_step state", model.state_dim(), set.states[0].len())?;
    let root = psd_sqrt(&model.q);
    let n = set.len();
    let mut states = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (x, w) in set.states.iter().zip(&set.weights) {
        let propagated = &model.f * x + &root * standard_normal_vector(x.len(), rng);
        let l = likelihood(&propagated, z);
        weights.push(if l.is_finite() && l > 0.0 { w * l } else { 0.0 });
        states.push(propagated);
    }

    let total: f64 = weights.iter().sum();
    let degenerate = !(total > 0.0) || !total.is_finite();
    if degenerate {
        log::warn!("pf_step: every likelihood vanished, falling back to uniform weights");
        weights = uniform_weights(n);
    } else {
        weights.iter_mut().for_each(|w| *w /= total);
    }

    let mut out = PointParticleSet { states, weights };
    let ess = out.effective_sample_size();
    let resampled = ess < config.ess_fraction * n as f64;
    if resampled {
        out = match config.resampling {
            Resampling::Multinomial => resample_multinomial(&out, rng),
            Resampling::Systematic => resample_systematic(&out, rng),
        };
    }
    Ok(PfStep {
        set: out,
        ess,
        resampled,
        degenerate,
    })
}

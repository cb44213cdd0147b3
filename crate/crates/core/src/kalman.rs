//! Linear-Gaussian Kalman filter.
//!
//! Used on its own as the single-target baseline and as the engine behind the
//! coupled per-hypothesis update in [`crate::gpf`].

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{cholesky_jittered, symmetrize, GaussianState};
use crate::{Matrix, Vector};

/// `x' = F x + B u + v`, `v ~ N(0, Q)`; `z = H x + w`, `w ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub f: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub h: Matrix,
    pub r: Matrix,
}

impl LinearGaussianModel {
    /// Model without control input. `B` is an `n x 0` matrix.
    pub fn new(f: Matrix, q: Matrix, h: Matrix, r: Matrix) -> Result<Self> {
        let n = f.nrows();
        Self::with_control(f, Matrix::zeros(n, 0), q, h, r)
    }

    pub fn with_control(f: Matrix, b: Matrix, q: Matrix, h: Matrix, r: Matrix) -> Result<Self> {
        let n = f.nrows();
        check_dim("model F columns", n, f.ncols())?;
        check_dim("model B rows", n, b.nrows())?;
        check_dim("model Q rows", n, q.nrows())?;
        check_dim("model Q columns", n, q.ncols())?;
        check_dim("model H columns", n, h.ncols())?;
        check_dim("model R rows", h.nrows(), r.nrows())?;
        check_dim("model R columns", h.nrows(), r.ncols())?;
        Ok(Self { f, b, q, h, r })
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Everything produced by a measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanUpdate {
    pub posterior: GaussianState,
    pub residual: Vector,
    pub innovation_cov: Matrix,
    pub gain: Matrix,
}

/// Time update with control input `u`.
pub fn kf_predict(
    prior: &GaussianState,
    model: &LinearGaussianModel,
    u: &Vector,
) -> Result<GaussianState> {
    check_dim("kf_predict control", model.control_dim(), u.len())?;
    let mut predicted = predict(prior, &model.f, &model.q)?;
    if !u.is_empty() {
        predicted.mean += &model.b * u;
    }
    Ok(predicted)
}

/// Time update with no control input.
pub fn predict(prior: &GaussianState, f: &Matrix, q: &Matrix) -> Result<GaussianState> {
    check_dim("predict transition", f.ncols(), prior.dim())?;
    check_dim("predict transition rows", f.nrows(), q.nrows())?;
    check_dim("predict process noise", q.nrows(), q.ncols())?;
    let mean = f * &prior.mean;
    let mut cov = f * &prior.cov * f.transpose() + q;
    symmetrize(&mut cov);
    Ok(GaussianState { mean, cov })
}

pub fn kf_update(
    predicted: &GaussianState,
    model: &LinearGaussianModel,
    z: &Vector,
) -> Result<KalmanUpdate> {
    update(predicted, &model.h, &model.r, z)
}

/// Measurement update against `z = H x + w`, `w ~ N(0, R)`.
///
/// The covariance is propagated in Joseph form,
/// `(I - K H) P (I - K H)ᵀ + K R Kᵀ`, which equals `(I - K H) P` for the
/// optimal gain but stays symmetric PSD under rounding.
pub fn update(predicted: &GaussianState, h: &Matrix, r: &Matrix, z: &Vector) -> Result<KalmanUpdate> {
    let n = predicted.dim();
    check_dim("update H columns", n, h.ncols())?;
    check_dim("update measurement", h.nrows(), z.len())?;
    check_dim("update R rows", h.nrows(), r.nrows())?;
    check_dim("update R columns", h.nrows(), r.ncols())?;

    let residual = z - h * &predicted.mean;
    let hp = h * &predicted.cov;
    let mut innovation_cov = &hp * h.transpose() + r;
    symmetrize(&mut innovation_cov);
    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ
    let gain = match cholesky_jittered(&innovation_cov, "innovation covariance") {
        Ok(chol) => chol.solve(&hp).transpose(),
        Err(_) => (pseudo_inverse_psd(&innovation_cov)? * &hp).transpose(),
    };

    let mean = &predicted.mean + &gain * &residual;
    let i_kh = Matrix::identity(n, n) - &gain * h;
    let mut cov = &i_kh * &predicted.cov * i_kh.transpose() + &gain * r * gain.transpose();
    symmetrize(&mut cov);

    Ok(KalmanUpdate {
        posterior: GaussianState { mean, cov },
        residual,
        innovation_cov,
        gain,
    })
}

/// Pseudo-inverse of a matrix that is PSD up to rounding. A noiseless
/// sensor looking at an already pinned-down state gives an `S` that is zero
/// up to rounding noise of either sign; its gain is zero along those
/// directions. A clearly indefinite matrix is still an error.
fn pseudo_inverse_psd(s: &Matrix) -> Result<Matrix> {
    const REL: f64 = 1e-9;
    const ABS: f64 = 1e-12;
    let eig = s.clone().symmetric_eigen();
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (REL * largest).max(ABS);
    if eig.eigenvalues.iter().any(|&v| v < -tol) {
        return Err(Error::Singular("innovation covariance"));
    }
    let inv = eig.eigenvalues.map(|v| if v > tol { 1.0 / v } else { 0.0 });
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

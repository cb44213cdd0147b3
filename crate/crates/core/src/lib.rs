//! Multi-target tracking with Gaussian particles.
//!
//! The belief over an unknown number of targets is a set of weighted Gaussian
//! hypotheses. Each weight is the probability that a target with that state
//! distribution exists, so the sum of weights estimates the target count. A
//! single aggregate measurement is explained by enumerating which hypotheses
//! are present and running a coupled Kalman update per hypothesis, which
//! sidesteps explicit data association.
//!
//! Alongside the Gaussian particle filter ([`gpf`]) the crate carries the
//! baselines it is compared against ([`kalman`], [`pf`]), the two sensor models
//! ([`sensors`]) and the scenario simulator with tracking metrics ([`sim`]).
//!
//! The crate is `no_std` and only needs `alloc`. Every randomized operation
//! takes an explicit [`rand::Rng`], so runs are reproducible from a seed.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod gpf;
pub mod kalman;
pub mod pf;
pub mod sensors;
pub mod sim;

pub use error::{Error, Result};
pub use gaussian::{GaussianParticle, GaussianState};
pub use geometry::Rect;

pub use nalgebra;
pub use rand;

/// Dynamic column vector used for states and measurements.
pub type Vector = nalgebra::DVector<f64>;
/// Dynamic matrix used for covariances and models.
pub type Matrix = nalgebra::DMatrix<f64>;

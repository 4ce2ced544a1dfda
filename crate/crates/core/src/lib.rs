//! Weighted denoising score matching on 1-D Gaussian mixtures.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the experiments use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod estimators;
pub mod net;
pub mod optim;
pub mod sampling;
pub mod scalar;
pub mod schedule;
pub mod seed;
pub mod stats;
pub mod train;
pub mod weighting;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mixture = density::GaussianMixture1D<f64>;
pub type Schedule = schedule::NoiseSchedule<f64>;

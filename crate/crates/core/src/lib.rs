//! Virtual sensing for structural dynamics with Gaussian process latent
//! force models (GPLFM).
//!
//! The crate combines a modal reduced-order structural model with Matérn 3/2
//! Gaussian process priors over the unknown modal forces, runs joint
//! input-state estimation with a Kalman filter and RTS smoother, and builds
//! on that to provide response reconstruction at uninstrumented locations,
//! leave-one-out validation, covariance-matching hyperparameter tuning, and
//! backward sequential sensor placement.

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod placement;
pub mod sensing;
pub mod signal;
pub mod structural;
pub mod tuning;

pub use error::{Error, Result};

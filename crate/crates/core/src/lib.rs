//! Goal-conditioned pedestrian trajectory prediction.
//!
//! A goal estimator retrieves similar training trajectories by soft-DTW over
//! velocities and clusters their endpoints. Future motion is then integrated
//! from a natural-gradient dynamical system `v = −P ∇‖p − goal‖`, where the
//! positive-definite field `P` is predicted by a small spatio-temporal
//! attention model. Every predicted path descends the goal attractor.

pub mod dynamics;
pub mod error;
pub mod eval;
pub mod goals;
pub mod model;
pub mod softdtw;
pub mod synth;
pub mod types;

pub use error::{Error, Result};

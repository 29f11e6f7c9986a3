//! Coverless image steganography with keyed deterministic DDIM.
//!
//! A secret image is inverted to noise by the deterministic DDIM ODE under a
//! private condition key, and that noise is sampled back to an image under a
//! public key. The result (the container) is an ordinary-looking sample of the
//! public key's distribution. The receiver inverts the container under the
//! public key and samples under the private key to recover the secret.
//!
//! Noise estimators are closed-form scores of isotropic Gaussian mixtures,
//! so every step is exactly computable and testable.

pub mod channel;
pub mod ddim;
pub mod error;
pub mod eval;
pub mod image;
pub mod prior;
pub mod schedule;
pub mod seed;
pub mod stego;
pub mod toy;

pub use ddim::{ddim_step, ode_solve, Direction, SolverConfig, StepSequence};
pub use error::{Error, Result};
pub use image::{ImageVector, Shape};
pub use prior::{ConditionKey, Estimator, EstimatorRegistry, GmmPrior};
pub use schedule::NoiseSchedule;
pub use stego::{hide, reveal, StegoJob, StegoResult};

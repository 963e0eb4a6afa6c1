//! Recovery of latent linear models from max-selected observations.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod gauss;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod net;
pub mod oracle;
pub mod recovery;
pub mod refine;
pub mod rng;
pub mod spectral;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

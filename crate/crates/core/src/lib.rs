//! Kernel extended dynamic mode decomposition with compactly supported
//! Wendland kernels.

pub mod analysis;
pub mod cholesky;
pub mod config;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod interpolation;
pub mod koopman;
pub mod poly;
pub mod spatial;
pub mod symmetric;
pub mod wendland;

pub use error::{Error, Result};

//! Deterministic training toolkit: seed-free structured weight
//! initialization, deterministic batch ordering, canonical parameter
//! digests, and a small CPU training harness that reproduces bit-identical
//! runs.

pub mod bases;
pub mod config;
pub mod error;
pub mod init;
pub mod ordering;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use params::ParameterSet;
pub use tensor::Tensor;

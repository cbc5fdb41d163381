//! Lottery image priors.
//!
//! Finds, evaluates and analyzes sparse subnetworks of untrained image-prior
//! networks via iterative magnitude pruning.

pub mod error;
pub mod lottery;
pub mod numerics;
pub mod persist;
pub mod priors;
pub mod pruning;
pub mod tasks;

mod serde_f64_inf;

pub use error::{Error, Result};

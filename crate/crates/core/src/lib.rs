//! Adversarial patch and patch-noise combo attacks against embedding-based
//! face verifiers, a threshold-gated smoothness regularizer, and a simulated
//! print-and-capture evaluation pipeline.

pub mod attacks;
pub mod error;
pub mod eval;
pub mod featnet;
pub mod imagecore;
pub mod physim;
pub mod rng;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};

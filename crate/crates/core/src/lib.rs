//! Evolving pixel-input game agents on top of a trainable convolutional
//! autoencoder.
//!
//! Raw RGB frames from a raycast health-gathering world are compressed by an
//! autoencoder whose 128-unit chokepoint feeds a small sigmoid controller.
//! Controller weights are optimized with CMA-ES while the autoencoder keeps
//! training between generations on frames it reconstructs poorly.

pub mod autoencoder;
pub mod cmaes;
pub mod controller;
pub mod environment;
pub mod harness;
pub(crate) mod codec;
pub mod error;
pub mod frame;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

//! Goal-conditioned visuomotor behavior cloning for catheter navigation in a
//! 2D vascular phantom: simulator, scripted expert, dataset tooling, frozen
//! vision encoders, a cross-attention policy, training, and evaluation.

pub mod config;
pub mod container;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod sim;
pub mod train;

pub use error::{Error, Result};

//! Feature transform layer, encoder-decoder networks, losses, synthetic data
//! and evaluation built on `ftl-tensor`.

pub mod datagen;
mod error;
pub mod evaluation;
pub mod network;
pub mod objectives;
pub mod transform;

pub use error::{Error, Result};

//! Encoder-decoder assemblies around the feature transform layer, the
//! invariant classifier head and checkpoint persistence.

mod checkpoint;
mod codec;
mod config;
mod head;
mod model;
mod params;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use codec::Autoencoder;
pub use config::{EncoderDecoderConfig, LayerSpec};
pub use head::{classify_invariants, ClassifierHead, HeadConfig};
pub use model::{Model, ModelLayout, NamedStats};
pub use params::{NamedArray, ParamSet};

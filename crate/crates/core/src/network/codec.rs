use ftl_tensor::Tensor;

use super::model::Model;
use crate::error::Result;
use crate::transform::{apply_per_row, build_block_transform, TransformFamily, TransformParams};

/// Frozen encoder-decoder whose code space carries a transform family.
pub trait Autoencoder: Sync {
    fn family(&self) -> &TransformFamily;
    fn encode(&self, x: &Tensor) -> Result<Tensor>;
    fn decode(&self, code: &Tensor) -> Result<Tensor>;

    /// `decode(F_θₙ · encode(xₙ))` with one θ per row.
    fn forward_transformed_rows(&self, x: &Tensor, params: &[TransformParams]) -> Result<Tensor> {
        let ops = params
            .iter()
            .map(|p| build_block_transform(self.family(), p))
            .collect::<Result<Vec<_>>>()?;
        self.decode(&apply_per_row(&ops, &self.encode(x)?)?)
    }
}

impl Autoencoder for Model {
    fn family(&self) -> &TransformFamily {
        Model::family(self)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Model::encode(self, x)
    }

    fn decode(&self, code: &Tensor) -> Result<Tensor> {
        Model::decode(self, code)
    }

    fn forward_transformed_rows(&self, x: &Tensor, params: &[TransformParams]) -> Result<Tensor> {
        Model::forward_transformed_rows(self, x, params)
    }
}

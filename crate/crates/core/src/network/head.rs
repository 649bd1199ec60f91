use ftl_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{NamedArray, ParamSet};
use crate::error::{Error, Result};
use crate::transform::InvariantSignature;

/// Shape of a classifier head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Two-layer MLP on a feature vector: standardize, dense, leaky ReLU, dense.
/// With `hidden == 0` the head is a single dense layer (a linear probe).
///
/// Standardization constants are fitted once on training features and are
/// not trained. Scores are unnormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    config: HeadConfig,
    params: ParamSet,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

const SLOPE: f64 = 0.1;

impl ClassifierHead {
    pub fn new(config: HeadConfig, seed: u64) -> Result<ClassifierHead> {
        let HeadConfig {
            input_dim,
            hidden,
            classes,
        } = config;
        if input_dim == 0 || classes < 2 {
            return Err(Error::Config(format!(
                "classifier head needs a positive input width and at least two classes, got {config:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        if hidden == 0 {
            params.push(NamedArray::glorot(
                "head.0.weight",
                vec![input_dim, classes],
                input_dim,
                classes,
                &mut rng,
            ));
            params.push(NamedArray::filled("head.0.bias", vec![classes], 0.0));
            return Ok(ClassifierHead {
                config,
                params,
                shift: vec![0.0; input_dim],
                scale: vec![1.0; input_dim],
            });
        }
        params.push(NamedArray::glorot(
            "head.0.weight",
            vec![input_dim, hidden],
            input_dim,
            hidden,
            &mut rng,
        ));
        params.push(NamedArray::filled("head.0.bias", vec![hidden], 0.0));
        params.push(NamedArray::glorot(
            "head.1.weight",
            vec![hidden, classes],
            hidden,
            classes,
            &mut rng,
        ));
        params.push(NamedArray::filled("head.1.bias", vec![classes], 0.0));
        Ok(ClassifierHead {
            config,
            params,
            shift: vec![0.0; input_dim],
            scale: vec![1.0; input_dim],
        })
    }

    /// Every weight zero: scores are identical for all classes.
    pub fn zeroed(config: HeadConfig) -> Result<ClassifierHead> {
        let mut h = ClassifierHead::new(config, 0)?;
        h.params
            .arrays
            .iter_mut()
            .for_each(|a| a.data.iter_mut().for_each(|v| *v = 0.0));
        Ok(h)
    }

    pub fn from_parts(
        config: HeadConfig,
        params: ParamSet,
        shift: Vec<f64>,
        scale: Vec<f64>,
    ) -> Result<ClassifierHead> {
        let reference = ClassifierHead::new(config, 0)?;
        let layout_ok = params.len() == reference.params.len()
            && params
                .arrays
                .iter()
                .zip(&reference.params.arrays)
                .all(|(a, b)| {
                    a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len()
                });
        if !layout_ok || shift.len() != config.input_dim || scale.len() != config.input_dim {
            return Err(Error::Corrupt(
                "classifier head arrays do not match its declared shape".into(),
            ));
        }
        Ok(ClassifierHead {
            config,
            params,
            shift,
            scale,
        })
    }

    /// Number of trainable arrays a head of this shape carries.
    pub fn array_count(config: HeadConfig) -> usize {
        if config.hidden == 0 {
            2
        } else {
            4
        }
    }

    pub fn config(&self) -> HeadConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn normalizer(&self) -> (&[f64], &[f64]) {
        (&self.shift, &self.scale)
    }

    /// Per-column mean and inverse standard deviation of `features: [N, D]`.
    pub fn fit_normalizer(&mut self, features: &Tensor) -> Result<()> {
        let d = self.check(features)?;
        let n = features.shape()[0] as f64;
        let mut mean = vec![0.0; d];
        for row in features.data().chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for row in features.data().chunks(d) {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        self.shift = mean;
        self.scale = var.iter().map(|v| 1.0 / v.sqrt().max(1e-8)).collect();
        Ok(())
    }

    fn check(&self, features: &Tensor) -> Result<usize> {
        let s = features.shape();
        if s.len() != 2 || s[1] != self.config.input_dim {
            return Err(Error::Dimension {
                context: "classifier head input width",
                expected: self.config.input_dim,
                got: *s.last().unwrap_or(&0),
            });
        }
        Ok(s[1])
    }

    /// Scores `[N, classes]` using the given parameter leaves.
    pub fn forward_with(&self, vars: &[Tensor], features: &Tensor) -> Result<Tensor> {
        let d = self.check(features)?;
        let n = features.shape()[0];
        let neg_shift = Tensor::new(self.shift.iter().map(|v| -v).collect(), &[d])?;
        let scale = Tensor::new(
            self.scale.iter().cycle().take(n * d).copied().collect(),
            &[n, d],
        )?;
        let z = features.add_row(&neg_shift)?.mul(&scale)?;
        if self.config.hidden == 0 {
            return Ok(z.matmul(&vars[0])?.add_row(&vars[1])?);
        }
        let h = z.matmul(&vars[0])?.add_row(&vars[1])?.leaky_relu(SLOPE);
        Ok(h.matmul(&vars[2])?.add_row(&vars[3])?)
    }

    /// Scores with frozen parameters.
    pub fn scores(&self, features: &Tensor) -> Result<Tensor> {
        self.forward_with(&self.params.tensors(false)?, features)
    }
}

/// Class scores for one invariant signature.
pub fn classify_invariants(
    head: &ClassifierHead,
    signature: &InvariantSignature,
) -> Result<Vec<f64>> {
    let n = signature.entries.len();
    if n != head.config.input_dim {
        return Err(Error::Dimension {
            context: "classifier head input width",
            expected: head.config.input_dim,
            got: n,
        });
    }
    Ok(head
        .scores(&Tensor::new(signature.entries.clone(), &[1, n])?)?
        .to_vec())
}

use ftl_tensor::{Adam, Tensor};
use rand::Rng;

use crate::error::{Error, Result};

/// A named, shaped block of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> NamedArray {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedArray {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, value: f64) -> NamedArray {
        let n = shape.iter().product();
        NamedArray::new(name, shape, vec![value; n])
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> NamedArray {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        NamedArray::new(
            name,
            shape,
            (0..n).map(|_| rng.gen_range(-limit..=limit)).collect(),
        )
    }
}

/// Ordered trainable arrays. The order is the layer order and is what
/// gradient and optimizer slots line up with.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    pub arrays: Vec<NamedArray>,
}

impl ParamSet {
    pub fn push(&mut self, a: NamedArray) {
        self.arrays.push(a);
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedArray> {
        self.arrays.iter_mut().find(|a| a.name == name)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.arrays.iter().map(|a| a.data.len()).collect()
    }

    pub fn total(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    /// Graph leaves for one forward pass. Trainable leaves collect gradients.
    pub fn tensors(&self, trainable: bool) -> Result<Vec<Tensor>> {
        self.arrays
            .iter()
            .map(|a| {
                let t = if trainable {
                    Tensor::param(a.data.clone(), &a.shape)
                } else {
                    Tensor::new(a.data.clone(), &a.shape)
                };
                t.map_err(Error::from)
            })
            .collect()
    }

    /// Adam update from the gradients accumulated on `vars`. Leaves that saw
    /// no gradient are treated as having a zero gradient.
    pub fn adam_step(&mut self, adam: &mut Adam, vars: &[Tensor]) -> Result<()> {
        if vars.len() != self.arrays.len() {
            return Err(Error::Dimension {
                context: "parameter leaves",
                expected: self.arrays.len(),
                got: vars.len(),
            });
        }
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .zip(&self.arrays)
            .map(|(v, a)| v.grad().unwrap_or_else(|| vec![0.0; a.data.len()]))
            .collect();
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut [f64]> = self
            .arrays
            .iter_mut()
            .map(|a| a.data.as_mut_slice())
            .collect();
        adam.step(&mut params, &grad_refs)?;
        Ok(())
    }
}

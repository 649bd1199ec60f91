use ftl_tensor::{BatchNormMode, RunningStats, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderDecoderConfig, LayerSpec};
use super::params::{NamedArray, ParamSet};
use crate::error::{Error, Result};
use crate::transform::{apply_per_row, build_block_transform, TransformFamily, TransformParams};

/// Batch-norm running statistics of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedStats {
    pub name: String,
    pub stats: RunningStats,
}

/// Which trainable arrays a layer owns, as `(name, shape, fan_in, fan_out)`,
/// and whether it keeps batch-norm statistics.
fn layer_layout(
    prefix: &str,
    index: usize,
    layer: &LayerSpec,
    input: &[usize],
) -> (
    Vec<(String, Vec<usize>, usize, usize)>,
    Option<(String, usize)>,
) {
    let name = |s: &str| format!("{prefix}.{index}.{s}");
    let in_flat: usize = input.iter().product();
    let (mut arrays, channels) = match *layer {
        LayerSpec::Dense { units, .. } => (
            vec![
                (name("weight"), vec![in_flat, units], in_flat, units),
                (name("bias"), vec![units], 0, 0),
            ],
            units,
        ),
        LayerSpec::Conv {
            channels, kernel, ..
        }
        | LayerSpec::UpsampleConv {
            channels, kernel, ..
        } => {
            let c_in = input[0];
            (
                vec![
                    (
                        name("weight"),
                        vec![channels, c_in, kernel, kernel],
                        c_in * kernel * kernel,
                        channels * kernel * kernel,
                    ),
                    (name("bias"), vec![channels], 0, 0),
                ],
                channels,
            )
        }
        LayerSpec::Unflatten { .. } => return (Vec::new(), None),
    };
    if layer.batchnorm() {
        arrays.push((name("bn_gamma"), vec![channels], 0, 0));
        arrays.push((name("bn_beta"), vec![channels], 0, 0));
        (arrays, Some((name("running"), channels)))
    } else {
        (arrays, None)
    }
}

fn stack_layout(
    prefix: &str,
    layers: &[LayerSpec],
    shapes: &[Vec<usize>],
) -> (
    Vec<(String, Vec<usize>, usize, usize)>,
    Vec<(String, usize)>,
) {
    let mut arrays = Vec::new();
    let mut stats = Vec::new();
    for (i, (l, input)) in layers.iter().zip(shapes).enumerate() {
        let (a, s) = layer_layout(prefix, i, l, input);
        arrays.extend(a);
        stats.extend(s);
    }
    (arrays, stats)
}

/// Encoder, feature transform layer and decoder with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: EncoderDecoderConfig,
    params: ParamSet,
    stats: Vec<NamedStats>,
    encoder_params: usize,
    encoder_stats: usize,
}

/// Declared array layout of a model: trainable shapes, then batch-norm
/// statistics as `(name, channels)`.
pub struct ModelLayout {
    pub params: Vec<(String, Vec<usize>)>,
    pub stats: Vec<(String, usize)>,
    pub encoder_params: usize,
    pub encoder_stats: usize,
}

impl Model {
    pub fn layout(config: &EncoderDecoderConfig) -> Result<ModelLayout> {
        config.validate()?;
        let (enc, enc_stats) =
            stack_layout("encoder", &config.encoder_layers, &config.encoder_shapes()?);
        let (dec, dec_stats) =
            stack_layout("decoder", &config.decoder_layers, &config.decoder_shapes()?);
        let (encoder_params, encoder_stats) = (enc.len(), enc_stats.len());
        Ok(ModelLayout {
            params: enc
                .into_iter()
                .chain(dec)
                .map(|(n, s, _, _)| (n, s))
                .collect(),
            stats: enc_stats.into_iter().chain(dec_stats).collect(),
            encoder_params,
            encoder_stats,
        })
    }

    /// Fresh model: Glorot-uniform weights, zero biases, unit batch-norm scale.
    pub fn new(config: EncoderDecoderConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc, enc_stats) =
            stack_layout("encoder", &config.encoder_layers, &config.encoder_shapes()?);
        let (dec, dec_stats) =
            stack_layout("decoder", &config.decoder_layers, &config.decoder_shapes()?);
        let encoder_params = enc.len();
        let encoder_stats = enc_stats.len();
        let mut params = ParamSet::default();
        for (name, shape, fan_in, fan_out) in enc.into_iter().chain(dec) {
            let a = if name.ends_with(".weight") {
                NamedArray::glorot(name, shape, fan_in, fan_out, &mut rng)
            } else if name.ends_with(".bn_gamma") {
                NamedArray::filled(name, shape, 1.0)
            } else {
                NamedArray::filled(name, shape, 0.0)
            };
            params.push(a);
        }
        let stats = enc_stats
            .into_iter()
            .chain(dec_stats)
            .map(|(name, c)| NamedStats {
                name,
                stats: RunningStats::new(c),
            })
            .collect();
        Ok(Model {
            config,
            params,
            stats,
            encoder_params,
            encoder_stats,
        })
    }

    /// Reassemble a model from stored arrays, checking them against the
    /// layout the config declares.
    pub fn from_parts(
        config: EncoderDecoderConfig,
        params: ParamSet,
        stats: Vec<NamedStats>,
    ) -> Result<Model> {
        let layout = Model::layout(&config)?;
        let names_ok = params.len() == layout.params.len()
            && params.arrays.iter().zip(&layout.params).all(|(a, (n, s))| {
                &a.name == n && &a.shape == s && a.data.len() == s.iter().product::<usize>()
            });
        let stats_ok = stats.len() == layout.stats.len()
            && stats.iter().zip(&layout.stats).all(|(s, (n, c))| {
                &s.name == n && s.stats.mean.len() == *c && s.stats.var.len() == *c
            });
        if !names_ok || !stats_ok {
            return Err(Error::Corrupt(format!(
                "parameter arrays do not match the configured architecture ({} arrays, {} statistics expected)",
                layout.params.len(),
                layout.stats.len()
            )));
        }
        Ok(Model {
            config,
            params,
            stats,
            encoder_params: layout.encoder_params,
            encoder_stats: layout.encoder_stats,
        })
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    pub fn family(&self) -> &TransformFamily {
        &self.config.family
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn stats(&self) -> &[NamedStats] {
        &self.stats
    }

    /// Graph leaves for every parameter, encoder first.
    pub fn vars(&self, trainable: bool) -> Result<Vec<Tensor>> {
        self.params.tensors(trainable)
    }

    fn check_images(&self, x: &Tensor) -> Result<usize> {
        let s = x.shape();
        if s.len() != self.config.input_shape.len() + 1 || s[1..] != self.config.input_shape[..] {
            let mut expected = vec![s.first().copied().unwrap_or(1)];
            expected.extend(&self.config.input_shape);
            return Err(Error::Shape {
                context: "encoder input",
                expected,
                got: s.to_vec(),
            });
        }
        Ok(s[0])
    }

    fn check_codes(&self, code: &Tensor) -> Result<usize> {
        let s = code.shape();
        let d = self.config.family.feature_dim();
        if s.len() != 2 || s[1] != d {
            return Err(Error::Shape {
                context: "decoder input",
                expected: vec![s.first().copied().unwrap_or(1), d],
                got: s.to_vec(),
            });
        }
        Ok(s[0])
    }

    /// `[N, feature_dim]` codes. Train mode uses and updates batch statistics.
    pub fn encode_with(
        &mut self,
        vars: &[Tensor],
        x: &Tensor,
        mode: BatchNormMode,
    ) -> Result<Tensor> {
        let mut stats = std::mem::take(&mut self.stats);
        let out = self.encode_raw(&mut stats, vars, x, mode);
        self.stats = stats;
        out
    }

    /// Images shaped `[N, ...input_shape]` in `(0, 1)`.
    pub fn decode_with(
        &mut self,
        vars: &[Tensor],
        code: &Tensor,
        mode: BatchNormMode,
    ) -> Result<Tensor> {
        let mut stats = std::mem::take(&mut self.stats);
        let out = self.decode_raw(&mut stats, vars, code, mode);
        self.stats = stats;
        out
    }

    fn encode_raw(
        &self,
        stats: &mut [NamedStats],
        vars: &[Tensor],
        x: &Tensor,
        mode: BatchNormMode,
    ) -> Result<Tensor> {
        let n = self.check_images(x)?;
        let shapes = self.config.encoder_shapes()?;
        let mut input_shape = vec![n];
        input_shape.extend(&shapes[0]);
        run_stack(
            &self.config.encoder_layers,
            &shapes,
            &vars[..self.encoder_params],
            &mut stats[..self.encoder_stats],
            x.reshape(&input_shape)?,
            self.config.leaky_slope,
            mode,
        )
    }

    fn decode_raw(
        &self,
        stats: &mut [NamedStats],
        vars: &[Tensor],
        code: &Tensor,
        mode: BatchNormMode,
    ) -> Result<Tensor> {
        let n = self.check_codes(code)?;
        let shapes = self.config.decoder_shapes()?;
        let y = run_stack(
            &self.config.decoder_layers,
            &shapes,
            &vars[self.encoder_params..],
            &mut stats[self.encoder_stats..],
            code.clone(),
            self.config.leaky_slope,
            mode,
        )?;
        let mut out = vec![n];
        out.extend(&self.config.input_shape);
        Ok(y.reshape(&out)?.sigmoid())
    }

    /// Eval-mode encoding with frozen parameters.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let vars = self.vars(false)?;
        // Eval mode never writes the statistics; the copy only satisfies the
        // shared batch-norm signature.
        self.encode_raw(&mut self.stats.clone(), &vars, x, BatchNormMode::Eval)
    }

    /// Eval-mode decoding with frozen parameters.
    pub fn decode(&self, code: &Tensor) -> Result<Tensor> {
        let vars = self.vars(false)?;
        self.decode_raw(&mut self.stats.clone(), &vars, code, BatchNormMode::Eval)
    }

    /// `decode(encode(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(x)?)
    }

    /// `decode(F_θ · encode(x))` with one θ for the whole batch.
    pub fn forward_transformed(&self, x: &Tensor, params: &TransformParams) -> Result<Tensor> {
        let op = build_block_transform(&self.config.family, params)?;
        self.decode(&op.apply(&self.encode(x)?)?)
    }

    /// `decode(F_θₙ · encode(xₙ))` with one θ per row.
    pub fn forward_transformed_rows(
        &self,
        x: &Tensor,
        params: &[TransformParams],
    ) -> Result<Tensor> {
        let code = self.encode(x)?;
        self.decode(&self.transform_rows(&code, params)?)
    }

    /// Apply a per-row θ to a code batch.
    pub fn transform_rows(&self, code: &Tensor, params: &[TransformParams]) -> Result<Tensor> {
        let ops = params
            .iter()
            .map(|p| build_block_transform(&self.config.family, p))
            .collect::<Result<Vec<_>>>()?;
        apply_per_row(&ops, code)
    }

    /// One Adam step from gradients accumulated on `vars`.
    pub fn adam_step(&mut self, adam: &mut ftl_tensor::Adam, vars: &[Tensor]) -> Result<()> {
        self.params.adam_step(adam, vars)
    }
}

/// Run a layer stack. `x` is `[N, ...shapes[0]]`.
fn run_stack(
    layers: &[LayerSpec],
    shapes: &[Vec<usize>],
    vars: &[Tensor],
    stats: &mut [NamedStats],
    mut x: Tensor,
    slope: f64,
    mode: BatchNormMode,
) -> Result<Tensor> {
    let n = x.shape()[0];
    let mut vi = 0;
    let mut si = 0;
    for (layer, input) in layers.iter().zip(shapes) {
        let with_batch = |shape: &[usize]| {
            let mut s = vec![n];
            s.extend(shape);
            s
        };
        x = match *layer {
            LayerSpec::Dense { .. } => {
                let flat: usize = input.iter().product();
                let y = x
                    .reshape(&[n, flat])?
                    .matmul(&vars[vi])?
                    .add_row(&vars[vi + 1])?;
                vi += 2;
                y
            }
            LayerSpec::Conv {
                stride, padding, ..
            } => {
                let y = x
                    .reshape(&with_batch(input))?
                    .conv2d(&vars[vi], stride, padding)?
                    .add_channel(&vars[vi + 1])?;
                vi += 2;
                y
            }
            LayerSpec::UpsampleConv {
                factor, padding, ..
            } => {
                let y = x
                    .reshape(&with_batch(input))?
                    .upsample_nearest(factor)?
                    .conv2d(&vars[vi], 1, padding)?
                    .add_channel(&vars[vi + 1])?;
                vi += 2;
                y
            }
            LayerSpec::Unflatten {
                channels,
                height,
                width,
            } => x.reshape(&with_batch(&[channels, height, width]))?,
        };
        if layer.batchnorm() {
            x = x.batchnorm(&vars[vi], &vars[vi + 1], &mut stats[si].stats, mode)?;
            vi += 2;
            si += 1;
        }
        if layer.activation() {
            x = x.leaky_relu(slope);
        }
    }
    debug_assert_eq!(vi, vars.len());
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_layout_counts() {
        let m = Model::new(EncoderDecoderConfig::tiny(), 0).unwrap();
        // enc: 64·16+16, bn 2·16, 16·6+6; dec: 6·16+16, bn 2·16, 16·64+64
        assert_eq!(
            m.params().total(),
            64 * 16 + 16 + 32 + 16 * 6 + 6 + 6 * 16 + 16 + 32 + 16 * 64 + 64
        );
        assert_eq!(m.stats().len(), 2);
    }

    #[test]
    fn wrong_input_shape() {
        let m = Model::new(EncoderDecoderConfig::tiny(), 0).unwrap();
        let err = m.encode(&Tensor::zeros(&[2, 7, 8]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
        assert!(m.decode(&Tensor::zeros(&[2, 5]).unwrap()).is_err());
    }
}

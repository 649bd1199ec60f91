use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::TransformFamily;

/// One layer of an encoder or decoder stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected; flattens its input first.
    Dense {
        units: usize,
        batchnorm: bool,
        activation: bool,
    },
    /// Cross-correlation with zero padding.
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        batchnorm: bool,
        activation: bool,
    },
    /// Nearest-neighbour upsampling followed by a stride-1 convolution.
    UpsampleConv {
        factor: usize,
        channels: usize,
        kernel: usize,
        padding: usize,
        batchnorm: bool,
        activation: bool,
    },
    /// Reinterpret a flat vector as a `[channels, height, width]` map.
    Unflatten {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl LayerSpec {
    pub fn dense(units: usize) -> LayerSpec {
        LayerSpec::Dense {
            units,
            batchnorm: true,
            activation: true,
        }
    }

    pub fn linear(units: usize) -> LayerSpec {
        LayerSpec::Dense {
            units,
            batchnorm: false,
            activation: false,
        }
    }

    pub fn batchnorm(&self) -> bool {
        match self {
            LayerSpec::Dense { batchnorm, .. }
            | LayerSpec::Conv { batchnorm, .. }
            | LayerSpec::UpsampleConv { batchnorm, .. } => *batchnorm,
            LayerSpec::Unflatten { .. } => false,
        }
    }

    pub fn activation(&self) -> bool {
        match self {
            LayerSpec::Dense { activation, .. }
            | LayerSpec::Conv { activation, .. }
            | LayerSpec::UpsampleConv { activation, .. } => *activation,
            LayerSpec::Unflatten { .. } => false,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(Error::Config(format!(
                    "{what} layer needs a [channels, height, width] input, got {input:?}"
                ))),
            }
        };
        let conv_out = |size: usize,
                        kernel: usize,
                        stride: usize,
                        padding: usize|
         -> Result<usize> {
            if kernel == 0 || stride == 0 || kernel > size + 2 * padding {
                return Err(Error::Config(format!(
                    "kernel {kernel} (stride {stride}, padding {padding}) does not fit input size {size}"
                )));
            }
            Ok((size + 2 * padding - kernel) / stride + 1)
        };
        match *self {
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return Err(Error::Config("dense layer needs at least one unit".into()));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv {
                channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (_, h, w) = spatial("conv")?;
                if channels == 0 {
                    return Err(Error::Config(
                        "conv layer needs at least one channel".into(),
                    ));
                }
                Ok(vec![
                    channels,
                    conv_out(h, kernel, stride, padding)?,
                    conv_out(w, kernel, stride, padding)?,
                ])
            }
            LayerSpec::UpsampleConv {
                factor,
                channels,
                kernel,
                padding,
                ..
            } => {
                let (_, h, w) = spatial("upsample_conv")?;
                if factor == 0 || channels == 0 {
                    return Err(Error::Config(
                        "upsample_conv needs positive factor and channels".into(),
                    ));
                }
                Ok(vec![
                    channels,
                    conv_out(h * factor, kernel, 1, padding)?,
                    conv_out(w * factor, kernel, 1, padding)?,
                ])
            }
            LayerSpec::Unflatten {
                channels,
                height,
                width,
            } => {
                if channels * height * width != flat || flat == 0 {
                    return Err(Error::Config(format!(
                        "cannot unflatten {flat} values into [{channels}, {height}, {width}]"
                    )));
                }
                Ok(vec![channels, height, width])
            }
        }
    }
}

/// Architecture of an encoder, feature transform layer and decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderDecoderConfig {
    /// `[height, width]` for grayscale or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub encoder_layers: Vec<LayerSpec>,
    pub decoder_layers: Vec<LayerSpec>,
    pub family: TransformFamily,
    pub leaky_slope: f64,
}

/// Per-sample shape of an image as the layers see it: always `[C, H, W]`.
pub(crate) fn image_chw(input_shape: &[usize]) -> Result<Vec<usize>> {
    match *input_shape {
        [h, w] if h > 0 && w > 0 => Ok(vec![1, h, w]),
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(vec![c, h, w]),
        _ => Err(Error::Config(format!(
            "input_shape must be [H, W] or [C, H, W], got {input_shape:?}"
        ))),
    }
}

fn chain(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for l in layers {
        let next = l.output_shape(shapes.last().expect("non-empty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl EncoderDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        let input = image_chw(&self.input_shape)?;
        let code = self.family.feature_dim();
        let (Some(last_enc), Some(last_dec)) =
            (self.encoder_layers.last(), self.decoder_layers.last())
        else {
            return Err(Error::Config(
                "encoder and decoder need at least one layer each".into(),
            ));
        };
        let enc = chain(&input, &self.encoder_layers)?;
        let enc_out: usize = enc.last().expect("non-empty").iter().product();
        if enc.last().expect("non-empty").len() != 1 || enc_out != code {
            return Err(Error::Config(format!(
                "encoder output {:?} must be a flat vector of width feature_dim = {code}",
                enc.last()
            )));
        }
        if last_enc.batchnorm() || last_enc.activation() {
            return Err(Error::Config(
                "the layer feeding the feature transform must be linear (no batchnorm or activation)".into(),
            ));
        }
        if matches!(self.decoder_layers[0], LayerSpec::Unflatten { .. }) {
            return Err(Error::Config(
                "the decoder must start with a parameterized layer".into(),
            ));
        }
        let dec = chain(&[code], &self.decoder_layers)?;
        let out = dec.last().expect("non-empty");
        let out_flat: usize = out.iter().product();
        let matches =
            out == &input || (out.len() == 1 && out_flat == input.iter().product::<usize>());
        if !matches {
            return Err(Error::Config(format!(
                "decoder output {out:?} does not match input shape {:?}",
                self.input_shape
            )));
        }
        if last_dec.batchnorm() || last_dec.activation() {
            return Err(Error::Config(
                "the final decoder layer feeds the sigmoid directly and takes no batchnorm or activation".into(),
            ));
        }
        Ok(())
    }

    pub fn encoder_shapes(&self) -> Result<Vec<Vec<usize>>> {
        chain(&image_chw(&self.input_shape)?, &self.encoder_layers)
    }

    pub fn decoder_shapes(&self) -> Result<Vec<Vec<usize>>> {
        chain(&[self.family.feature_dim()], &self.decoder_layers)
    }

    fn mlp(
        input_shape: Vec<usize>,
        hidden: usize,
        depth: usize,
        family: TransformFamily,
    ) -> EncoderDecoderConfig {
        let pixels: usize = input_shape.iter().product();
        let code = family.feature_dim();
        let mut encoder_layers: Vec<LayerSpec> =
            (0..depth - 1).map(|_| LayerSpec::dense(hidden)).collect();
        encoder_layers.push(LayerSpec::linear(code));
        let mut decoder_layers: Vec<LayerSpec> =
            (0..depth - 1).map(|_| LayerSpec::dense(hidden)).collect();
        decoder_layers.push(LayerSpec::linear(pixels));
        EncoderDecoderConfig {
            input_shape,
            encoder_layers,
            decoder_layers,
            family,
            leaky_slope: 0.1,
        }
    }

    /// 28×28 inputs, three 510-wide layers each way, 510-dim code.
    pub fn mnist_mlp() -> EncoderDecoderConfig {
        Self::mlp(vec![28, 28], 510, 3, TransformFamily::mnist())
    }

    /// 16×16 inputs, 256 hidden units, 30-dim code.
    pub fn desk_mlp() -> EncoderDecoderConfig {
        Self::mlp(vec![16, 16], 256, 3, TransformFamily::desk())
    }

    /// Strided conv encoder and upsample-conv decoder at 16×16.
    pub fn desk_conv() -> EncoderDecoderConfig {
        let conv = |channels| LayerSpec::Conv {
            channels,
            kernel: 3,
            stride: 2,
            padding: 1,
            batchnorm: true,
            activation: true,
        };
        let up = |channels, last: bool| LayerSpec::UpsampleConv {
            factor: 2,
            channels,
            kernel: 3,
            padding: 1,
            batchnorm: !last,
            activation: !last,
        };
        EncoderDecoderConfig {
            input_shape: vec![16, 16],
            encoder_layers: vec![conv(16), conv(32), LayerSpec::linear(30)],
            decoder_layers: vec![
                LayerSpec::dense(32 * 4 * 4),
                LayerSpec::Unflatten {
                    channels: 32,
                    height: 4,
                    width: 4,
                },
                up(16, false),
                up(1, true),
            ],
            family: TransformFamily::desk(),
            leaky_slope: 0.1,
        }
    }

    /// 8×8 inputs and a 6-dim code, small enough for full gradient checks.
    pub fn tiny() -> EncoderDecoderConfig {
        Self::mlp(vec![8, 8], 16, 2, TransformFamily::tiny())
    }

    pub fn preset(name: &str) -> Result<EncoderDecoderConfig> {
        match name {
            "mnist-mlp" => Ok(Self::mnist_mlp()),
            "desk-mlp" => Ok(Self::desk_mlp()),
            "desk-conv" => Ok(Self::desk_conv()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!(
                "unknown model preset {other:?} (expected mnist-mlp, desk-mlp, desk-conv or tiny)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["mnist-mlp", "desk-mlp", "desk-conv", "tiny"] {
            EncoderDecoderConfig::preset(name)
                .unwrap()
                .validate()
                .unwrap();
        }
        assert!(EncoderDecoderConfig::preset("huge").is_err());
    }

    #[test]
    fn conv_preset_shapes() {
        let c = EncoderDecoderConfig::desk_conv();
        let enc = c.encoder_shapes().unwrap();
        assert_eq!(
            enc,
            vec![vec![1, 16, 16], vec![16, 8, 8], vec![32, 4, 4], vec![30]]
        );
        let dec = c.decoder_shapes().unwrap();
        assert_eq!(dec.last().unwrap(), &vec![1, 16, 16]);
    }

    #[test]
    fn rejects_nonlinear_code_layer() {
        let mut c = EncoderDecoderConfig::tiny();
        *c.encoder_layers.last_mut().unwrap() = LayerSpec::dense(6);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = EncoderDecoderConfig::tiny();
        *c.encoder_layers.last_mut().unwrap() = LayerSpec::linear(7);
        assert!(c.validate().is_err());
        let mut c = EncoderDecoderConfig::tiny();
        *c.decoder_layers.last_mut().unwrap() = LayerSpec::linear(63);
        assert!(c.validate().is_err());
    }
}

//! Neural-network building blocks: activations, batch normalization,
//! convolution, nearest-neighbour upsampling and the fused loss kernels.

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::ops::Op;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
/// Weight kept by the running statistics on each training update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Exponential moving averages used by batch normalization in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub(crate) struct BnSaved {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    channels: usize,
    inner: usize,
    mode: BatchNormMode,
}

/// `(channels, inner)` for `[N, D]` or `[N, C, H, W]`.
fn bn_layout(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [_, d] => Some((*d, 1)),
        [_, c, h, w] => Some((*c, h * w)),
        _ => None,
    }
}

pub(crate) fn batchnorm_backward(
    g: &[f64],
    gamma: &[f64],
    s: &BnSaved,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = s.channels;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut sum_dxhat = vec![0.0; c];
    let mut sum_dxhat_xhat = vec![0.0; c];
    for (i, chunk) in g.chunks(s.inner).enumerate() {
        let ch = i % c;
        let base = i * s.inner;
        for (j, &gv) in chunk.iter().enumerate() {
            let xh = s.xhat[base + j];
            dgamma[ch] += gv * xh;
            dbeta[ch] += gv;
            let dxh = gv * gamma[ch];
            sum_dxhat[ch] += dxh;
            sum_dxhat_xhat[ch] += dxh * xh;
        }
    }
    let count = (g.len() / c) as f64;
    let mut dx = vec![0.0; g.len()];
    for (i, chunk) in dx.chunks_mut(s.inner).enumerate() {
        let ch = i % c;
        let base = i * s.inner;
        for (j, d) in chunk.iter_mut().enumerate() {
            let dxh = g[base + j] * gamma[ch];
            *d = match s.mode {
                BatchNormMode::Eval => dxh * s.inv_std[ch],
                BatchNormMode::Train => {
                    s.inv_std[ch] / count
                        * (count * dxh - sum_dxhat[ch] - s.xhat[base + j] * sum_dxhat_xhat[ch])
                }
            };
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn gram_backward(
    g: &[f64],
    x: &Tensor,
    offset: usize,
    reps: usize,
    dim: usize,
) -> Vec<f64> {
    let d = *x.shape().last().expect("rank >= 1");
    let pairs = reps * (reps + 1) / 2;
    let mut gx = vec![0.0; x.numel()];
    for ((xrow, gxrow), grow) in x
        .data()
        .chunks(d)
        .zip(gx.chunks_mut(d))
        .zip(g.chunks(pairs))
    {
        let mut p = 0;
        for i in 0..reps {
            for j in i..reps {
                let gv = grow[p];
                p += 1;
                let (oi, oj) = (offset + i * dim, offset + j * dim);
                for c in 0..dim {
                    gxrow[oi + c] += gv * xrow[oj + c];
                    gxrow[oj + c] += gv * xrow[oi + c];
                }
            }
        }
    }
    gx
}

impl Tensor {
    /// `max(x, slope·x)`; the gradient at 0 takes the positive branch.
    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::LeakyRelu {
                x: self.clone(),
                slope,
            },
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Sigmoid(self.clone()))
    }

    /// Batch normalization over `[N, D]` (per column) or `[N, C, H, W]`
    /// (per channel). Train mode normalizes with batch statistics and folds
    /// them into `running`; eval mode uses `running` as-is.
    pub fn batchnorm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        running: &mut RunningStats,
        mode: BatchNormMode,
    ) -> Result<Tensor> {
        let (c, inner) = bn_layout(self.shape())
            .ok_or_else(|| TensorError::dim("batchnorm", self.shape(), gamma.shape()))?;
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(TensorError::dim("batchnorm", self.shape(), gamma.shape()));
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(TensorError::dim(
                "batchnorm",
                self.shape(),
                &[running.mean.len()],
            ));
        }
        let n = self.shape()[0];
        let count = n * inner;
        let x = self.data();

        let (mean, var) = match mode {
            BatchNormMode::Train => {
                if n < 2 {
                    return Err(TensorError::DegenerateBatch(n));
                }
                let mut mean = vec![0.0; c];
                for (i, chunk) in x.chunks(inner).enumerate() {
                    mean[i % c] += chunk.iter().sum::<f64>();
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0; c];
                for (i, chunk) in x.chunks(inner).enumerate() {
                    let m = mean[i % c];
                    var[i % c] += chunk.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                }
                var.iter_mut().for_each(|v| *v /= count as f64);
                let unbias = count as f64 / (count - 1) as f64;
                for ch in 0..c {
                    running.mean[ch] =
                        BN_MOMENTUM * running.mean[ch] + (1.0 - BN_MOMENTUM) * mean[ch];
                    running.var[ch] =
                        BN_MOMENTUM * running.var[ch] + (1.0 - BN_MOMENTUM) * var[ch] * unbias;
                }
                (mean, var)
            }
            BatchNormMode::Eval => (running.mean.clone(), running.var.clone()),
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for (i, chunk) in x.chunks(inner).enumerate() {
            let ch = i % c;
            for (j, &v) in chunk.iter().enumerate() {
                let xh = (v - mean[ch]) * inv_std[ch];
                xhat[i * inner + j] = xh;
                out[i * inner + j] = gamma.data()[ch] * xh + beta.data()[ch];
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            Op::BatchNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                saved: BnSaved {
                    xhat,
                    inv_std,
                    channels: c,
                    inner,
                    mode,
                },
            },
        ))
    }

    /// Cross-correlation of `[N, C, H, W]` with `[K, C, h, w]` under zero
    /// padding. Output is `[N, K, ⌊(H+2p−h)/s⌋+1, ⌊(W+2p−w)/s⌋+1]`.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let (si, sk) = (self.shape(), kernel.shape());
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] {
            return Err(TensorError::dim("conv2d", si, sk));
        }
        if stride == 0 {
            return Err(TensorError::param("conv2d", "stride must be positive"));
        }
        let (h, w) = (si[2], si[3]);
        let (kh, kw) = (sk[2], sk[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::dim("conv2d", si, sk));
        }
        let geom = ConvGeom {
            n: si[0],
            c: si[1],
            h,
            w,
            k: sk[0],
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let data = kernels::conv2d_forward(self.data(), kernel.data(), &geom);
        Ok(Tensor::from_op(
            data,
            vec![geom.n, geom.k, geom.oh, geom.ow],
            Op::Conv2d {
                input: self.clone(),
                kernel: kernel.clone(),
                geom,
            },
        ))
    }

    /// Replicates each pixel of `[N, C, H, W]` into a `factor × factor` block.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor> {
        if factor == 0 {
            return Err(TensorError::param(
                "upsample_nearest",
                "factor must be at least 1",
            ));
        }
        let s = self.shape();
        if s.len() != 4 {
            return Err(TensorError::dim("upsample_nearest", s, &[0, 0, 0, 0]));
        }
        let data = kernels::upsample_forward(self.data(), s[0] * s[1], s[2], s[3], factor);
        Ok(Tensor::from_op(
            data,
            vec![s[0], s[1], s[2] * factor, s[3] * factor],
            Op::Upsample {
                x: self.clone(),
                factor,
            },
        ))
    }

    /// Mean softmax cross-entropy of `[N, K]` scores against class indices.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(TensorError::dim(
                "softmax_cross_entropy",
                s,
                &[labels.len()],
            ));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::param(
                "softmax_cross_entropy",
                format!("label {bad} out of range for {k} classes"),
            ));
        }
        let mut probs = Vec::with_capacity(self.numel());
        let mut loss = 0.0;
        for (row, &l) in self.data().chunks(k).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() + max - row[l];
            probs.extend(exps.iter().map(|e| e / z));
        }
        Ok(Tensor::from_op(
            vec![loss / labels.len() as f64],
            vec![1],
            Op::SoftmaxXent {
                scores: self.clone(),
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Upper-triangular Gram entries among `reps` consecutive `dim`-wide
    /// chunks starting at `offset` on the last axis of `[N, D]`.
    ///
    /// Output is `[N, reps·(reps+1)/2]` ordered `(0,0), (0,1), …, (0,r−1),
    /// (1,1), …`.
    pub fn gram_upper(&self, offset: usize, reps: usize, dim: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || reps == 0 || dim == 0 || offset + reps * dim > s[1] {
            return Err(TensorError::dim("gram_upper", s, &[offset + reps * dim]));
        }
        let d = s[1];
        let pairs = reps * (reps + 1) / 2;
        let mut data = Vec::with_capacity(s[0] * pairs);
        for row in self.data().chunks(d) {
            for i in 0..reps {
                let a = &row[offset + i * dim..offset + (i + 1) * dim];
                for j in i..reps {
                    let b = &row[offset + j * dim..offset + (j + 1) * dim];
                    data.push(a.iter().zip(b).map(|(x, y)| x * y).sum());
                }
            }
        }
        Ok(Tensor::from_op(
            data,
            vec![s[0], pairs],
            Op::GramUpper {
                x: self.clone(),
                offset,
                reps,
                dim,
            },
        ))
    }

    /// `Σᵢ aᵢ·ln(oᵢ) + bᵢ·ln(1 − oᵢ)` with terms whose coefficient is zero
    /// skipped, so `0·ln 0` contributes nothing.
    pub fn weighted_log_pair(&self, a: &[f64], b: &[f64]) -> Result<Tensor> {
        if a.len() != self.numel() || b.len() != self.numel() {
            return Err(TensorError::dim(
                "weighted_log_pair",
                self.shape(),
                &[a.len(), b.len()],
            ));
        }
        let mut total = 0.0;
        for ((&o, &ai), &bi) in self.data().iter().zip(a).zip(b) {
            if ai != 0.0 {
                total += ai * o.ln();
            }
            if bi != 0.0 {
                total += bi * (1.0 - o).ln();
            }
        }
        Ok(Tensor::from_op(
            vec![total],
            vec![1],
            Op::LogPair {
                o: self.clone(),
                a: a.to_vec(),
                b: b.to_vec(),
            },
        ))
    }
}

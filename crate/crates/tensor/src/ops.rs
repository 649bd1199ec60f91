use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// How a tensor was produced. Holds the parents and whatever the backward
/// rule needs from the forward pass.
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    AddScalar(Tensor),
    MulScalar(Tensor, f64),
    Abs(Tensor),
    Sqrt(Tensor),
    Ln(Tensor),
    Sum(Tensor),
    Mean(Tensor),
    Reshape(Tensor),
    MatMul {
        a: Tensor,
        b: Tensor,
        m: usize,
        k: usize,
        n: usize,
    },
    AddRow {
        x: Tensor,
        bias: Tensor,
    },
    AddChannel {
        x: Tensor,
        bias: Tensor,
    },
    Narrow {
        x: Tensor,
        offset: usize,
        len: usize,
    },
    Concat(Vec<Tensor>),
    LeakyRelu {
        x: Tensor,
        slope: f64,
    },
    Sigmoid(Tensor),
    BatchNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        saved: crate::nn::BnSaved,
    },
    Conv2d {
        input: Tensor,
        kernel: Tensor,
        geom: ConvGeom,
    },
    Upsample {
        x: Tensor,
        factor: usize,
    },
    SoftmaxXent {
        scores: Tensor,
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
    GramUpper {
        x: Tensor,
        offset: usize,
        reps: usize,
        dim: usize,
    },
    LogPair {
        o: Tensor,
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![a, b],
            AddScalar(x)
            | MulScalar(x, _)
            | Abs(x)
            | Sqrt(x)
            | Ln(x)
            | Sum(x)
            | Mean(x)
            | Reshape(x)
            | Sigmoid(x) => vec![x],
            MatMul { a, b, .. } => vec![a, b],
            AddRow { x, bias } | AddChannel { x, bias } => vec![x, bias],
            Narrow { x, .. } | LeakyRelu { x, .. } | Upsample { x, .. } | GramUpper { x, .. } => {
                vec![x]
            }
            Concat(parts) => parts.iter().collect(),
            BatchNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Conv2d { input, kernel, .. } => vec![input, kernel],
            SoftmaxXent { scores, .. } => vec![scores],
            LogPair { o, .. } => vec![o],
        }
    }

    /// Gradients for each parent given the output gradient `g`.
    pub(crate) fn backward<'a>(&'a self, out: &Tensor, g: &[f64]) -> Vec<(&'a Tensor, Vec<f64>)> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) => vec![(a, g.to_vec()), (b, g.to_vec())],
            Sub(a, b) => vec![(a, g.to_vec()), (b, g.iter().map(|v| -v).collect())],
            Mul(a, b) => vec![
                (a, zip_map(g, b.data(), |g, b| g * b)),
                (b, zip_map(g, a.data(), |g, a| g * a)),
            ],
            Div(a, b) => {
                let ga = zip_map(g, b.data(), |g, b| g / b);
                let gb = g
                    .iter()
                    .zip(a.data())
                    .zip(b.data())
                    .map(|((g, a), b)| -g * a / (b * b))
                    .collect();
                vec![(a, ga), (b, gb)]
            }
            AddScalar(x) => vec![(x, g.to_vec())],
            MulScalar(x, s) => vec![(x, g.iter().map(|v| v * s).collect())],
            Abs(x) => vec![(
                x,
                zip_map(g, x.data(), |g, x| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                }),
            )],
            Sqrt(x) => vec![(x, zip_map(g, out.data(), |g, y| g * 0.5 / y))],
            Ln(x) => vec![(x, zip_map(g, x.data(), |g, x| g / x))],
            Sum(x) => vec![(x, vec![g[0]; x.numel()])],
            Mean(x) => vec![(x, vec![g[0] / x.numel() as f64; x.numel()])],
            Reshape(x) => vec![(x, g.to_vec())],
            MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let bt = kernels::transpose(b.data(), k, n);
                let ga = kernels::matmul(g, &bt, m, n, k);
                let at = kernels::transpose(a.data(), m, k);
                let gb = kernels::matmul(&at, g, k, m, n);
                vec![(a, ga), (b, gb)]
            }
            AddRow { x, bias } => {
                let d = bias.numel();
                let mut gb = vec![0.0; d];
                for row in g.chunks(d) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                vec![(x, g.to_vec()), (bias, gb)]
            }
            AddChannel { x, bias } => {
                let c = bias.numel();
                let inner = x.shape()[2] * x.shape()[3];
                let mut gb = vec![0.0; c];
                for (i, chunk) in g.chunks(inner).enumerate() {
                    gb[i % c] += chunk.iter().sum::<f64>();
                }
                vec![(x, g.to_vec()), (bias, gb)]
            }
            Narrow { x, offset, len } => {
                let d = *x.shape().last().expect("rank >= 1");
                let mut gx = vec![0.0; x.numel()];
                for (row, grow) in gx.chunks_mut(d).zip(g.chunks(*len)) {
                    row[*offset..offset + len].copy_from_slice(grow);
                }
                vec![(x, gx)]
            }
            Concat(parts) => {
                let total = *out.shape().last().expect("rank >= 1");
                let rows = out.numel() / total;
                let mut offset = 0;
                let mut grads = Vec::with_capacity(parts.len());
                for p in parts {
                    let d = *p.shape().last().expect("rank >= 1");
                    let mut gp = Vec::with_capacity(p.numel());
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + d]);
                    }
                    offset += d;
                    grads.push((p, gp));
                }
                grads
            }
            LeakyRelu { x, slope } => vec![(
                x,
                zip_map(g, x.data(), |g, x| if x >= 0.0 { g } else { g * slope }),
            )],
            Sigmoid(x) => vec![(x, zip_map(g, out.data(), |g, y| g * y * (1.0 - y)))],
            BatchNorm {
                x,
                gamma,
                beta,
                saved,
            } => {
                let (gx, gg, gbeta) = crate::nn::batchnorm_backward(g, gamma.data(), saved);
                vec![(x, gx), (gamma, gg), (beta, gbeta)]
            }
            Conv2d {
                input,
                kernel,
                geom,
            } => {
                let gi = kernels::conv2d_backward_input(g, kernel.data(), geom);
                let gk = kernels::conv2d_backward_kernel(g, input.data(), geom);
                vec![(input, gi), (kernel, gk)]
            }
            Upsample { x, factor } => {
                let s = x.shape();
                let planes = s[0] * s[1];
                vec![(
                    x,
                    kernels::upsample_backward(g, planes, s[2], s[3], *factor),
                )]
            }
            SoftmaxXent {
                scores,
                probs,
                labels,
            } => {
                let k = scores.shape()[1];
                let scale = g[0] / labels.len() as f64;
                let mut gs: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gs[i * k + l] -= scale;
                }
                vec![(scores, gs)]
            }
            GramUpper {
                x,
                offset,
                reps,
                dim,
            } => {
                vec![(x, crate::nn::gram_backward(g, x, *offset, *reps, *dim))]
            }
            LogPair { o, a, b } => {
                let go = o
                    .data()
                    .iter()
                    .zip(a)
                    .zip(b)
                    .map(|((&o, &a), &b)| {
                        let mut d = 0.0;
                        if a != 0.0 {
                            d += a / o;
                        }
                        if b != 0.0 {
                            d -= b / (1.0 - o);
                        }
                        g[0] * d
                    })
                    .collect();
                vec![(o, go)]
            }
        }
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a + b);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::Add(self.clone(), other.clone()),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a - b);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::Sub(self.clone(), other.clone()),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a * b);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    /// Elementwise quotient.
    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("div", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a / b);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::Div(self.clone(), other.clone()),
        ))
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + s).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::AddScalar(self.clone()))
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * s).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::MulScalar(self.clone(), s))
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    /// Elementwise absolute value; the subgradient at 0 is 0.
    pub fn abs(&self) -> Tensor {
        let data = self.data().iter().map(|v| v.abs()).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Abs(self.clone()))
    }

    pub fn square(&self) -> Tensor {
        self.mul(self).expect("same shape")
    }

    pub fn sqrt(&self) -> Tensor {
        let data = self.data().iter().map(|v| v.sqrt()).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Sqrt(self.clone()))
    }

    /// Natural logarithm.
    pub fn ln(&self) -> Tensor {
        let data = self.data().iter().map(|v| v.ln()).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Ln(self.clone()))
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![1], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(
            vec![s / self.numel() as f64],
            vec![1],
            Op::Mean(self.clone()),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(TensorError::dim("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.data(), other.data(), m, k, n);
        Ok(Tensor::from_op(
            data,
            vec![m, n],
            Op::MatMul {
                a: self.clone(),
                b: other.clone(),
                m,
                k,
                n,
            },
        ))
    }

    /// Adds a `[D]` bias to every row of a tensor whose last axis is `D`.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let d = *self.shape().last().expect("rank >= 1");
        if bias.shape() != [d] {
            return Err(TensorError::dim("add_row", self.shape(), bias.shape()));
        }
        let mut data = self.data().to_vec();
        for row in data.chunks_mut(d) {
            row.iter_mut().zip(bias.data()).for_each(|(a, b)| *a += b);
        }
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::AddRow {
                x: self.clone(),
                bias: bias.clone(),
            },
        ))
    }

    /// Adds a per-channel `[C]` bias to an `[N, C, H, W]` tensor.
    pub fn add_channel(&self, bias: &Tensor) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 || bias.shape() != [s[1]] {
            return Err(TensorError::dim("add_channel", s, bias.shape()));
        }
        let inner = s[2] * s[3];
        let mut data = self.data().to_vec();
        for (i, chunk) in data.chunks_mut(inner).enumerate() {
            let b = bias.data()[i % s[1]];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        Ok(Tensor::from_op(
            data,
            s.to_vec(),
            Op::AddChannel {
                x: self.clone(),
                bias: bias.clone(),
            },
        ))
    }

    /// Slice `[offset, offset + len)` of the last axis.
    pub fn narrow(&self, offset: usize, len: usize) -> Result<Tensor> {
        let d = *self.shape().last().expect("rank >= 1");
        if len == 0 || offset + len > d {
            return Err(TensorError::param(
                "narrow",
                format!(
                    "range {offset}..{} outside last axis of {:?}",
                    offset + len,
                    self.shape()
                ),
            ));
        }
        let data = self
            .data()
            .chunks(d)
            .flat_map(|row| row[offset..offset + len].iter().copied())
            .collect();
        let mut shape = self.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        Ok(Tensor::from_op(
            data,
            shape,
            Op::Narrow {
                x: self.clone(),
                offset,
                len,
            },
        ))
    }

    /// Concatenate along the last axis; all leading axes must agree.
    pub fn concat(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::param("concat", "no tensors"))?;
        let lead = &first.shape()[..first.shape().len() - 1];
        for p in parts {
            if &p.shape()[..p.shape().len() - 1] != lead {
                return Err(TensorError::dim("concat", first.shape(), p.shape()));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(Tensor::from_op(data, shape, Op::Concat(parts.to_vec())))
    }
}

//! Raw loops behind the differentiable ops. Work is split by output row so
//! the thread count never changes the summation order.

use rayon::prelude::*;

const PAR_WORK: usize = 1 << 16;

/// `c[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let row = |(i, crow): (usize, &mut [f64])| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n >= PAR_WORK && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Input pixel feeding output `(oy, ox)` through kernel tap `(i, j)`.
    #[inline]
    fn src(&self, oy: usize, ox: usize, i: usize, j: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + i) as isize - self.pad as isize;
        let x = (ox * self.stride + j) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    let plane = g.oh * g.ow;
    let mut out = vec![0.0; g.n * g.k * plane];
    let body = |(idx, oplane): (usize, &mut [f64])| {
        let (n, o) = (idx / g.k, idx % g.k);
        for c in 0..g.c {
            let ibase = (n * g.c + c) * g.h * g.w;
            let kbase = (o * g.c + c) * g.kh * g.kw;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = 0.0;
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            if let Some((y, x)) = g.src(oy, ox, i, j) {
                                acc += input[ibase + y * g.w + x] * kernel[kbase + i * g.kw + j];
                            }
                        }
                    }
                    oplane[oy * g.ow + ox] += acc;
                }
            }
        }
    };
    if out.len() * g.c * g.kh * g.kw >= PAR_WORK {
        out.par_chunks_mut(plane).enumerate().for_each(body);
    } else {
        out.chunks_mut(plane).enumerate().for_each(body);
    }
    out
}

pub(crate) fn conv2d_backward_input(grad: &[f64], kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    let iplane = g.h * g.w;
    let mut din = vec![0.0; g.n * g.c * iplane];
    let body = |(idx, dplane): (usize, &mut [f64])| {
        let (n, c) = (idx / g.c, idx % g.c);
        for o in 0..g.k {
            let gbase = (n * g.k + o) * g.oh * g.ow;
            let kbase = (o * g.c + c) * g.kh * g.kw;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let gv = grad[gbase + oy * g.ow + ox];
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            if let Some((y, x)) = g.src(oy, ox, i, j) {
                                dplane[y * g.w + x] += gv * kernel[kbase + i * g.kw + j];
                            }
                        }
                    }
                }
            }
        }
    };
    if din.len() * g.k * g.kh * g.kw >= PAR_WORK {
        din.par_chunks_mut(iplane).enumerate().for_each(body);
    } else {
        din.chunks_mut(iplane).enumerate().for_each(body);
    }
    din
}

pub(crate) fn conv2d_backward_kernel(grad: &[f64], input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let kplane = g.kh * g.kw;
    let mut dk = vec![0.0; g.k * g.c * kplane];
    let body = |(idx, dplane): (usize, &mut [f64])| {
        let (o, c) = (idx / g.c, idx % g.c);
        for n in 0..g.n {
            let gbase = (n * g.k + o) * g.oh * g.ow;
            let ibase = (n * g.c + c) * g.h * g.w;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let gv = grad[gbase + oy * g.ow + ox];
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            if let Some((y, x)) = g.src(oy, ox, i, j) {
                                dplane[i * g.kw + j] += gv * input[ibase + y * g.w + x];
                            }
                        }
                    }
                }
            }
        }
    };
    if g.n * g.k * g.c * g.oh * g.ow * kplane >= PAR_WORK {
        dk.par_chunks_mut(kplane).enumerate().for_each(body);
    } else {
        dk.chunks_mut(kplane).enumerate().for_each(body);
    }
    dk
}

pub(crate) fn upsample_forward(x: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        for y in 0..oh {
            for xx in 0..ow {
                out[(p * oh + y) * ow + xx] = x[(p * h + y / f) * w + xx / f];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(
    g: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    f: usize,
) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        for y in 0..oh {
            for xx in 0..ow {
                dx[(p * h + y / f) * w + xx / f] += g[(p * oh + y) * ow + xx];
            }
        }
    }
    dx
}

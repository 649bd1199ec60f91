//! Central finite-difference gradient checking.
//!
//! The error measure is `max|analytic − numeric| / max(max|analytic|,
//! max|numeric|)` over all input entries, which stays meaningful when some
//! individual derivatives are near zero.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// One entry per input.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compare the analytic gradient of the scalar `f(inputs)` against central
/// differences with step `h` for every entry of every input.
pub fn check<F>(f: F, inputs: &[Vec<f64>], shapes: &[Vec<usize>], h: f64) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let params: Vec<Tensor> = inputs
        .iter()
        .zip(shapes)
        .map(|(d, s)| Tensor::param(d.clone(), s))
        .collect::<Result<_>>()?;
    let loss = f(&params)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |which: usize, idx: usize, delta: f64| -> Result<f64> {
        let ts: Vec<Tensor> = inputs
            .iter()
            .zip(shapes)
            .enumerate()
            .map(|(i, (d, s))| {
                let mut d = d.clone();
                if i == which {
                    d[idx] += delta;
                }
                Tensor::new(d, s)
            })
            .collect::<Result<_>>()?;
        Ok(f(&ts)?.item())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let mut g = Vec::with_capacity(input.len());
        for j in 0..input.len() {
            g.push((eval(i, j, h)? - eval(i, j, -h)?) / (2.0 * h));
        }
        numeric.push(g);
    }
    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .collect();
    Ok(GradCheck {
        relative_errors,
        analytic,
        numeric,
    })
}

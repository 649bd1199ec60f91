//! Reconstruction, invariance and classification losses.

use ftl_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{invariant_signature, TransformFamily};

/// Blend between SSIM and L1 used for face-style training.
pub const FACE_ALPHA: f64 = 0.85;
/// Weight on the classification term of the combined objective.
pub const CLASSIFICATION_WEIGHT: f64 = 10.0;
/// Default coefficient of the invariance regularizer.
pub const DEFAULT_REGULARIZER_WEIGHT: f64 = 0.1;

fn same_shape(context: &'static str, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::Tensor(ftl_tensor::TensorError::Dimension {
            op: context,
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        }));
    }
    Ok(())
}

/// Mean absolute difference over every element.
pub fn l1_loss(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    same_shape("l1_loss", x, y)?;
    Ok(x.sub(y)?.abs().mean())
}

/// Gaussian-window SSIM parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized separable Gaussian, flattened row-major `window × window`.
    pub fn window_weights(&self) -> Result<Vec<f64>> {
        if self.window % 2 == 0 || self.window == 0 || !(self.sigma > 0.0) {
            return Err(Error::Parameter(format!(
                "ssim window must be odd and sigma positive, got {} and {}",
                self.window, self.sigma
            )));
        }
        let half = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - half).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let mut w: Vec<f64> = g
            .iter()
            .flat_map(|a| g.iter().map(move |b| a * b))
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }
}

/// View `[H,W]`, `[N,H,W]` or `[N,C,H,W]` as single-channel `[M,1,H,W]`.
fn as_planes(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let (m, h, w) = match s.len() {
        2 => (1, s[0], s[1]),
        3 => (s[0], s[1], s[2]),
        4 => (s[0] * s[1], s[2], s[3]),
        _ => {
            return Err(Error::Parameter(format!(
                "expected an image batch, got shape {s:?}"
            )));
        }
    };
    Ok(x.reshape(&[m, 1, h, w])?)
}

/// Per-window SSIM values, `[M, 1, H−w+1, W−w+1]`.
pub fn ssim_map(x: &Tensor, y: &Tensor, cfg: &SsimConfig) -> Result<Tensor> {
    same_shape("ssim", x, y)?;
    let (xp, yp) = (as_planes(x)?, as_planes(y)?);
    let (h, w) = (xp.shape()[2], xp.shape()[3]);
    if h < cfg.window || w < cfg.window {
        return Err(Error::Parameter(format!(
            "image {h}x{w} is smaller than the {0}x{0} ssim window",
            cfg.window
        )));
    }
    let k = Tensor::new(cfg.window_weights()?, &[1, 1, cfg.window, cfg.window])?;
    let blur = |t: &Tensor| t.conv2d(&k, 1, 0);
    let mu_x = blur(&xp)?;
    let mu_y = blur(&yp)?;
    let mu_xx = mu_x.mul(&mu_x)?;
    let mu_yy = mu_y.mul(&mu_y)?;
    let mu_xy = mu_x.mul(&mu_y)?;
    // Every cross term is computed exactly like its self term so that
    // identical inputs give numerator == denominator bit for bit.
    let var_x = blur(&xp.mul(&xp)?)?.sub(&mu_xx)?;
    let var_y = blur(&yp.mul(&yp)?)?.sub(&mu_yy)?;
    let cov = blur(&xp.mul(&yp)?)?.sub(&mu_xy)?;
    let num = mu_xy
        .mul_scalar(2.0)
        .add_scalar(cfg.c1())
        .mul(&cov.mul_scalar(2.0).add_scalar(cfg.c2()))?;
    let den = mu_xx
        .add(&mu_yy)?
        .add_scalar(cfg.c1())
        .mul(&var_x.add(&var_y)?.add_scalar(cfg.c2()))?;
    Ok(num.div(&den)?)
}

/// Mean SSIM over all valid windows and planes.
pub fn ssim(x: &Tensor, y: &Tensor, cfg: &SsimConfig) -> Result<Tensor> {
    Ok(ssim_map(x, y, cfg)?.mean())
}

/// `α·mean((1 − SSIM)/2) + (1 − α)·mean|x − y|`.
pub fn face_loss(x: &Tensor, y: &Tensor, alpha: f64) -> Result<Tensor> {
    face_loss_with(x, y, alpha, &SsimConfig::default())
}

pub fn face_loss_with(x: &Tensor, y: &Tensor, alpha: f64, cfg: &SsimConfig) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!(
            "face loss alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let dissim = ssim_map(x, y, cfg)?
        .neg()
        .add_scalar(1.0)
        .mul_scalar(0.5)
        .mean();
    let l1 = l1_loss(x, y)?;
    Ok(dissim.mul_scalar(alpha).add(&l1.mul_scalar(1.0 - alpha))?)
}

/// Balanced binary cross-entropy settings for sparse occupancy targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancedBceConfig {
    pub gamma: f64,
    /// Relabel targets `{0, 1} → {−1, 2}` via `t' = 3t − 1`.
    pub target_rescale: bool,
    /// Map outputs affinely from `[0, 1]` onto `[clamp_lo, clamp_hi]`.
    pub output_clamp: bool,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for BalancedBceConfig {
    fn default() -> Self {
        BalancedBceConfig {
            gamma: 0.98,
            target_rescale: true,
            output_clamp: true,
            clamp_lo: 0.1,
            clamp_hi: 0.9999,
        }
    }
}

impl BalancedBceConfig {
    /// Both rescalings off: plain weighted BCE.
    pub fn plain(gamma: f64) -> Self {
        BalancedBceConfig {
            gamma,
            target_rescale: false,
            output_clamp: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0 < self.clamp_lo && self.clamp_lo < self.clamp_hi && self.clamp_hi < 1.0) {
            return Err(Error::Parameter(format!(
                "clamp range [{}, {}] must sit strictly inside (0, 1)",
                self.clamp_lo, self.clamp_hi
            )));
        }
        Ok(())
    }
}

/// `Σ −γ t' ln o' − (1−γ)(1−t') ln(1−o')` summed over every element.
pub fn balanced_bce(output: &Tensor, target: &Tensor, cfg: &BalancedBceConfig) -> Result<Tensor> {
    cfg.validate()?;
    same_shape("balanced_bce", output, target)?;
    if let Some(t) = target.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Parameter(format!(
            "balanced_bce target must be 0 or 1, got {t}"
        )));
    }
    if let Some(o) = output.data().iter().find(|&&o| !(0.0..=1.0).contains(&o)) {
        return Err(Error::Parameter(format!(
            "balanced_bce output must lie in [0, 1], got {o}"
        )));
    }
    let o = if cfg.output_clamp {
        output
            .mul_scalar(cfg.clamp_hi - cfg.clamp_lo)
            .add_scalar(cfg.clamp_lo)
    } else {
        output.clone()
    };
    let g = cfg.gamma;
    let (a, b): (Vec<f64>, Vec<f64>) = target
        .data()
        .iter()
        .map(|&t| {
            let t = if cfg.target_rescale { 3.0 * t - 1.0 } else { t };
            (-g * t, -(1.0 - g) * (1.0 - t))
        })
        .unzip();
    Ok(o.weighted_log_pair(&a, &b)?)
}

/// Mean over rows of `‖sig(e_x) − sig(e_xt)‖²`.
pub fn invariance_regularizer(
    family: &TransformFamily,
    e_x: &Tensor,
    e_xt: &Tensor,
) -> Result<Tensor> {
    same_shape("invariance_regularizer", e_x, e_xt)?;
    let diff = invariant_signature(family, e_x)?.sub(&invariant_signature(family, e_xt)?)?;
    let rows = e_x.shape()[0] as f64;
    Ok(diff.square().sum().mul_scalar(1.0 / rows))
}

/// `recon + weight · cross_entropy(scores, labels)`.
pub fn combined_classification_loss(
    recon: &Tensor,
    scores: &Tensor,
    labels: &[usize],
    weight: f64,
) -> Result<Tensor> {
    if recon.numel() != 1 {
        return Err(Error::Parameter(format!(
            "reconstruction loss must be scalar, got {:?}",
            recon.shape()
        )));
    }
    Ok(recon.add(&scores.softmax_cross_entropy(labels)?.mul_scalar(weight))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_is_normalized() {
        let w = SsimConfig::default().window_weights().unwrap();
        assert_eq!(w.len(), 121);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(SsimConfig {
            window: 10,
            ..Default::default()
        }
        .window_weights()
        .is_err());
    }

    #[test]
    fn bce_config_validation() {
        assert!(BalancedBceConfig {
            gamma: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BalancedBceConfig {
            clamp_lo: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BalancedBceConfig::default().validate().is_ok());
    }
}

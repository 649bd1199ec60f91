use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{images_tensor, warp_in_frame, Image, WarpParams};
use crate::error::{Error, Result};
use crate::network::Autoencoder;
use crate::transform::{invariant_signature, DofDomain, TransformFamily};

/// Similarity measure between invariant signatures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    L2,
}

impl Metric {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Cosine => cosine_similarity(a, b),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `a·b / sqrt(|a|²·|b|²)`; exactly 1 for identical non-zero vectors and 0
/// when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let denom = (aa * bb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// One identity for a stability sweep: a base view and the rotation of that
/// view from the shape's canonical pose (the frame for scalings).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepIdentity {
    pub image: Image,
    pub pose: f64,
}

/// Similarity statistics along one dof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub dof: String,
    pub metric: Metric,
    pub sweep_values: Vec<f64>,
    pub same_mean: Vec<f64>,
    pub same_std: Vec<f64>,
    pub diff_mean: Vec<f64>,
    pub diff_std: Vec<f64>,
    /// Pairs per grid point.
    pub same_count: usize,
    pub diff_count: usize,
    /// The dof's training range, for plotting markers.
    pub train_range: (f64, f64),
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Warp every identity by `value` on `dof` (all other dofs at identity) and
/// compare signatures of each base view to the warped views: same-identity
/// pairs `(i, i)` and every cross pair `(i, j ≠ i)`.
///
/// Grid values must be strictly increasing; values outside the training
/// range are allowed when the warp is defined there.
pub fn stability_sweep(
    model: &dyn Autoencoder,
    identities: &[SweepIdentity],
    dof: &str,
    grid: &[f64],
    metric: Metric,
) -> Result<StabilityCurve> {
    if identities.len() < 2 {
        return Err(Error::Parameter(format!(
            "stability sweep needs at least two identities, got {}",
            identities.len()
        )));
    }
    if grid.is_empty()
        || grid.windows(2).any(|w| w[0] >= w[1])
        || grid.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Parameter(
            "sweep grid must be non-empty, finite and strictly increasing".into(),
        ));
    }
    let family = model.family();
    let spec = family
        .dof(dof)
        .ok_or_else(|| Error::Parameter(format!("family has no dof named {dof}")))?;
    let train_range = match spec.domain {
        DofDomain::Circle => (0.0, std::f64::consts::TAU),
        DofDomain::Interval { lo, hi } => (lo, hi),
        DofDomain::Sphere => {
            return Err(Error::Parameter(format!(
                "dof {dof} has no image-space sweep"
            )))
        }
    };
    let signatures = |images: &[Image]| -> Result<Vec<Vec<f64>>> {
        let code = model.encode(&images_tensor(images)?)?;
        let sig = invariant_signature(family, &code)?;
        let w = sig.shape()[1];
        Ok(sig.data().chunks(w).map(<[f64]>::to_vec).collect())
    };
    let bases: Vec<Image> = identities.iter().map(|i| i.image.clone()).collect();
    let base_sigs = signatures(&bases)?;

    let points = grid
        .par_iter()
        .map(|&value| -> Result<(Vec<f64>, Vec<f64>)> {
            let w = sweep_warp(family, dof, value)?;
            let warped = identities
                .iter()
                .map(|id| warp_in_frame(&id.image, &w, id.pose))
                .collect::<Result<Vec<_>>>()?;
            let sigs = signatures(&warped)?;
            let mut same = Vec::with_capacity(identities.len());
            let mut diff = Vec::with_capacity(identities.len() * (identities.len() - 1));
            for (i, base) in base_sigs.iter().enumerate() {
                for (j, moved) in sigs.iter().enumerate() {
                    let m = metric.eval(base, moved);
                    if i == j {
                        same.push(m);
                    } else {
                        diff.push(m);
                    }
                }
            }
            Ok((same, diff))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = identities.len();
    let mut curve = StabilityCurve {
        dof: dof.to_string(),
        metric,
        sweep_values: grid.to_vec(),
        same_mean: Vec::new(),
        same_std: Vec::new(),
        diff_mean: Vec::new(),
        diff_std: Vec::new(),
        same_count: n,
        diff_count: n * (n - 1),
        train_range,
    };
    for (same, diff) in points {
        let (m, s) = mean_std(&same);
        curve.same_mean.push(m);
        curve.same_std.push(s);
        let (m, s) = mean_std(&diff);
        curve.diff_mean.push(m);
        curve.diff_std.push(s);
    }
    Ok(curve)
}

/// Image-space warp for a single-dof sweep value. Interval values may leave the
/// training range, so the ratio is formed directly rather than through the
/// range-checked parameter conversion.
pub fn sweep_warp(family: &TransformFamily, dof: &str, value: f64) -> Result<WarpParams> {
    let spec = family
        .dof(dof)
        .ok_or_else(|| Error::Parameter(format!("family has no dof named {dof}")))?;
    match (dof, &spec.domain) {
        ("rotation", DofDomain::Circle) => Ok(WarpParams::rotation(value)),
        ("scale_x" | "scale_y", DofDomain::Interval { lo, .. }) => {
            let ratio = value / lo;
            if !(ratio > 0.0) {
                return Err(Error::Domain {
                    value,
                    domain: "positive scales".into(),
                });
            }
            let mut w = WarpParams::default();
            if dof == "scale_x" {
                w.scale_x = ratio;
            } else {
                w.scale_y = ratio;
            }
            Ok(w)
        }
        _ => Err(Error::Config(format!("dof {dof} has no image-space warp"))),
    }
}

//! Decoded parameter sweeps next to their image-space ground truth.

use ftl_core::datagen::{images_tensor, warp_in_frame, Image};
use ftl_core::evaluation::{sweep_warp, SweepIdentity};
use ftl_core::network::Autoencoder;
use ftl_core::transform::{apply_per_row, build_block_transform, DofDomain, TransformParams};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// `decoded[i][j]` and `truth[i][j]` for input `i` at grid value `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFrames {
    pub decoded: Vec<Vec<Image>>,
    pub truth: Vec<Vec<Image>>,
}

/// `n` evenly spaced values from `a` to `b` inclusive, written `a:b:n`.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("grid must be a:b:n with n >= 1, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(bad());
    };
    let (a, b): (f64, f64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() || (n > 1 && a >= b) {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| {
            if n == 1 {
                a
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect())
}

/// Parameters moving only `dof` to `value`; rejects values outside the
/// dof's domain.
pub fn sweep_params(model: &dyn Autoencoder, dof: &str, value: f64) -> CliResult<TransformParams> {
    let family = model.family();
    let spec = family
        .dof(dof)
        .ok_or_else(|| CliError::Usage(format!("family has no dof named {dof}")))?;
    if matches!(spec.domain, DofDomain::Sphere) {
        return Err(CliError::Usage(format!(
            "dof {dof} takes two angles and cannot be swept on a line"
        )));
    }
    let params = TransformParams::identity(family).scalar(dof, value);
    params.validate(family)?;
    Ok(params)
}

/// Decode `F_θ · e(x)` for every grid value and warp each input by the
/// matching image-space transform.
pub fn sweep_frames(
    model: &dyn Autoencoder,
    inputs: &[SweepIdentity],
    dof: &str,
    grid: &[f64],
) -> CliResult<SweepFrames> {
    let params = grid
        .iter()
        .map(|&v| sweep_params(model, dof, v))
        .collect::<CliResult<Vec<_>>>()?;
    let ops = params
        .iter()
        .map(|p| build_block_transform(model.family(), p))
        .collect::<ftl_core::Result<Vec<_>>>()?;
    let warps = grid
        .iter()
        .map(|&v| sweep_warp(model.family(), dof, v))
        .collect::<ftl_core::Result<Vec<_>>>()?;
    let code = model.encode(&images_tensor(inputs.iter().map(|i| &i.image))?)?;
    let d = code.shape()[1];
    let rows = inputs
        .par_iter()
        .enumerate()
        .map(|(i, id)| -> CliResult<(Vec<Image>, Vec<Image>)> {
            let e = ftl_tensor::Tensor::new(
                code.data()[i * d..(i + 1) * d].repeat(grid.len()),
                &[grid.len(), d],
            )?;
            let out = model.decode(&apply_per_row(&ops, &e)?)?;
            let n = id.image.size();
            let decoded = out
                .data()
                .chunks(n * n)
                .map(|px| Image::new(n, px.to_vec()))
                .collect::<ftl_core::Result<Vec<_>>>()?;
            let truth = warps
                .iter()
                .map(|w| warp_in_frame(&id.image, w, id.pose))
                .collect::<ftl_core::Result<Vec<_>>>()?;
            Ok((decoded, truth))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (decoded, truth) = rows.into_iter().unzip();
    Ok(SweepFrames { decoded, truth })
}

/// Fraction of decoded frames closer (mean L1) to their own ground-truth
/// frame than to every other frame of the same input.
pub fn frame_match_rate(frames: &SweepFrames) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (decoded, truth) in frames.decoded.iter().zip(&frames.truth) {
        for (j, img) in decoded.iter().enumerate() {
            let own = img.l1(&truth[j]);
            let beaten = truth
                .iter()
                .enumerate()
                .all(|(k, t)| k == j || own < img.l1(t));
            hits += usize::from(beaten);
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

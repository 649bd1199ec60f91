use std::f64::consts::TAU;

use ftl_tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::glyph::Glyph;
use super::image::{warp, warp_in_frame, Image, WarpParams};
use crate::error::{Error, Result};
use crate::transform::{TransformFamily, TransformParams};

/// A source view, its transformed view and the relative parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTriple {
    pub x: Image,
    pub x_t: Image,
    pub params: TransformParams,
    /// Absolute rotation of `x` relative to the glyph's canonical pose; the
    /// frame in which scalings act.
    pub pose: f64,
    /// Index into the glyph pool.
    pub glyph: usize,
}

impl TrainingTriple {
    /// Apply the stored parameters to `x` again.
    pub fn rewarp(&self, family: &TransformFamily) -> Result<Image> {
        warp_in_frame(
            &self.x,
            &WarpParams::from_transform(family, &self.params)?,
            self.pose,
        )
    }
}

/// Draw a glyph and a pose, render `x`, draw `θ` uniformly over the family's
/// ranges and warp `x` by it.
pub fn sample_triple<R: Rng + ?Sized>(
    rng: &mut R,
    family: &TransformFamily,
    pool: &[Glyph],
) -> Result<TrainingTriple> {
    if pool.is_empty() {
        return Err(Error::Parameter("glyph pool is empty".into()));
    }
    let glyph = rng.gen_range(0..pool.len());
    sample_image_triple(rng, family, &pool[glyph].raster, 1.0, glyph)
}

/// Triple from one canonical image: `x` is the image shrunk isotropically
/// by `base_scale` and turned to a random pose, `x_t` is `x` warped by a
/// random `θ`. Glyph rasters are already drawn at the base scale (1.0);
/// natural images such as digits use the scale intervals' lower bound.
pub fn sample_image_triple<R: Rng + ?Sized>(
    rng: &mut R,
    family: &TransformFamily,
    canonical: &Image,
    base_scale: f64,
    glyph: usize,
) -> Result<TrainingTriple> {
    let pose = rng.gen_range(0.0..TAU);
    let x = warp(
        canonical,
        &WarpParams {
            rotation: pose,
            scale_x: base_scale,
            scale_y: base_scale,
        },
    )?;
    let params = TransformParams::random(family, rng);
    let x_t = warp_in_frame(&x, &WarpParams::from_transform(family, &params)?, pose)?;
    Ok(TrainingTriple {
        x,
        x_t,
        params,
        pose,
        glyph,
    })
}

/// Independent stream for item `index` of a seeded collection.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `count` triples; item `i` uses its own stream, so the result does not
/// depend on the number of worker threads.
pub fn sample_triples(
    seed: u64,
    count: usize,
    family: &TransformFamily,
    pool: &[Glyph],
) -> Result<Vec<TrainingTriple>> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_triple(&mut item_rng(seed, i as u64), family, pool))
        .collect()
}

/// Stack images into `[N, size, size]`.
pub fn images_tensor<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut size = None;
    let mut n = 0;
    for img in images {
        match size {
            None => size = Some(img.size()),
            Some(s) if s != img.size() => {
                return Err(Error::Dimension {
                    context: "image batch size",
                    expected: s,
                    got: img.size(),
                })
            }
            _ => {}
        }
        data.extend_from_slice(img.pixels());
        n += 1;
    }
    let s = size.ok_or_else(|| Error::Parameter("cannot stack an empty image batch".into()))?;
    Ok(Tensor::new(data, &[n, s, s])?)
}

/// Sources, targets and parameters of a batch of triples.
pub fn triple_batch(triples: &[TrainingTriple]) -> Result<(Tensor, Tensor, Vec<TransformParams>)> {
    Ok((
        images_tensor(triples.iter().map(|t| &t.x))?,
        images_tensor(triples.iter().map(|t| &t.x_t))?,
        triples.iter().map(|t| t.params.clone()).collect(),
    ))
}

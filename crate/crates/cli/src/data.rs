//! Training, held-out and labeled image sets derived from a run config.

use ftl_core::datagen::{
    glyph_pool, item_rng, load_idx, make_glyph_set, sample_image_triple, sample_triples, warp,
    Dataset, Glyph, Image, TrainingTriple, WarpParams,
};
use ftl_core::transform::{DofDomain, TransformFamily, TransformParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ClassifierSpec, DataSpec, RunConfig};
use crate::error::{CliError, CliResult};

const EVAL_SALT: u64 = 0x10;
const LABELED_SALT: u64 = 0x20;
const EPOCH_SALT: u64 = 0x1000;
const SHUFFLE_SALT: u64 = 0x2000_0000;

/// Independent seed for one purpose of a run (splitmix64 finalizer).
pub fn sub_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    sub_seed(seed, SHUFFLE_SALT + epoch as u64)
}

/// Scale at which canonical natural images are shown: the lower bound of
/// the `scale_x` interval, so every sampled target scale is reachable.
pub fn base_scale(family: &TransformFamily) -> f64 {
    match family.dof("scale_x").map(|d| &d.domain) {
        Some(DofDomain::Interval { lo, .. }) => *lo,
        _ => 1.0,
    }
}

/// Where triples come from.
pub enum Source {
    Glyphs {
        pool: Vec<Glyph>,
        count: usize,
    },
    Images {
        train: Dataset,
        eval: Option<Dataset>,
    },
}

impl Source {
    pub fn load(cfg: &RunConfig) -> CliResult<Source> {
        Ok(match &cfg.data {
            DataSpec::Synthetic {
                count,
                resolution,
                variants_per_shape,
            } => Source::Glyphs {
                pool: glyph_pool(*resolution, *variants_per_shape, cfg.seed)?,
                count: *count,
            },
            DataSpec::Idx {
                images,
                labels,
                eval_images,
                eval_labels,
            } => {
                let train = load_idx(images, labels)?;
                let eval = match (eval_images, eval_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    (None, None) => None,
                    _ => {
                        return Err(CliError::Usage(
                            "data: eval_images and eval_labels go together".into(),
                        ))
                    }
                };
                let want = cfg.model.input_shape.as_slice();
                for ds in std::iter::once(&train).chain(eval.as_ref()) {
                    if let Some(s) = ds.image_size() {
                        if want != [s, s] {
                            return Err(CliError::Usage(format!(
                                "IDX images are {s}x{s}, model expects {want:?}"
                            )));
                        }
                    }
                }
                if train.len() < cfg.batch_size {
                    return Err(CliError::Usage(format!(
                        "{} training images cannot fill a batch of {}",
                        train.len(),
                        cfg.batch_size
                    )));
                }
                Source::Images { train, eval }
            }
        })
    }

    /// Items drawn per epoch.
    pub fn epoch_len(&self) -> usize {
        match self {
            Source::Glyphs { count, .. } => *count,
            Source::Images { train, .. } => train.len(),
        }
    }

    /// Fresh triples for `epoch`. Without the transform pathway each target
    /// is its own source under the identity.
    pub fn epoch_triples(&self, cfg: &RunConfig, epoch: usize) -> CliResult<Vec<TrainingTriple>> {
        let seed = sub_seed(cfg.seed, EPOCH_SALT + epoch as u64);
        let family = &cfg.model.family;
        let mut triples = match self {
            Source::Glyphs { pool, count } => sample_triples(seed, *count, family, pool)?,
            Source::Images { train, .. } => {
                image_triples(family, &train.images, train.labels.as_deref(), seed)?
            }
        };
        if !cfg.transform_pathway {
            let identity = TransformParams::identity(family);
            for t in &mut triples {
                t.x_t = t.x.clone();
                t.params = identity.clone();
            }
        }
        Ok(triples)
    }

    /// Held-out triples; the same config always yields the same set.
    pub fn eval_triples(&self, cfg: &RunConfig) -> CliResult<Vec<TrainingTriple>> {
        let seed = sub_seed(cfg.seed, EVAL_SALT);
        let family = &cfg.model.family;
        Ok(match self {
            Source::Glyphs { pool, .. } => sample_triples(seed, cfg.eval_count, family, pool)?,
            Source::Images { train, eval } => {
                let ds = eval.as_ref().unwrap_or(train);
                let n = cfg.eval_count.min(ds.len());
                image_triples(
                    family,
                    &ds.images[..n],
                    ds.labels.as_ref().map(|l| &l[..n]),
                    seed,
                )?
            }
        })
    }

    /// Labeled, randomly rotated train and test sets for the classifier.
    pub fn labeled_sets(
        &self,
        cfg: &RunConfig,
        spec: &ClassifierSpec,
    ) -> CliResult<(Dataset, Dataset)> {
        let seed = sub_seed(cfg.seed, LABELED_SALT);
        match self {
            Source::Glyphs { pool, .. } => {
                let res = pool[0].resolution();
                let train = make_glyph_set(res, spec.train_count, spec.classes, sub_seed(seed, 1))?;
                let test = make_glyph_set(res, spec.test_count, spec.classes, sub_seed(seed, 2))?;
                Ok((
                    rotated(&train, 1.0, sub_seed(seed, 3))?,
                    rotated(&test, 1.0, sub_seed(seed, 4))?,
                ))
            }
            Source::Images { train, eval } => {
                let base = base_scale(&cfg.model.family);
                let take = |ds: &Dataset, n: usize| Dataset {
                    images: ds.images[..n.min(ds.len())].to_vec(),
                    labels: ds.labels.as_ref().map(|l| l[..n.min(ds.len())].to_vec()),
                    angles: None,
                };
                let test_src = match eval {
                    Some(e) => take(e, spec.test_count),
                    None => {
                        let start = spec.train_count.min(train.len());
                        let end = (start + spec.test_count).min(train.len());
                        Dataset {
                            images: train.images[start..end].to_vec(),
                            labels: train.labels.as_ref().map(|l| l[start..end].to_vec()),
                            angles: None,
                        }
                    }
                };
                if test_src.is_empty() {
                    return Err(CliError::Usage(
                        "no images left for the classifier test set".into(),
                    ));
                }
                Ok((
                    rotated(&take(train, spec.train_count), base, sub_seed(seed, 3))?,
                    rotated(&test_src, base, sub_seed(seed, 4))?,
                ))
            }
        }
    }
}

/// One triple per image, item `i` from its own stream.
fn image_triples(
    family: &TransformFamily,
    images: &[Image],
    labels: Option<&[u8]>,
    seed: u64,
) -> CliResult<Vec<TrainingTriple>> {
    let base = base_scale(family);
    Ok(images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let label = labels.map_or(0, |l| l[i] as usize);
            sample_image_triple(&mut item_rng(seed, i as u64), family, img, base, label)
        })
        .collect::<ftl_core::Result<Vec<_>>>()?)
}

/// Each image turned by a uniform angle and shown at `base` scale.
fn rotated(ds: &Dataset, base: f64, seed: u64) -> CliResult<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..ds.len())
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let images = ds
        .images
        .par_iter()
        .zip(&angles)
        .map(|(img, &a)| {
            warp(
                img,
                &WarpParams {
                    rotation: a,
                    scale_x: base,
                    scale_y: base,
                },
            )
        })
        .collect::<ftl_core::Result<Vec<_>>>()?;
    Ok(Dataset {
        images,
        labels: ds.labels.clone(),
        angles: Some(angles),
    })
}

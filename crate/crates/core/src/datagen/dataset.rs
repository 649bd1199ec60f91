use std::f64::consts::TAU;
use std::path::Path;

use ftl_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::glyph::{Glyph, GlyphShape};
use super::image::{warp, Image, WarpParams};
use super::triple::images_tensor;
use crate::error::{Error, Result};

/// Labeled or unlabeled square images.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Option<Vec<u8>>,
    /// Rotation applied to each item, kept for diagnostics only.
    pub angles: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_size(&self) -> Option<usize> {
        self.images.first().map(Image::size)
    }

    /// Items `indices` as `[N, size, size]`.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        images_tensor(indices.iter().map(|&i| &self.images[i]))
    }

    pub fn tensor(&self) -> Result<Tensor> {
        images_tensor(&self.images)
    }

    pub fn class_count(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m as usize + 1)
    }
}

/// Rotate item `i` by `angles[i]` about the image center.
pub fn rotate_dataset(dataset: &Dataset, angles: &[f64]) -> Result<Dataset> {
    if angles.len() != dataset.len() {
        return Err(Error::Dimension {
            context: "rotation angle count",
            expected: dataset.len(),
            got: angles.len(),
        });
    }
    let images = dataset
        .images
        .iter()
        .zip(angles)
        .map(|(img, &a)| warp(img, &WarpParams::rotation(a)))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        images,
        labels: dataset.labels.clone(),
        angles: Some(angles.to_vec()),
    })
}

/// Rotate every item by an angle drawn uniformly from `[0, 2π)`.
pub fn make_rotated_set<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> Result<Dataset> {
    let angles: Vec<f64> = (0..dataset.len())
        .map(|_| rng.gen_range(0.0..TAU))
        .collect();
    rotate_dataset(dataset, &angles)
}

/// Canonical-pose glyphs of the first `classes` shapes, labeled by shape,
/// each with its own random stroke and aspect. Items cycle through classes.
pub fn make_glyph_set(
    resolution: usize,
    count: usize,
    classes: usize,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || classes > GlyphShape::ALL.len() {
        return Err(Error::Parameter(format!(
            "glyph classes must lie in 1..={}, got {classes}",
            GlyphShape::ALL.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % classes;
        let stroke = rng.gen_range(0.35..=0.55);
        let aspect = rng.gen_range(0.8..=1.25);
        images.push(Glyph::render(GlyphShape::ALL[class], stroke, aspect, resolution)?.raster);
        labels.push(class as u8);
    }
    Ok(Dataset {
        images,
        labels: Some(labels),
        angles: None,
    })
}

/// A permutation of `0..n` that depends only on `seed`.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Corrupt(format!("{what}: header truncated at byte {at}")))
}

/// Parse an IDX image file into square images scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let magic = be_u32(bytes, 0, "IDX images")?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!(
            "IDX images: bad magic 0x{magic:08x} (expected 0x{IDX_IMAGES:08x})"
        )));
    }
    let n = be_u32(bytes, 4, "IDX images")? as usize;
    let rows = be_u32(bytes, 8, "IDX images")? as usize;
    let cols = be_u32(bytes, 12, "IDX images")? as usize;
    if rows != cols || rows == 0 {
        return Err(Error::Format(format!(
            "IDX images: {rows}×{cols} images are not square"
        )));
    }
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(Error::Corrupt(format!(
            "IDX images: payload has {} bytes, header declares {need}",
            payload.len()
        )));
    }
    payload
        .chunks_exact(rows * cols)
        .map(|c| Image::new(rows, c.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "IDX labels")?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!(
            "IDX labels: bad magic 0x{magic:08x} (expected 0x{IDX_LABELS:08x})"
        )));
    }
    let n = be_u32(bytes, 4, "IDX labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Corrupt(format!(
            "IDX labels: payload has {} bytes, header declares {n}",
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

/// Load an IDX image file and its label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = parse_idx_images(&read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels_path.as_ref())?)?;
    if images.len() != labels.len() {
        return Err(Error::Format(format!(
            "IDX image count {} does not match label count {}",
            images.len(),
            labels.len()
        )));
    }
    Ok(Dataset {
        images,
        labels: Some(labels),
        angles: None,
    })
}

/// Encode images as IDX bytes, quantizing to `round(255·v)`.
pub fn idx_image_bytes(images: &[Image]) -> Result<Vec<u8>> {
    let size = images.first().map_or(0, Image::size);
    if images.iter().any(|i| i.size() != size) {
        return Err(Error::Parameter("IDX images must share one size".into()));
    }
    let mut out = Vec::with_capacity(16 + images.len() * size * size);
    for v in [IDX_IMAGES, images.len() as u32, size as u32, size as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend(
            img.pixels()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

pub fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::glyph::{glyph_pool, Glyph};
use super::image::Image;
use super::triple::{sample_triples, TrainingTriple};
use crate::error::{Error, Result};
use crate::transform::{DofValue, TransformFamily, TransformParams};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Synthetic triple dataset description. Omitted fields take their
/// defaults when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenSpec {
    pub seed: u64,
    pub count: usize,
    pub resolution: usize,
    pub variants_per_shape: usize,
    pub family: TransformFamily,
}

impl Default for DatagenSpec {
    fn default() -> Self {
        DatagenSpec {
            seed: 0,
            count: 1000,
            resolution: 16,
            variants_per_shape: 4,
            family: TransformFamily::desk(),
        }
    }
}

impl DatagenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.resolution < 4 || self.variants_per_shape == 0 {
            return Err(Error::Config(format!(
                "datagen needs count ≥ 1, resolution ≥ 4 and variants_per_shape ≥ 1, got {}, {}, {}",
                self.count, self.resolution, self.variants_per_shape
            )));
        }
        let probe = TransformParams::identity(&self.family);
        super::image::WarpParams::from_transform(&self.family, &probe)?;
        Ok(())
    }

    /// The glyph pool used for sampling, seeded from the dataset seed.
    pub fn pool(&self) -> Result<Vec<Glyph>> {
        glyph_pool(self.resolution, self.variants_per_shape, self.seed)
    }

    pub fn generate(&self) -> Result<Vec<TrainingTriple>> {
        self.validate()?;
        sample_triples(self.seed, self.count, &self.family, &self.pool()?)
    }
}

/// One raw little-endian `f64` array file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayFile {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub count: usize,
    pub image_shape: Vec<usize>,
    pub seed: u64,
    /// Parameter columns in file order.
    pub param_columns: Vec<String>,
    pub spec: DatagenSpec,
    pub files: Vec<ArrayFile>,
}

fn param_columns(family: &TransformFamily) -> Vec<String> {
    let mut cols = Vec::new();
    for d in family.dofs() {
        if d.domain == crate::transform::DofDomain::Sphere {
            cols.extend(["azimuth", "elevation", "roll"].map(|c| format!("{}.{c}", d.name)));
        } else {
            cols.push(d.name.clone());
        }
    }
    cols
}

fn param_row(family: &TransformFamily, p: &TransformParams) -> Vec<f64> {
    let mut row = Vec::new();
    for d in family.dofs() {
        match p.get(&d.name) {
            Some(DofValue::Scalar(v)) => row.push(*v),
            Some(DofValue::Sphere {
                azimuth,
                elevation,
                roll,
            }) => row.extend([*azimuth, *elevation, *roll]),
            None => {}
        }
    }
    row
}

fn write_f64(path: &Path, data: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = data.flat_map(f64::to_le_bytes).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read one array listed in a manifest.
pub fn read_array(dir: impl AsRef<Path>, entry: &ArrayFile) -> Result<Vec<f64>> {
    let path = dir.as_ref().join(&entry.file);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let want: usize = entry.shape.iter().product();
    if bytes.len() != want * 8 {
        return Err(Error::Corrupt(format!(
            "{} holds {} bytes, manifest declares {}",
            entry.file,
            bytes.len(),
            want * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Write `x`, `x_t`, parameters, poses and glyph indices plus a manifest.
pub fn export_triples(
    dir: impl AsRef<Path>,
    spec: &DatagenSpec,
    triples: &[TrainingTriple],
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = triples.len();
    let s = spec.resolution;
    let cols = param_columns(&spec.family);
    let files = vec![
        ArrayFile {
            name: "x".into(),
            file: "x.f64".into(),
            shape: vec![n, s, s],
        },
        ArrayFile {
            name: "x_t".into(),
            file: "x_t.f64".into(),
            shape: vec![n, s, s],
        },
        ArrayFile {
            name: "params".into(),
            file: "params.f64".into(),
            shape: vec![n, cols.len()],
        },
        ArrayFile {
            name: "pose".into(),
            file: "pose.f64".into(),
            shape: vec![n],
        },
        ArrayFile {
            name: "glyph".into(),
            file: "glyph.f64".into(),
            shape: vec![n],
        },
    ];
    let pixels = |f: fn(&TrainingTriple) -> &Image| {
        triples
            .iter()
            .flat_map(move |t| f(t).pixels().iter().copied())
    };
    write_f64(&dir.join("x.f64"), pixels(|t| &t.x))?;
    write_f64(&dir.join("x_t.f64"), pixels(|t| &t.x_t))?;
    write_f64(
        &dir.join("params.f64"),
        triples
            .iter()
            .flat_map(|t| param_row(&spec.family, &t.params)),
    )?;
    write_f64(&dir.join("pose.f64"), triples.iter().map(|t| t.pose))?;
    write_f64(
        &dir.join("glyph.f64"),
        triples.iter().map(|t| t.glyph as f64),
    )?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        count: n,
        image_shape: vec![s, s],
        seed: spec.seed,
        param_columns: cols,
        spec: spec.clone(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Read a directory written by [`export_triples`].
pub fn load_triples(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<TrainingTriple>)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("unreadable dataset manifest: {e}")))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    let array = |name: &str| -> Result<Vec<f64>> {
        let entry = manifest
            .files
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Format(format!("manifest lists no {name} array")))?;
        if entry.shape.first() != Some(&manifest.count) {
            return Err(Error::Corrupt(format!(
                "{name} array does not hold {} items",
                manifest.count
            )));
        }
        read_array(dir, entry)
    };
    let s = manifest.spec.resolution;
    let (x, xt, params, pose, glyph) = (
        array("x")?,
        array("x_t")?,
        array("params")?,
        array("pose")?,
        array("glyph")?,
    );
    let width = manifest.param_columns.len();
    if x.len() != manifest.count * s * s || params.len() != manifest.count * width {
        return Err(Error::Corrupt(
            "dataset arrays disagree with the manifest".into(),
        ));
    }
    let family = &manifest.spec.family;
    let mut triples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let row = &params[i * width..(i + 1) * width];
        let mut p = TransformParams::new();
        let mut k = 0;
        for d in family.dofs() {
            if d.domain == crate::transform::DofDomain::Sphere {
                p = p.with(
                    &d.name,
                    DofValue::Sphere {
                        azimuth: row[k],
                        elevation: row[k + 1],
                        roll: row[k + 2],
                    },
                );
                k += 3;
            } else {
                p = p.scalar(&d.name, row[k]);
                k += 1;
            }
        }
        triples.push(TrainingTriple {
            x: Image::new(s, x[i * s * s..(i + 1) * s * s].to_vec())?,
            x_t: Image::new(s, xt[i * s * s..(i + 1) * s * s].to_vec())?,
            params: p,
            pose: pose[i],
            glyph: glyph[i] as usize,
        });
    }
    Ok((manifest, triples))
}

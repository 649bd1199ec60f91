//! Binary checkpoint: 8-byte magic, little-endian `u32` version, `u64`
//! header length, a JSON header, then every array as little-endian `f64`.

use std::path::Path;

use ftl_tensor::{Adam, AdamConfig, RunningStats};
use serde::{Deserialize, Serialize};

use super::config::EncoderDecoderConfig;
use super::head::{ClassifierHead, HeadConfig};
use super::model::{Model, NamedStats};
use super::params::{NamedArray, ParamSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FTLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    slots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: EncoderDecoderConfig,
    head: Option<HeadConfig>,
    optimizer: Option<OptimizerHeader>,
    seed: u64,
    step: u64,
    arrays: Vec<ArrayEntry>,
}

/// A model plus everything needed to resume or evaluate it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub head: Option<ClassifierHead>,
    pub optimizer: Option<Adam>,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn new(model: Model, seed: u64) -> Checkpoint {
        Checkpoint {
            model,
            head: None,
            optimizer: None,
            seed,
            step: 0,
        }
    }

    fn arrays(&self) -> Vec<NamedArray> {
        let mut out: Vec<NamedArray> = self.model.params().arrays.clone();
        for s in self.model.stats() {
            let c = s.stats.mean.len();
            out.push(NamedArray::new(
                format!("{}_mean", s.name),
                vec![c],
                s.stats.mean.clone(),
            ));
            out.push(NamedArray::new(
                format!("{}_var", s.name),
                vec![c],
                s.stats.var.clone(),
            ));
        }
        if let Some(h) = &self.head {
            out.extend(h.params().arrays.iter().cloned());
            let (shift, scale) = h.normalizer();
            out.push(NamedArray::new(
                "head.shift",
                vec![shift.len()],
                shift.to_vec(),
            ));
            out.push(NamedArray::new(
                "head.scale",
                vec![scale.len()],
                scale.to_vec(),
            ));
        }
        if let Some(opt) = &self.optimizer {
            for (i, (m, v)) in opt.first_moment.iter().zip(&opt.second_moment).enumerate() {
                out.push(NamedArray::new(
                    format!("optimizer.m.{i}"),
                    vec![m.len()],
                    m.clone(),
                ));
                out.push(NamedArray::new(
                    format!("optimizer.v.{i}"),
                    vec![v.len()],
                    v.clone(),
                ));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arrays = self.arrays();
        let mut offset = 0;
        let entries = arrays
            .iter()
            .map(|a| {
                let e = ArrayEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    offset,
                    len: a.data.len(),
                };
                offset += a.data.len();
                e
            })
            .collect();
        let header = Header {
            config: self.model.config().clone(),
            head: self.head.as_ref().map(ClassifierHead::config),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                learning_rate: o.config.learning_rate,
                beta1: o.config.beta1,
                beta2: o.config.beta2,
                epsilon: o.config.epsilon,
                step_count: o.step_count,
                slots: o.first_moment.len(),
            }),
            seed: self.seed,
            step: self.step,
            arrays: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < PREAMBLE {
            return Err(Error::Corrupt(format!(
                "checkpoint truncated: {} bytes is shorter than the {PREAMBLE}-byte preamble",
                bytes.len()
            )));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {:02x?}",
                &bytes[..8]
            )));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let header_end = (PREAMBLE as u64)
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len() as u64);
        let Some(header_end) = header_end else {
            return Err(Error::Corrupt(format!(
                "checkpoint truncated: header of {header_len} bytes exceeds file size {}",
                bytes.len()
            )));
        };
        let header_end = header_end as usize;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| Error::Corrupt(format!("unreadable checkpoint header: {e}")))?;
        let payload = &bytes[header_end..];
        let total: usize = header.arrays.iter().map(|a| a.len).sum();
        if payload.len() != total * 8 {
            return Err(Error::Corrupt(format!(
                "checkpoint payload holds {} bytes but the header declares {}",
                payload.len(),
                total * 8
            )));
        }
        let mut expected_offset = 0;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in &header.arrays {
            if e.offset != expected_offset || e.shape.iter().product::<usize>() != e.len {
                return Err(Error::Corrupt(format!(
                    "array table entry {} is inconsistent",
                    e.name
                )));
            }
            expected_offset += e.len;
            let data = payload[e.offset * 8..(e.offset + e.len) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push(NamedArray::new(e.name.clone(), e.shape.clone(), data));
        }
        Checkpoint::assemble(header, arrays)
    }

    fn assemble(header: Header, arrays: Vec<NamedArray>) -> Result<Checkpoint> {
        let layout = Model::layout(&header.config)?;
        let mut it = arrays.into_iter();
        let mut take = |what: &str| {
            it.next()
                .ok_or_else(|| Error::Corrupt(format!("checkpoint is missing {what}")))
        };

        let mut params = ParamSet::default();
        for _ in 0..layout.params.len() {
            params.push(take("model parameters")?);
        }
        let mut stats = Vec::with_capacity(layout.stats.len());
        for (name, _) in &layout.stats {
            let mean = take("batch-norm statistics")?;
            let var = take("batch-norm statistics")?;
            if mean.name != format!("{name}_mean") || var.name != format!("{name}_var") {
                return Err(Error::Corrupt(format!(
                    "unexpected statistics arrays {} / {}",
                    mean.name, var.name
                )));
            }
            stats.push(NamedStats {
                name: name.clone(),
                stats: RunningStats {
                    mean: mean.data,
                    var: var.data,
                },
            });
        }
        let model = Model::from_parts(header.config, params, stats)?;

        let head = match header.head {
            Some(cfg) => {
                let mut hp = ParamSet::default();
                for _ in 0..ClassifierHead::array_count(cfg) {
                    hp.push(take("classifier head parameters")?);
                }
                let shift = take("classifier normalizer")?;
                let scale = take("classifier normalizer")?;
                if shift.name != "head.shift" || scale.name != "head.scale" {
                    return Err(Error::Corrupt(
                        "classifier normalizer arrays are misnamed".into(),
                    ));
                }
                Some(ClassifierHead::from_parts(cfg, hp, shift.data, scale.data)?)
            }
            None => None,
        };

        let optimizer = match header.optimizer {
            Some(o) => {
                let mut first = Vec::with_capacity(o.slots);
                let mut second = Vec::with_capacity(o.slots);
                for i in 0..o.slots {
                    let m = take("optimizer moments")?;
                    let v = take("optimizer moments")?;
                    if m.name != format!("optimizer.m.{i}")
                        || v.name != format!("optimizer.v.{i}")
                        || m.data.len() != v.data.len()
                    {
                        return Err(Error::Corrupt(format!(
                            "optimizer slot {i} is inconsistent"
                        )));
                    }
                    first.push(m.data);
                    second.push(v.data);
                }
                Some(Adam {
                    config: AdamConfig {
                        learning_rate: o.learning_rate,
                        beta1: o.beta1,
                        beta2: o.beta2,
                        epsilon: o.epsilon,
                    },
                    step_count: o.step_count,
                    first_moment: first,
                    second_moment: second,
                })
            }
            None => None,
        };
        if let Some(extra) = it.next() {
            return Err(Error::Corrupt(format!(
                "unexpected extra array {}",
                extra.name
            )));
        }
        Ok(Checkpoint {
            model,
            head,
            optimizer,
            seed: header.seed,
            step: header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Save a bare model.
pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(model.clone(), 0).save(path)
}

/// Load the model stored in a checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    Ok(Checkpoint::load(path)?.model)
}

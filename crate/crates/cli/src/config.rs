//! Run configuration: presets, JSON files and command-line overrides.

use std::path::{Path, PathBuf};

use ftl_core::evaluation::{FeatureKind, ReconLoss};
use ftl_core::network::EncoderDecoderConfig;
use ftl_core::objectives::{DEFAULT_REGULARIZER_WEIGHT, FACE_ALPHA};
use ftl_core::transform::TransformFamily;
use ftl_tensor::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const PRESETS: [&str; 5] = [
    "desk-mlp",
    "desk-conv",
    "tiny",
    "mnist-mlp",
    "face-schedule",
];

/// Adam settings plus a step schedule that multiplies the learning rate by
/// `decay_factor` at each listed iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay_at: Vec<u64>,
    pub decay_factor: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerSpec {
            lr: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            decay_at: Vec::new(),
            decay_factor: 0.1,
        }
    }
}

impl OptimizerSpec {
    /// Learning rate in effect at zero-based iteration `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let drops = self.decay_at.iter().filter(|&&s| step >= s).count();
        self.lr * self.decay_factor.powi(drops as i32)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    Face,
    BalancedBce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// SSIM share of the face loss.
    pub alpha: f64,
    /// Balanced cross-entropy weight.
    pub gamma: f64,
    /// Weight of the invariance regularizer; 0 disables it.
    pub regularizer_weight: f64,
    /// Weight of the joint classification term; 0 disables it.
    pub classification_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::L1,
            alpha: FACE_ALPHA,
            gamma: 0.98,
            regularizer_weight: 0.0,
            classification_weight: 0.0,
        }
    }
}

impl LossSpec {
    pub fn recon(&self) -> ReconLoss {
        match self.kind {
            LossKind::L1 => ReconLoss::L1,
            LossKind::Face => ReconLoss::Face { alpha: self.alpha },
            LossKind::BalancedBce => ReconLoss::BalancedBce { gamma: self.gamma },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Procedural glyphs; every epoch draws `count` fresh triples.
    Synthetic {
        count: usize,
        resolution: usize,
        variants_per_shape: usize,
    },
    /// IDX images; each epoch draws one triple per image.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        eval_images: Option<PathBuf>,
        eval_labels: Option<PathBuf>,
    },
}

/// A classifier head fitted on frozen features of a labeled, randomly
/// rotated set after the autoencoder has trained. With a positive
/// classification weight the head also trains jointly on signatures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSpec {
    pub features: FeatureKind,
    /// 0 gives a linear probe.
    pub hidden: usize,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            features: FeatureKind::Signature,
            hidden: 0,
            classes: 10,
            epochs: 100,
            batch_size: 50,
            lr: 1e-3,
            train_count: 1000,
            test_count: 1000,
        }
    }
}

/// A family given inline or as a path to a JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySource {
    Path(PathBuf),
    Inline(TransformFamily),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub model: EncoderDecoderConfig,
    /// Replaces `model.family` during resolution.
    pub family: Option<FamilySource>,
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub iterations: Option<u64>,
    pub loss: LossSpec,
    pub data: DataSpec,
    /// When false every target is its own source under the identity, which
    /// trains a plain autoencoder with the same architecture.
    pub transform_pathway: bool,
    pub classifier: Option<ClassifierSpec>,
    /// Held-out triples for the final loss and evaluation.
    pub eval_count: usize,
    pub log_every: u64,
    pub checkpoint_every: Option<u64>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset("desk-mlp").expect("built-in preset")
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> CliResult<RunConfig> {
        let synthetic = |resolution| DataSpec::Synthetic {
            count: 5000,
            resolution,
            variants_per_shape: 4,
        };
        let base = RunConfig {
            preset: name.to_string(),
            model: EncoderDecoderConfig::desk_mlp(),
            family: None,
            optimizer: OptimizerSpec::default(),
            batch_size: 32,
            epochs: 60,
            iterations: None,
            loss: LossSpec {
                regularizer_weight: DEFAULT_REGULARIZER_WEIGHT,
                ..LossSpec::default()
            },
            data: synthetic(16),
            transform_pathway: true,
            classifier: None,
            eval_count: 500,
            log_every: 50,
            checkpoint_every: None,
            out_dir: PathBuf::from("runs").join(name),
            seed: 0,
        };
        Ok(match name {
            "desk-mlp" => base,
            "desk-conv" => RunConfig {
                model: EncoderDecoderConfig::desk_conv(),
                ..base
            },
            "tiny" => RunConfig {
                model: EncoderDecoderConfig::tiny(),
                data: DataSpec::Synthetic {
                    count: 256,
                    resolution: 8,
                    variants_per_shape: 2,
                },
                epochs: 2,
                eval_count: 32,
                log_every: 10,
                ..base
            },
            "mnist-mlp" => RunConfig {
                model: EncoderDecoderConfig::mnist_mlp(),
                batch_size: 128,
                epochs: 200,
                loss: LossSpec::default(),
                data: DataSpec::Idx {
                    images: "data/mnist/train-images-idx3-ubyte".into(),
                    labels: "data/mnist/train-labels-idx1-ubyte".into(),
                    eval_images: Some("data/mnist/t10k-images-idx3-ubyte".into()),
                    eval_labels: Some("data/mnist/t10k-labels-idx1-ubyte".into()),
                },
                ..base
            },
            "face-schedule" => RunConfig {
                model: EncoderDecoderConfig::desk_conv(),
                optimizer: OptimizerSpec {
                    lr: 1e-4,
                    decay_at: vec![30_000, 50_000],
                    decay_factor: 0.1,
                    ..OptimizerSpec::default()
                },
                batch_size: 32,
                iterations: Some(60_000),
                loss: LossSpec {
                    kind: LossKind::Face,
                    ..LossSpec::default()
                },
                ..base
            },
            other => {
                return Err(CliError::Usage(format!(
                    "unknown preset {other}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    /// Preset defaults, then `file` (a partial JSON document merged key by
    /// key), then resolution of the family source and validation.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>) -> CliResult<RunConfig> {
        let doc: Option<serde_json::Value> = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Some(
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?,
                )
            }
            None => None,
        };
        let from_file = doc
            .as_ref()
            .and_then(|d| d.get("preset"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        let name = preset
            .map(str::to_string)
            .or(from_file)
            .unwrap_or_else(|| "desk-mlp".into());
        let name = name.as_str();
        let mut value = serde_json::to_value(RunConfig::preset(name)?).expect("config serializes");
        if let Some(d) = doc {
            merge(&mut value, d);
        }
        value["preset"] = serde_json::Value::String(name.to_string());
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid config field: {e}")))?;
        cfg.finish()
    }

    /// Load a family source into the model and validate every field.
    pub fn finish(mut self) -> CliResult<RunConfig> {
        if let Some(src) = self.family.take() {
            self.model.family = match src {
                FamilySource::Inline(f) => f,
                FamilySource::Path(p) => load_family(&p)?,
            };
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad =
            |field: &str, msg: String| Err(CliError::Usage(format!("config field {field}: {msg}")));
        self.model
            .validate()
            .map_err(|e| CliError::Usage(format!("config field model: {e}")))?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return bad("optimizer.lr", format!("must be positive, got {}", o.lr));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer.beta1/beta2", "must lie in [0, 1)".into());
        }
        if !(o.epsilon > 0.0) || !(o.decay_factor > 0.0) {
            return bad("optimizer.epsilon/decay_factor", "must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(
                "batch_size",
                format!("batch norm needs at least 2 items, got {}", self.batch_size),
            );
        }
        if self.eval_count == 0 {
            return bad("eval_count", "must be at least 1".into());
        }
        if self.log_every == 0 {
            return bad("log_every", "must be at least 1".into());
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every", "must be at least 1 when set".into());
        }
        let l = &self.loss;
        if !(0.0..=1.0).contains(&l.alpha) {
            return bad("loss.alpha", format!("must lie in [0, 1], got {}", l.alpha));
        }
        if !(l.gamma > 0.0 && l.gamma < 1.0) {
            return bad("loss.gamma", format!("must lie in (0, 1), got {}", l.gamma));
        }
        if !(l.regularizer_weight >= 0.0) || !(l.classification_weight >= 0.0) {
            return bad("loss weights", "must be non-negative".into());
        }
        if let Some(c) = &self.classifier {
            if c.classes < 2
                || c.batch_size == 0
                || c.train_count < c.batch_size
                || c.test_count == 0
            {
                return bad(
                    "classifier",
                    format!(
                        "needs positive counts, two classes and train_count >= batch_size: {c:?}"
                    ),
                );
            }
            if !(c.lr > 0.0) {
                return bad("classifier.lr", format!("must be positive, got {}", c.lr));
            }
            if matches!(self.data, DataSpec::Synthetic { .. })
                && c.classes > ftl_core::datagen::GlyphShape::ALL.len()
            {
                return bad(
                    "classifier.classes",
                    format!(
                        "at most {} glyph classes",
                        ftl_core::datagen::GlyphShape::ALL.len()
                    ),
                );
            }
            if l.classification_weight > 0.0 && c.features != FeatureKind::Signature {
                return bad(
                    "classifier.features",
                    "joint training uses signatures".into(),
                );
            }
            let shapes = ftl_core::datagen::GlyphShape::ALL.len();
            if l.classification_weight > 0.0
                && matches!(self.data, DataSpec::Synthetic { .. })
                && c.classes != shapes
            {
                return bad(
                    "classifier.classes",
                    format!("joint training on glyphs labels all {shapes} shapes"),
                );
            }
        } else if l.classification_weight > 0.0 {
            return bad(
                "loss.classification_weight",
                "a positive weight needs a classifier section".into(),
            );
        }
        if let DataSpec::Synthetic {
            count,
            resolution,
            variants_per_shape,
        } = &self.data
        {
            if *count < self.batch_size || *variants_per_shape == 0 {
                return bad(
                    "data",
                    format!("count {count} must be at least batch_size and variants positive"),
                );
            }
            if self.model.input_shape != [*resolution, *resolution] {
                return bad(
                    "data.resolution",
                    format!(
                        "{resolution} does not match model input {:?}",
                        self.model.input_shape
                    ),
                );
            }
        }
        let probe = ftl_core::transform::TransformParams::identity(&self.model.family);
        ftl_core::datagen::WarpParams::from_transform(&self.model.family, &probe)
            .map_err(|e| CliError::Usage(format!("config field family: {e}")))?;
        Ok(())
    }

    pub fn recon_loss(&self) -> ReconLoss {
        self.loss.recon()
    }
}

/// A family by preset name or from a JSON file.
pub fn load_family(source: &Path) -> CliResult<TransformFamily> {
    match source.to_str() {
        Some("mnist") => return Ok(TransformFamily::mnist()),
        Some("desk") => return Ok(TransformFamily::desk()),
        Some("tiny") => return Ok(TransformFamily::tiny()),
        Some("face") => return Ok(TransformFamily::face()),
        _ => {}
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| CliError::Usage(format!("cannot read family {}: {e}", source.display())))?;
    TransformFamily::from_json(&text)
        .map_err(|e| CliError::Usage(format!("malformed family {}: {e}", source.display())))
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

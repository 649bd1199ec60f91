use ftl_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::datagen::{images_tensor, triple_batch, Dataset, TrainingTriple};
use crate::error::{Error, Result};
use crate::network::{Autoencoder, ClassifierHead};
use crate::objectives::{balanced_bce, face_loss, l1_loss, BalancedBceConfig};
use crate::transform::invariant_signature;

const CHUNK: usize = 64;

/// Per-item reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconLoss {
    L1,
    Face {
        alpha: f64,
    },
    /// Balanced cross-entropy with default rescaling; targets must be binary.
    BalancedBce {
        gamma: f64,
    },
}

impl ReconLoss {
    pub fn eval(&self, output: &Tensor, target: &Tensor) -> Result<Tensor> {
        match *self {
            ReconLoss::L1 => l1_loss(output, target),
            ReconLoss::Face { alpha } => face_loss(output, target, alpha),
            ReconLoss::BalancedBce { gamma } => balanced_bce(
                output,
                target,
                &BalancedBceConfig {
                    gamma,
                    ..BalancedBceConfig::default()
                },
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    /// `ℓ(d(F_θ e(x)), x̃_θ)`.
    pub model: f64,
    /// `ℓ(x, x̃_θ)`: predicting no change at all.
    pub baseline: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub mean: f64,
    pub baseline_mean: f64,
    pub items: Vec<ItemError>,
}

impl ReconstructionReport {
    /// `mean / baseline_mean`.
    pub fn ratio(&self) -> f64 {
        self.mean / self.baseline_mean
    }
}

fn item(t: &Tensor, i: usize) -> Result<Tensor> {
    let s = t.shape();
    let per: usize = s[1..].iter().product();
    let mut shape = s.to_vec();
    shape[0] = 1;
    Ok(Tensor::new(
        t.data()[i * per..(i + 1) * per].to_vec(),
        &shape,
    )?)
}

/// Transformed-reconstruction loss of every triple next to the identity
/// baseline. Means are plain averages of the per-item losses.
pub fn transformed_reconstruction_error(
    model: &dyn Autoencoder,
    triples: &[TrainingTriple],
    loss: ReconLoss,
) -> Result<ReconstructionReport> {
    if triples.is_empty() {
        return Err(Error::Parameter("no triples to evaluate".into()));
    }
    let mut items = Vec::with_capacity(triples.len());
    for chunk in triples.chunks(CHUNK) {
        let (x, xt, params) = triple_batch(chunk)?;
        let out = model.forward_transformed_rows(&x, &params)?;
        for i in 0..chunk.len() {
            let target = item(&xt, i)?;
            items.push(ItemError {
                model: loss.eval(&item(&out, i)?, &target)?.item(),
                baseline: loss.eval(&item(&x, i)?, &target)?.item(),
            });
        }
    }
    let n = items.len() as f64;
    Ok(ReconstructionReport {
        mean: items.iter().map(|e| e.model).sum::<f64>() / n,
        baseline_mean: items.iter().map(|e| e.baseline).sum::<f64>() / n,
        items,
    })
}

/// Mean L1 of `decode(encode(x))` against `x`.
pub fn plain_reconstruction_error(
    model: &dyn Autoencoder,
    images: &[crate::datagen::Image],
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in images.chunks(CHUNK) {
        let x = images_tensor(chunk)?;
        let out = model.decode(&model.encode(&x)?)?;
        total += l1_loss(&out, &x)?.item() * chunk.len() as f64;
    }
    Ok(total / images.len() as f64)
}

/// What the classifier head sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Invariant signature of the code.
    Signature,
    /// The code itself.
    RawCode,
}

/// Features `[N, D]` for every image of `dataset`.
pub fn dataset_features(
    model: &dyn Autoencoder,
    dataset: &Dataset,
    kind: FeatureKind,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut width = 0;
    for chunk in dataset.images.chunks(CHUNK) {
        let code = model.encode(&images_tensor(chunk)?)?;
        let f = match kind {
            FeatureKind::Signature => invariant_signature(model.family(), &code)?,
            FeatureKind::RawCode => code,
        };
        width = f.shape()[1];
        data.extend_from_slice(f.data());
    }
    Ok(Tensor::new(data, &[dataset.len(), width])?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    /// `1 − accuracy`.
    pub error: f64,
    pub total: usize,
    pub correct: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Argmax (first maximum) of each score row against the labels.
pub fn classifier_metrics(scores: &Tensor, labels: &[u8]) -> Result<ClassifierReport> {
    let s = scores.shape();
    if s.len() != 2 || s[0] != labels.len() || labels.is_empty() {
        return Err(Error::Dimension {
            context: "classifier score rows",
            expected: labels.len(),
            got: s.first().copied().unwrap_or(0),
        });
    }
    let k = s[1];
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::Parameter(format!("label {bad} outside {k} classes")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    for (row, &label) in scores.data().chunks(k).zip(labels) {
        let pred = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
        confusion[label as usize][pred] += 1;
        correct += usize::from(pred == label as usize);
    }
    let accuracy = correct as f64 / labels.len() as f64;
    Ok(ClassifierReport {
        accuracy,
        error: 1.0 - accuracy,
        total: labels.len(),
        correct,
        confusion,
    })
}

/// Classify every image of a labeled dataset.
pub fn evaluate_classifier(
    model: &dyn Autoencoder,
    head: &ClassifierHead,
    dataset: &Dataset,
    kind: FeatureKind,
) -> Result<ClassifierReport> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::Parameter("classifier evaluation needs a labeled dataset".into()))?;
    let features = dataset_features(model, dataset, kind)?;
    classifier_metrics(&head.scores(&features)?, labels)
}

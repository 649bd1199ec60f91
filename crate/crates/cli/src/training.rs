//! Minibatch Adam training of the encoder, feature transform and decoder.

use std::path::Path;
use std::time::Instant;

use ftl_core::datagen::{images_tensor, shuffled_order, Dataset, TrainingTriple};
use ftl_core::evaluation::{dataset_features, transformed_reconstruction_error};
use ftl_core::network::{Checkpoint, ClassifierHead, HeadConfig, Model};
use ftl_core::objectives::{combined_classification_loss, invariance_regularizer};
use ftl_core::transform::invariant_signature;
use ftl_tensor::{Adam, AdamConfig, BatchNormMode, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{ClassifierSpec, DataSpec, RunConfig};
use crate::data::{shuffle_seed, sub_seed, Source};
use crate::error::{CliError, CliResult};

pub const LOSS_COLUMNS: [&str; 6] = [
    "step",
    "loss",
    "recon",
    "regularizer",
    "classification",
    "wall_time",
];

const HEAD_SALT: u64 = 0x30;

/// Window means since the previous row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub recon: f64,
    pub regularizer: f64,
    pub classification: f64,
    pub wall_time: f64,
}

pub fn loss_csv(rows: &[LogRow]) -> String {
    let mut s = LOSS_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.step, r.loss, r.recon, r.regularizer, r.classification, r.wall_time
        ));
    }
    s
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<LogRow>,
    pub steps: u64,
    /// Eval-mode transformed reconstruction loss on the held-out triples.
    pub final_loss: f64,
}

/// Steps the run performs: `iterations`, or whole epochs of full batches.
pub fn total_steps(cfg: &RunConfig, epoch_len: usize) -> u64 {
    cfg.iterations
        .unwrap_or(cfg.epochs as u64 * (epoch_len / cfg.batch_size) as u64)
}

fn joint_label(cfg: &RunConfig, t: &TrainingTriple) -> usize {
    match cfg.data {
        DataSpec::Synthetic {
            variants_per_shape, ..
        } => t.glyph / variants_per_shape,
        DataSpec::Idx { .. } => t.glyph,
    }
}

/// Train from the config's seed. `ckpt_dir` receives periodic checkpoints.
pub fn train(cfg: &RunConfig, ckpt_dir: Option<&Path>) -> CliResult<TrainOutcome> {
    train_with(cfg, &Source::load(cfg)?, ckpt_dir)
}

pub fn train_with(
    cfg: &RunConfig,
    source: &Source,
    ckpt_dir: Option<&Path>,
) -> CliResult<TrainOutcome> {
    let family = cfg.model.family.clone();
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut adam = Adam::new(cfg.optimizer.adam(), &model.params().sizes());
    let joint = cfg.loss.classification_weight > 0.0;
    let mut head = match (&cfg.classifier, joint) {
        (Some(spec), true) => Some(ClassifierHead::new(
            head_config(spec, family.signature_len()),
            sub_seed(cfg.seed, HEAD_SALT),
        )?),
        _ => None,
    };
    let mut head_adam = head
        .as_ref()
        .map(|h| Adam::new(cfg.optimizer.adam(), &h.params().sizes()));
    let loss = cfg.recon_loss();
    let reg_w = if cfg.transform_pathway {
        cfg.loss.regularizer_weight
    } else {
        0.0
    };

    if source.epoch_len() < cfg.batch_size {
        return Err(CliError::Usage("training set cannot fill one batch".into()));
    }
    let total = total_steps(cfg, source.epoch_len());
    let start = Instant::now();
    let mut history = Vec::new();
    let mut window = [0.0f64; 4];
    let mut window_len = 0usize;
    let mut step = 0u64;
    let mut epoch = 0usize;
    while step < total {
        let triples = source.epoch_triples(cfg, epoch)?;
        let order = shuffled_order(triples.len(), shuffle_seed(cfg.seed, epoch));
        for idx in order.chunks_exact(cfg.batch_size) {
            if step >= total {
                break;
            }
            let batch: Vec<&TrainingTriple> = idx.iter().map(|&i| &triples[i]).collect();
            let n = batch.len();
            let xt = images_tensor(batch.iter().map(|t| &t.x_t))?;
            let params: Vec<_> = batch.iter().map(|t| t.params.clone()).collect();
            adam.set_learning_rate(cfg.optimizer.lr_at(step));
            let vars = model.vars(true)?;

            let (e_x, e_xt) = if reg_w > 0.0 {
                let both = images_tensor(
                    batch
                        .iter()
                        .map(|t| &t.x)
                        .chain(batch.iter().map(|t| &t.x_t)),
                )?;
                let codes = model.encode_with(&vars, &both, BatchNormMode::Train)?;
                let d = family.feature_dim();
                let flat = codes.reshape(&[1, 2 * n * d])?;
                (
                    flat.narrow(0, n * d)?.reshape(&[n, d])?,
                    Some(flat.narrow(n * d, n * d)?.reshape(&[n, d])?),
                )
            } else {
                let x = images_tensor(batch.iter().map(|t| &t.x))?;
                (model.encode_with(&vars, &x, BatchNormMode::Train)?, None)
            };
            let moved = model.transform_rows(&e_x, &params)?;
            let out = model.decode_with(&vars, &moved, BatchNormMode::Train)?;
            let recon = loss.eval(&out, &xt)?;
            let mut objective = recon.clone();
            let mut reg_value = 0.0;
            if let Some(e_xt) = &e_xt {
                let reg = invariance_regularizer(&family, &e_x, e_xt)?;
                reg_value = reg.item();
                objective = objective.add(&reg.mul_scalar(reg_w))?;
            }
            let mut cls_value = 0.0;
            let head_vars = match &head {
                Some(h) => {
                    let hv = h.params().tensors(true)?;
                    let labels: Vec<usize> = batch.iter().map(|t| joint_label(cfg, t)).collect();
                    let scores = h.forward_with(&hv, &invariant_signature(&family, &e_x)?)?;
                    let before = objective.item();
                    objective = combined_classification_loss(
                        &objective,
                        &scores,
                        &labels,
                        cfg.loss.classification_weight,
                    )?;
                    cls_value = (objective.item() - before) / cfg.loss.classification_weight;
                    Some(hv)
                }
                None => None,
            };
            objective.backward()?;
            model.adam_step(&mut adam, &vars)?;
            if let (Some(h), Some(hv), Some(ha)) = (head.as_mut(), head_vars, head_adam.as_mut()) {
                ha.set_learning_rate(cfg.optimizer.lr_at(step));
                h.params_mut().adam_step(ha, &hv)?;
            }
            step += 1;

            for (w, v) in
                window
                    .iter_mut()
                    .zip([objective.item(), recon.item(), reg_value, cls_value])
            {
                *w += v;
            }
            window_len += 1;
            if step % cfg.log_every == 0 {
                let k = window_len as f64;
                history.push(LogRow {
                    step,
                    loss: window[0] / k,
                    recon: window[1] / k,
                    regularizer: window[2] / k,
                    classification: window[3] / k,
                    wall_time: start.elapsed().as_secs_f64(),
                });
                window = [0.0; 4];
                window_len = 0;
            }
            if let (Some(every), Some(dir)) = (cfg.checkpoint_every, ckpt_dir) {
                if step % every == 0 {
                    let ck = Checkpoint {
                        model: model.clone(),
                        head: head.clone(),
                        optimizer: Some(adam.clone()),
                        seed: cfg.seed,
                        step,
                    };
                    ck.save(dir.join(format!("checkpoint_{step:08}.ckpt")))?;
                }
            }
        }
        epoch += 1;
    }

    if let Some(spec) = &cfg.classifier {
        let (train_set, _) = source.labeled_sets(cfg, spec)?;
        head = Some(fit_head(
            &model,
            &train_set,
            spec,
            head,
            sub_seed(cfg.seed, HEAD_SALT + 1),
        )?);
    }
    let final_loss =
        transformed_reconstruction_error(&model, &source.eval_triples(cfg)?, loss)?.mean;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            head,
            optimizer: Some(adam),
            seed: cfg.seed,
            step,
        },
        history,
        steps: step,
        final_loss,
    })
}

pub fn head_config(spec: &ClassifierSpec, input_dim: usize) -> HeadConfig {
    HeadConfig {
        input_dim,
        hidden: spec.hidden,
        classes: spec.classes,
    }
}

/// Train a classifier head on frozen features of a labeled set. A jointly
/// trained head keeps its standardization; a fresh one fits it first.
pub fn fit_head(
    model: &Model,
    train_set: &Dataset,
    spec: &ClassifierSpec,
    head: Option<ClassifierHead>,
    seed: u64,
) -> CliResult<ClassifierHead> {
    let labels: Vec<usize> = train_set
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Usage("classifier training needs labels".into()))?
        .iter()
        .map(|&l| l as usize)
        .collect();
    let features = dataset_features(model, train_set, spec.features)?;
    let width = features.shape()[1];
    let mut head = match head {
        Some(h) => h,
        None => {
            let mut h = ClassifierHead::new(head_config(spec, width), seed)?;
            h.fit_normalizer(&features)?;
            h
        }
    };
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.classes) {
        return Err(CliError::Usage(format!(
            "label {bad} outside {} classifier classes",
            spec.classes
        )));
    }
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: spec.lr,
            ..AdamConfig::default()
        },
        &head.params().sizes(),
    );
    let rows = features.data();
    for epoch in 0..spec.epochs {
        let order = shuffled_order(labels.len(), sub_seed(seed, epoch as u64));
        for idx in order.chunks_exact(spec.batch_size) {
            let data: Vec<f64> = idx
                .iter()
                .flat_map(|&i| rows[i * width..(i + 1) * width].iter().copied())
                .collect();
            let batch = Tensor::new(data, &[idx.len(), width])?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let vars = head.params().tensors(true)?;
            head.forward_with(&vars, &batch)?
                .softmax_cross_entropy(&y)?
                .backward()?;
            head.params_mut().adam_step(&mut adam, &vars)?;
        }
    }
    Ok(head)
}

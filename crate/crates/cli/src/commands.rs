//! Subcommands: argument parsing and the files each one writes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ftl_core::datagen::{export_triples, parse_idx_images, warp, DatagenSpec, WarpParams};
use ftl_core::evaluation::{
    config_hash, emit_report, evaluate_classifier, plain_reconstruction_error, stability_sweep,
    transformed_reconstruction_error, EvalReport, Metric, SweepIdentity,
};
use ftl_core::network::{Checkpoint, Model};
use ftl_core::transform::audit_homomorphism;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{load_family, LossKind, RunConfig};
use crate::data::{base_scale, sub_seed, Source};
use crate::error::{CliError, CliResult};
use crate::pgm::{mosaic, pgm_bytes, write_pgm};
use crate::sweep::{frame_match_rate, parse_grid, sweep_frames, sweep_params};
use crate::training::{loss_csv, train_with};

pub const CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const AUDIT_FILE: &str = "audit.json";

const SWEEP_SALT: u64 = 0x40;

#[derive(Debug, Parser)]
#[command(
    name = "ftl",
    version,
    about = "Feature transform layer training and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder-decoder through the feature transform layer.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out triples and labeled data.
    Eval(EvalArgs),
    /// Decode a parameter sweep and measure signature stability.
    Sweep(SweepArgs),
    /// Check the algebraic properties of a transform family.
    Audit(AuditArgs),
    /// Export a synthetic triple dataset.
    Datagen(DatagenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Reconstruction loss: l1, face or balanced_bce.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "reg-weight")]
    pub reg_weight: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dof: String,
    /// `a:b:n`: n values from a to b inclusive.
    #[arg(long)]
    pub grid: String,
    /// Number of inputs drawn from the run's data, or an IDX image file.
    #[arg(long, default_value = "4")]
    pub inputs: String,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    /// Family JSON file, or one of mnist, desk, tiny, face.
    #[arg(long, default_value = "mnist")]
    pub family: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "runs/audit")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DatagenArgs {
    /// Dataset spec JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value = "runs/datagen")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
        Command::Audit(a) => cmd_audit(&a).map(|_| ()),
        Command::Datagen(a) => cmd_datagen(&a).map(|_| ()),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Preset, config file, then flag overrides.
pub fn resolve_train_config(a: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::resolve(a.common.preset.as_deref(), a.common.config.as_deref())?;
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.common.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = a.lr {
        cfg.optimizer.lr = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
        cfg.iterations = None;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = Some(v);
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = &a.loss {
        cfg.loss.kind = serde_json::from_value::<LossKind>(serde_json::Value::String(v.clone()))
            .map_err(|_| {
                CliError::Usage(format!(
                    "unknown loss {v:?}; expected l1, face or balanced_bce"
                ))
            })?;
    }
    if let Some(v) = a.alpha {
        cfg.loss.alpha = v;
    }
    if let Some(v) = a.gamma {
        cfg.loss.gamma = v;
    }
    if let Some(v) = a.reg_weight {
        cfg.loss.regularizer_weight = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub threads: usize,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    pub eval_count: usize,
    pub checkpoint: String,
}

/// Writes the resolved config and run metadata, then trains.
pub fn cmd_train(a: &TrainArgs) -> CliResult<TrainSummary> {
    let cfg = resolve_train_config(a)?;
    let source = Source::load(&cfg)?;
    let dir = cfg.out_dir.clone();
    create_dir(&dir)?;
    write(&dir.join(CONFIG_FILE), pretty(&cfg))?;
    let info = RunInfo {
        seed: cfg.seed,
        config_hash: config_hash(&cfg)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        args: std::env::args().collect(),
    };
    write(&dir.join(RUN_FILE), pretty(&info))?;
    let outcome = train_with(&cfg, &source, Some(&dir))?;
    outcome.checkpoint.save(dir.join(CHECKPOINT_FILE))?;
    write(&dir.join(LOSS_FILE), loss_csv(&outcome.history))?;
    let summary = TrainSummary {
        steps: outcome.steps,
        final_loss: outcome.final_loss,
        eval_count: cfg.eval_count,
        checkpoint: CHECKPOINT_FILE.into(),
    };
    write(&dir.join(SUMMARY_FILE), pretty(&summary))?;
    println!(
        "trained {} steps; held-out loss {:.6}; outputs in {}",
        summary.steps,
        summary.final_loss,
        dir.display()
    );
    Ok(summary)
}

/// The run's config: an explicit file or preset, else `config.json` next to
/// the checkpoint.
fn config_for_checkpoint(common: &ConfigArgs, checkpoint: &Path) -> CliResult<RunConfig> {
    let sibling = checkpoint.parent().map(|p| p.join(CONFIG_FILE));
    let file = match (&common.config, &common.preset, sibling) {
        (Some(f), _, _) => Some(f.clone()),
        (None, None, Some(s)) if s.exists() => Some(s),
        _ => None,
    };
    let mut cfg = RunConfig::resolve(common.preset.as_deref(), file.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_compatible(path: &Path, cfg: &RunConfig) -> CliResult<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.model.family() != &cfg.model.family {
        return Err(CliError::Incompatible(format!(
            "checkpoint family has feature dimension {} and dofs [{}]; the config expects {} and [{}]",
            ck.model.family().feature_dim(),
            dof_names(ck.model.family()),
            cfg.model.family.feature_dim(),
            dof_names(&cfg.model.family)
        )));
    }
    if ck.model.config() != &cfg.model {
        return Err(CliError::Incompatible(
            "checkpoint architecture differs from the config's model".into(),
        ));
    }
    Ok(ck)
}

fn dof_names(f: &ftl_core::transform::TransformFamily) -> String {
    f.dofs()
        .iter()
        .map(|d| d.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn out_dir(common: &ConfigArgs, checkpoint: &Path, name: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join(name))
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<EvalReport> {
    let cfg = config_for_checkpoint(&a.common, &a.checkpoint)?;
    let ck = load_compatible(&a.checkpoint, &cfg)?;
    let source = Source::load(&cfg)?;
    let report = evaluate(&cfg, &source, &ck)?;
    let dir = out_dir(&a.common, &a.checkpoint, "eval");
    let files = emit_report(&report, &dir)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report.metrics).expect("serializable")
    );
    println!("wrote {}", files[0].display());
    Ok(report)
}

/// Held-out reconstruction metrics and, with a head and a classifier
/// section, classification metrics on the labeled test set.
pub fn evaluate(cfg: &RunConfig, source: &Source, ck: &Checkpoint) -> CliResult<EvalReport> {
    let model = &ck.model;
    let triples = source.eval_triples(cfg)?;
    let recon = transformed_reconstruction_error(model, &triples, cfg.recon_loss())?;
    let sources: Vec<_> = triples.iter().map(|t| t.x.clone()).collect();
    let mut report = EvalReport::new(format!("eval-{}", cfg.seed), cfg.seed, &cfg.preset, cfg)?;
    report.insert("transformed_recon", &recon.mean)?;
    report.insert("identity_baseline", &recon.baseline_mean)?;
    report.insert("baseline_ratio", &recon.ratio())?;
    report.insert(
        "plain_recon_l1",
        &plain_reconstruction_error(model, &sources)?,
    )?;
    report.insert("eval_count", &triples.len())?;
    if let (Some(head), Some(spec)) = (&ck.head, &cfg.classifier) {
        let (_, test) = source.labeled_sets(cfg, spec)?;
        report.insert(
            "classifier",
            &evaluate_classifier(model, head, &test, spec.features)?,
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub report: EvalReport,
    pub frames: crate::sweep::SweepFrames,
    pub files: Vec<PathBuf>,
}

/// Sweep inputs: `count` items of the run's data at random poses.
pub fn sweep_inputs(
    cfg: &RunConfig,
    source: &Source,
    count: usize,
    seed: u64,
) -> CliResult<Vec<SweepIdentity>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick: Vec<(ftl_core::datagen::Image, f64)> = match source {
        Source::Glyphs { pool, .. } => {
            let shapes = ftl_core::datagen::GlyphShape::ALL.len();
            let per = pool.len() / shapes;
            (0..count)
                .map(|i| (pool[(i % shapes) * per].raster.clone(), 1.0))
                .collect()
        }
        Source::Images { train, eval } => {
            let ds = eval.as_ref().unwrap_or(train);
            let base = base_scale(&cfg.model.family);
            ds.images
                .iter()
                .take(count)
                .map(|img| (img.clone(), base))
                .collect()
        }
    };
    if pick.len() < count {
        return Err(CliError::Usage(format!(
            "only {} sweep inputs available",
            pick.len()
        )));
    }
    pick.into_iter()
        .map(|(img, base)| {
            let pose = rng.gen_range(0.0..std::f64::consts::TAU);
            let image = warp(
                &img,
                &WarpParams {
                    rotation: pose,
                    scale_x: base,
                    scale_y: base,
                },
            )?;
            Ok(SweepIdentity { image, pose })
        })
        .collect()
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<SweepOutput> {
    let cfg = config_for_checkpoint(&a.common, &a.checkpoint)?;
    let ck = load_compatible(&a.checkpoint, &cfg)?;
    let model: &Model = &ck.model;
    let grid = parse_grid(&a.grid)?;
    for &v in &grid {
        sweep_params(model, &a.dof, v)?;
    }
    let inputs = match a.inputs.parse::<usize>() {
        Ok(n) => sweep_inputs(
            &cfg,
            &Source::load(&cfg)?,
            n,
            sub_seed(cfg.seed, SWEEP_SALT),
        )?,
        Err(_) => {
            let path = Path::new(&a.inputs);
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            parse_idx_images(&bytes)?
                .into_iter()
                .map(|image| SweepIdentity { image, pose: 0.0 })
                .collect()
        }
    };
    if inputs.is_empty() {
        return Err(CliError::Usage("sweep needs at least one input".into()));
    }
    let frames = sweep_frames(model, &inputs, &a.dof, &grid)?;
    let mut report = EvalReport::new(format!("sweep-{}", cfg.seed), cfg.seed, &cfg.preset, &cfg)?;
    report.insert("dof", &a.dof)?;
    report.insert("frame_match_rate", &frame_match_rate(&frames))?;
    if inputs.len() >= 2 && grid.len() >= 2 {
        report.curves.push(stability_sweep(
            model,
            &inputs,
            &a.dof,
            &grid,
            Metric::Cosine,
        )?);
    }

    let dir = out_dir(&a.common, &a.checkpoint, "sweep");
    let frame_dir = dir.join("frames");
    create_dir(&frame_dir)?;
    let mut files = Vec::new();
    for (i, row) in frames.decoded.iter().enumerate() {
        for (j, img) in row.iter().enumerate() {
            let p = frame_dir.join(format!("input{i:03}_frame{j:03}.pgm"));
            write_pgm(&p, img)?;
            files.push(p);
        }
    }
    for (name, rows) in [
        ("sweep.pgm", &frames.decoded),
        ("ground_truth.pgm", &frames.truth),
    ] {
        let (w, h, px) = mosaic(rows);
        let p = dir.join(name);
        write(&p, pgm_bytes(w, h, &px))?;
        files.push(p);
    }
    files.extend(emit_report(&report, &dir)?);
    println!(
        "swept {} over {} values for {} inputs; frame match rate {:.3}; outputs in {}",
        a.dof,
        grid.len(),
        inputs.len(),
        frame_match_rate(&frames),
        dir.display()
    );
    Ok(SweepOutput {
        report,
        frames,
        files,
    })
}

pub fn cmd_audit(a: &AuditArgs) -> CliResult<ftl_core::transform::AuditReport> {
    if a.trials == 0 {
        return Err(CliError::Usage("audit needs at least one trial".into()));
    }
    let family = load_family(&a.family)?;
    let report = audit_homomorphism(&family, a.trials, a.seed)?;
    create_dir(&a.out)?;
    let text = pretty(&report);
    write(&a.out.join(AUDIT_FILE), &text)?;
    print!("{text}");
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::AuditFailed(format!(
            "residuals over threshold: {}",
            report.failures().join(", ")
        )))
    }
}

pub fn cmd_datagen(a: &DatagenArgs) -> CliResult<ftl_core::datagen::Manifest> {
    let mut spec: DatagenSpec = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("dataset spec {}: {e}", p.display())))?
        }
        None => DatagenSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(c) = a.count {
        spec.count = c;
    }
    spec.validate()?;
    let manifest = export_triples(&a.out, &spec, &spec.generate()?)?;
    println!("wrote {} triples to {}", manifest.count, a.out.display());
    Ok(manifest)
}

//! The `hdrfeat` command line.
//!
//! Exit status is 0 on success, 1 when a verification or run fails, 2 for
//! usage and configuration errors and 3 when a required artifact (checkpoint,
//! scene, ground truth) is missing.

mod config;
pub mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::imageio::{
    load_dataset, load_sample, write_hdr_rgbe, write_preview, ExposureStack, ImageError, SceneLayout,
};
use crate::model::{forward, load_checkpoint, param_count, AttentionMode, HdrFeatConfig, ModelError};
use crate::train::{evaluate, TrainError};

pub use config::{ConfigError, RunConfig, DATA_ROOT_ENV, RESOLVED_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "hdrfeat", version, about = "Multi-exposure HDR reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a run config; writes checkpoints and the loss history.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset root with one directory per scene.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct one scene, or every scene under a root.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a checkpoint on a dataset with ground truth.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Finite-difference gradient suite on the reduced network.
    Gradcheck {
        /// Check every parameter of the reduced network instead of a seeded
        /// sample of each tensor.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print parameter counts per component and the config fingerprint.
    Inspect {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let cfg = RunConfig::load(self.config.as_deref(), &self.set).map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.validate().map_err(CliError::Usage)?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
    Missing(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Failed(_) => 1,
            Self::Usage(_) => 2,
            Self::Missing(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Failed(m) | Self::Missing(m) => m,
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Missing { .. } => Self::Missing(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MissingCheckpoint { .. } => Self::Missing(e.to_string()),
            ModelError::InvalidConfig(_) | ModelError::Fingerprint { .. } => Self::Usage(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Image(i) => i.into(),
            TrainError::MissingGroundTruth(_) => Self::Missing(e.to_string()),
            TrainError::InvalidConfig(_) => Self::Usage(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

fn io_failed(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, data, out } => cmd_train(&config, data, out),
        Command::Infer {
            ckpt,
            scene,
            out,
            config,
        } => cmd_infer(&ckpt, &scene, &out, &config),
        Command::Eval {
            ckpt,
            data,
            report,
            config,
        } => cmd_eval(&ckpt, data, &report, &config),
        Command::Gradcheck { full, seed } => cmd_gradcheck(full, seed),
        Command::Inspect { config } => cmd_inspect(&config),
    }
}

fn cmd_train(args: &ConfigArgs, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = args.resolve()?;
    if let Some(d) = data {
        cfg.data_root = Some(d);
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    let root = cfg
        .data_root
        .clone()
        .ok_or_else(|| CliError::Usage(format!("no data root: pass --data, set data_root or {DATA_ROOT_ENV}")))?;
    let dataset = load_dataset(&root, &SceneLayout::default())?;
    cfg.write_resolved(&cfg.out_dir)
        .map_err(|e| io_failed(&cfg.out_dir, e))?;
    let (model, tcfg) = (cfg.model(), cfg.train());
    let start = Instant::now();
    let report_every = (tcfg.epochs / 20).max(1);
    let weights = crate::model::init_weights(&model, tcfg.seed)?;
    let outcome = crate::train::train_with(weights, &dataset, &model, &tcfg, Some(&cfg.out_dir), |r| {
        if r.epoch % report_every == 0 || r.epoch + 1 == tcfg.epochs {
            eprintln!("epoch {:>6}  lr {:.1e}  loss {:.6}", r.epoch, r.lr, r.loss);
        }
    })?;
    let last = outcome.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} epochs on {} scenes, final loss {last:.6}",
        tcfg.epochs,
        dataset.len()
    );
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// A directory holding the exposure file is one scene; otherwise every
/// subdirectory is.
fn load_scenes(path: &Path) -> Result<Vec<ExposureStack>, CliError> {
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "{}: no such scene directory",
            path.display()
        )));
    }
    let layout = SceneLayout::default();
    if path.join(&layout.exposures).exists() {
        Ok(vec![load_sample(path)?])
    } else {
        Ok(load_dataset(path, &layout)?)
    }
}

fn checkpoint_config(ckpt: &Path, args: &ConfigArgs) -> Result<(RunConfig, crate::model::Checkpoint), CliError> {
    let checkpoint = load_checkpoint(ckpt)?;
    let mut cfg = args.resolve()?;
    let stored = RunConfig::from_parts(&checkpoint.config, &cfg.train());
    // Architecture keys left at their defaults defer to the checkpoint.
    let configured = cfg.model();
    if configured != HdrFeatConfig::default() && configured != checkpoint.config {
        return Err(CliError::Usage(format!(
            "{}: checkpoint architecture {} differs from the configured {}",
            ckpt.display(),
            checkpoint.config.fingerprint(),
            configured.fingerprint()
        )));
    }
    cfg = RunConfig {
        data_root: cfg.data_root,
        out_dir: cfg.out_dir,
        checkpoint: Some(ckpt.to_owned()),
        ..stored
    };
    Ok((cfg, checkpoint))
}

fn cmd_infer(ckpt: &Path, scene: &Path, out: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let (mut cfg, checkpoint) = checkpoint_config(ckpt, args)?;
    let scenes = load_scenes(scene)?;
    cfg.out_dir = out.to_owned();
    cfg.write_resolved(out).map_err(|e| io_failed(out, e))?;
    for stack in &scenes {
        let pred = forward(stack, &checkpoint.config, &checkpoint.weights, cfg.gamma)?;
        let hdr = out.join(format!("{}.hdr", stack.sample_id()));
        write_hdr_rgbe(&pred, &hdr)?;
        write_preview(&pred, cfg.mu, out.join(format!("{}_preview.ppm", stack.sample_id())))?;
        println!("{}", hdr.display());
    }
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: Option<PathBuf>, report: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let (mut cfg, checkpoint) = checkpoint_config(ckpt, args)?;
    if let Some(d) = data {
        cfg.data_root = Some(d);
    }
    let root = cfg
        .data_root
        .clone()
        .ok_or_else(|| CliError::Usage(format!("no data root: pass --data, set data_root or {DATA_ROOT_ENV}")))?;
    let scenes = load_scenes(&root)?;
    let result = evaluate(&scenes, &checkpoint.weights, &checkpoint.config, cfg.mu, cfg.gamma)?;
    let dir = match report.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    };
    cfg.out_dir = dir.clone();
    cfg.write_resolved(&dir).map_err(|e| io_failed(&dir, e))?;
    std::fs::write(report, result.to_text()).map_err(|e| io_failed(report, e))?;
    let m = &result.mean;
    println!(
        "{} samples  PSNR-T {:.3}  PSNR-L {:.3}  SSIM-T {:.5}  SSIM-L {:.5}",
        result.samples.len(),
        m.psnr_t,
        m.psnr_l,
        m.ssim_t,
        m.ssim_l
    );
    eprintln!("elapsed {:.2}s", result.runtime.as_secs_f64());
    Ok(())
}

/// Depth 1 to 3 without attention and with sequential attention, plus
/// parallel attention at depth 3.
pub fn ablation_grid() -> Vec<HdrFeatConfig> {
    let mut grid = Vec::with_capacity(7);
    for attention in [AttentionMode::None, AttentionMode::Sequential] {
        for depth in 1..=3 {
            grid.push(HdrFeatConfig::reduced().with_depth(depth).with_attention(attention));
        }
    }
    grid.push(HdrFeatConfig::reduced().with_attention(AttentionMode::Parallel));
    grid
}

fn cmd_gradcheck(full: bool, seed: u64) -> Result<(), CliError> {
    let failed = |e: &dyn std::fmt::Display| CliError::Failed(e.to_string());
    let mut outcomes = verify::kernel_suite(seed).map_err(|e| failed(&e))?;
    for mode in [AttentionMode::Sequential, AttentionMode::Parallel] {
        outcomes.push(verify::attention_check(mode, seed).map_err(|e| failed(&e))?);
    }
    for cfg in ablation_grid() {
        let sample = if full && cfg == HdrFeatConfig::reduced() {
            None
        } else {
            Some(2)
        };
        outcomes.push(verify::model_check(&cfg, 8, sample, seed).map_err(|e| failed(&e))?);
    }
    let mut worst: Option<&verify::CheckOutcome> = None;
    for o in &outcomes {
        println!("{} {}", if o.passed() { "ok  " } else { "FAIL" }, o.summary());
        if !o.passed() && worst.is_none_or(|w| o.report.max_rel_error > w.report.max_rel_error) {
            worst = Some(o);
        }
    }
    match worst {
        None => Ok(()),
        Some(o) => Err(CliError::Failed(format!(
            "gradient check failed in {}; worst tensor {}",
            o.name,
            o.report.worst_tensor().unwrap_or("(none checked)")
        ))),
    }
}

fn cmd_inspect(args: &ConfigArgs) -> Result<(), CliError> {
    let model = args.resolve()?.model();
    let counts = param_count(&model);
    for (component, n) in &counts.components {
        println!("{component:<10} {n:>10}");
    }
    println!("{:<10} {:>10}", "total", counts.total());
    println!("fingerprint {}", model.fingerprint());
    Ok(())
}

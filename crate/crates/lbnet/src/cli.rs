//! Command-line front end: `key = value` config files, the four
//! subcommands, and exit-code mapping.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_png, save_png, DatasetIndex, Image};
use crate::error::{Error, Result};
use crate::eval::{evaluate, BicubicBaseline, NetUpscaler, Upscaler};
use crate::model::{profile, FusionMode, LBNet, ModelConfig};
use crate::train::{load_checkpoint, save_checkpoint, train, Adam, TrainOptions};

/// Everything a config file can set. Model keys left unset fall back to the
/// chosen variant's preset; run keys fall back to the defaults below.
#[derive(Clone, Debug)]
pub struct AppConfig {
    pub variant: String,
    pub scale: usize,
    pub channels: Option<usize>,
    pub n_lffm: Option<usize>,
    pub recursions: Option<usize>,
    pub tm_count: Option<usize>,
    pub heads: Option<usize>,
    pub mlp_ratio: Option<usize>,
    pub ca_reduction: Option<usize>,
    pub sa_kernel: Option<usize>,
    pub fusion_mode: Option<FusionMode>,
    pub qk_reduction: Option<usize>,
    pub tm_dim: Option<usize>,
    pub rt_enabled: Option<bool>,
    pub share_down_weights: Option<bool>,
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    pub patch: usize,
    pub seed: u64,
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            variant: "lbnet".to_string(),
            scale: 4,
            channels: None,
            n_lffm: None,
            recursions: None,
            tm_count: None,
            heads: None,
            mlp_ratio: None,
            ca_reduction: None,
            sa_kernel: None,
            fusion_mode: None,
            qk_reduction: None,
            tm_dim: None,
            rt_enabled: None,
            share_down_weights: None,
            lr_max: 2e-4,
            lr_min: 6.25e-6,
            total_steps: 500,
            batch_size: 16,
            patch: 48,
            seed: 0,
            train_dir: None,
            val_dir: None,
            checkpoint_dir: None,
        }
    }
}

impl AppConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Parse `key = value` lines; `#` starts a comment. Unknown and repeated
    /// keys are rejected with their line number.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = AppConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(Error::Config(format!("line {lineno}: empty value for {key}")));
            }
            if seen.iter().any(|s| s == key) {
                return Err(Error::Config(format!("line {lineno}: duplicate key {key}")));
            }
            let us = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Config(format!("line {lineno}: bad integer {v}")))
            };
            let fl = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::Config(format!("line {lineno}: bad number {v}")))
            };
            let bl = |v: &str| -> Result<bool> {
                v.parse().map_err(|_| Error::Config(format!("line {lineno}: bad flag {v}")))
            };
            match key {
                "variant" => cfg.variant = value.to_string(),
                "scale" => cfg.scale = us(value)?,
                "channels" => cfg.channels = Some(us(value)?),
                "n_lffm" => cfg.n_lffm = Some(us(value)?),
                "recursions" => cfg.recursions = Some(us(value)?),
                "tm_count" => cfg.tm_count = Some(us(value)?),
                "heads" => cfg.heads = Some(us(value)?),
                "mlp_ratio" => cfg.mlp_ratio = Some(us(value)?),
                "ca_reduction" => cfg.ca_reduction = Some(us(value)?),
                "sa_kernel" => cfg.sa_kernel = Some(us(value)?),
                "fusion_mode" => cfg.fusion_mode = Some(FusionMode::parse(value)?),
                "qk_reduction" => cfg.qk_reduction = Some(us(value)?),
                "tm_dim" => cfg.tm_dim = Some(us(value)?),
                "rt_enabled" => cfg.rt_enabled = Some(bl(value)?),
                "share_down_weights" => cfg.share_down_weights = Some(bl(value)?),
                "lr_max" => cfg.lr_max = fl(value)?,
                "lr_min" => cfg.lr_min = fl(value)?,
                "total_steps" => cfg.total_steps = us(value)?,
                "batch_size" => cfg.batch_size = us(value)?,
                "patch" => cfg.patch = us(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("line {lineno}: bad integer {value}")))?
                }
                "train_dir" => cfg.train_dir = Some(PathBuf::from(value)),
                "val_dir" => cfg.val_dir = Some(PathBuf::from(value)),
                "checkpoint_dir" => cfg.checkpoint_dir = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Config(format!("line {lineno}: unknown key {other}")))
                }
            }
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    /// Variant preset with this config's overrides applied, validated.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut mc = ModelConfig::variant(&self.variant, self.scale)?;
        if let Some(v) = self.channels {
            mc.channels = v;
        }
        if let Some(v) = self.n_lffm {
            mc.n_lffm = v;
        }
        if let Some(v) = self.recursions {
            mc.recursions = v;
        }
        if let Some(v) = self.tm_count {
            mc.tm_count = v;
        }
        if let Some(v) = self.heads {
            mc.heads = v;
        }
        if let Some(v) = self.mlp_ratio {
            mc.mlp_ratio = v;
        }
        if let Some(v) = self.ca_reduction {
            mc.ca_reduction = v;
        }
        if let Some(v) = self.sa_kernel {
            mc.sa_kernel = v;
        }
        if let Some(v) = self.fusion_mode {
            mc.fusion_mode = v;
        }
        if let Some(v) = self.qk_reduction {
            mc.qk_reduction = v;
        }
        if let Some(v) = self.tm_dim {
            mc.tm_dim = v;
        }
        if let Some(v) = self.rt_enabled {
            mc.rt_enabled = v;
        }
        if let Some(v) = self.share_down_weights {
            mc.share_down_weights = v;
        }
        mc.validate()?;
        Ok(mc)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            total_steps: self.total_steps,
            batch_size: self.batch_size,
            patch: self.patch,
            seed: self.seed,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lbnet",
    version,
    about = "Bimodal CNN/transformer single-image super-resolution"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from scratch or resume from a checkpoint.
    Train(TrainCmd),
    /// Score a checkpoint (or the bicubic baseline) on a validation set.
    Eval(EvalCmd),
    /// Print parameter and mult-add totals for a configuration.
    Profile(ProfileCmd),
    /// Upscale one PNG.
    Sr(SrCmd),
}

#[derive(Args)]
struct TrainCmd {
    /// Path to a key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Resume from this checkpoint instead of initializing fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Log every N steps.
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

#[derive(Args)]
struct EvalCmd {
    /// Path to a key = value config file (for val_dir).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to score; omit with --baseline to score plain bicubic.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the bicubic baseline instead of a checkpoint.
    #[arg(long, default_value_t = false)]
    baseline: bool,
}

#[derive(Args)]
struct ProfileCmd {
    /// Path to a key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Low-resolution input height the totals are quoted at.
    #[arg(long, default_value_t = 180)]
    height: usize,
    /// Low-resolution input width the totals are quoted at.
    #[arg(long, default_value_t = 320)]
    width: usize,
    /// Emit the full per-tensor table instead of the summary.
    #[arg(long, default_value_t = false)]
    tsv: bool,
}

#[derive(Args)]
struct SrCmd {
    /// Checkpoint holding the model to apply; omit with --baseline.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Upscale bicubically instead of with a model (requires --scale).
    #[arg(long, default_value_t = false)]
    baseline: bool,
    /// Scale factor for --baseline.
    #[arg(long)]
    scale: Option<usize>,
    /// Input PNG.
    #[arg(long)]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    output: PathBuf,
}

/// Entry point for the binary: parse argv and dispatch.
pub fn run() -> Result<()> {
    run_from(std::env::args().collect::<Vec<_>>())
}

fn run_from(argv: Vec<String>) -> Result<()> {
    let cli = Cli::parse_from(argv);
    match cli.command {
        Command::Train(cmd) => cmd_train(cmd),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::Profile(cmd) => cmd_profile(cmd),
        Command::Sr(cmd) => cmd_sr(cmd),
    }
}

fn load_eval_items(dir: &Path) -> Result<Vec<(String, Image)>> {
    let index = DatasetIndex::scan(dir)?;
    let images = index.load_all()?;
    Ok(index
        .paths()
        .iter()
        .zip(images)
        .map(|(p, img)| {
            let name =
                p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            (name, img)
        })
        .collect())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let app = AppConfig::parse_file(&cmd.config)?;
    let train_dir = app
        .train_dir
        .as_ref()
        .ok_or_else(|| Error::Config("train_dir is required to train".to_string()))?;
    let images = DatasetIndex::scan(train_dir)?.load_all()?;
    let options = app.train_options();

    let (mut model, mut opt, start) = match &cmd.resume {
        None => (LBNet::new(app.model_config()?, app.seed)?, Adam::new(), 0usize),
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let (model, step, opt) = ck.into_model()?;
            println!("resuming from {} at step {step}", path.display());
            (model, opt.unwrap_or_default(), step as usize)
        }
    };

    let total = options.total_steps;
    let log_every = cmd.log_every.max(1);
    train(&mut model, &mut opt, &images, &options, start..total, |log| {
        if log.step % log_every == 0 || log.step + 1 == total {
            println!("step {:>6}  lr {:.6e}  loss {:.6}", log.step, log.lr, log.loss);
        }
    })?;

    if let Some(dir) = &app.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}-x{}.lbnc", app.variant, app.scale));
        save_checkpoint(&path, &model, total as u64, Some(&opt))?;
        println!("saved {}", path.display());
    }

    if let Some(dir) = &app.val_dir {
        let items = load_eval_items(dir)?;
        let report = evaluate(&NetUpscaler { model: &model }, &items)?;
        print!("{}", report.tsv());
    }
    Ok(())
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    let app = AppConfig::parse_file(&cmd.config)?;
    let dir = app
        .val_dir
        .as_ref()
        .ok_or_else(|| Error::Config("val_dir is required to evaluate".to_string()))?;
    let items = load_eval_items(dir)?;
    let report = match (&cmd.checkpoint, cmd.baseline) {
        (Some(path), false) => {
            let (model, _, _) = load_checkpoint(path)?.into_model()?;
            evaluate(&NetUpscaler { model: &model }, &items)?
        }
        (None, true) => evaluate(&BicubicBaseline { scale: app.scale }, &items)?,
        _ => {
            return Err(Error::Usage(
                "pass exactly one of --checkpoint <path> or --baseline".to_string(),
            ))
        }
    };
    print!("{}", report.tsv());
    Ok(())
}

fn cmd_profile(cmd: ProfileCmd) -> Result<()> {
    let app = AppConfig::parse_file(&cmd.config)?;
    let model = LBNet::new(app.model_config()?, app.seed)?;
    let report = profile(&model, cmd.height, cmd.width);
    if cmd.tsv {
        print!("{}", report.tsv());
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

fn cmd_sr(cmd: SrCmd) -> Result<()> {
    let input = load_png(&cmd.input)?;
    let output = match (&cmd.checkpoint, cmd.baseline) {
        (Some(path), false) => {
            let (model, _, _) = load_checkpoint(path)?.into_model()?;
            NetUpscaler { model: &model }.upscale(&input)?
        }
        (None, true) => {
            let scale = cmd.scale.ok_or_else(|| {
                Error::Usage("--baseline needs --scale".to_string())
            })?;
            BicubicBaseline { scale }.upscale(&input)?
        }
        _ => {
            return Err(Error::Usage(
                "pass exactly one of --checkpoint <path> or --baseline".to_string(),
            ))
        }
    };
    save_png(&cmd.output, &output)?;
    println!("wrote {}", cmd.output.display());
    Ok(())
}

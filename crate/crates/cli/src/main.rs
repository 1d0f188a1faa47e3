use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tvae_cli::config::RunConfig;
use tvae_cli::train::CHECKPOINT_FILE;
use tvae_cli::{baseline, evaluate, latent, predict, sweep, train};

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Override a config key, e.g. `--set k=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Trained checkpoint; defaults to `<out>/checkpoint.svae`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl ModelArgs {
    fn path(&self, cfg: &RunConfig) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.out_dir).join(CHECKPOINT_FILE))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, writing checkpoints and loss.csv.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Best-of-K ADE/FDE and NLL with and without clustering.
    Eval(ModelArgs),
    /// Export samples, heatmaps and attention weights.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        /// Trajectory files or directories to predict for (default: test split).
        #[arg(long)]
        input: Vec<String>,
    },
    /// ADE/FDE against the clustering sampling rate.
    FpcSweep(ModelArgs),
    /// Prior latent samples for synthetic observations.
    LatentDump(ModelArgs),
    /// Constant-velocity baseline metrics.
    Baseline,
    /// List every config key with its default value.
    Keys,
}

/// Stochastic pedestrian trajectory prediction with a timewise latent model.
#[derive(Parser)]
#[command(name = "tvae", version)]
struct Root {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn main() -> Result<()> {
    let root = Root::parse();
    let cfg = root.common.config()?;
    match root.command {
        Command::Train { resume } => {
            let out = train::run(&cfg, resume.as_deref())?;
            if let Some(last) = out.losses.last() {
                println!("step {}: loss {}", last.step, last.loss);
            }
            println!("checkpoint: {}", out.checkpoint_path.display());
        }
        Command::Eval(m) => {
            let eval = evaluate::run(&cfg, &m.path(&cfg))?;
            print!("{}", eval.to_csv());
        }
        Command::Predict { model, input } => {
            predict::run(&cfg, &model.path(&cfg), &input)?;
            println!("wrote predictions to {}", cfg.out_dir);
        }
        Command::FpcSweep(m) => print!("{}", sweep::to_csv(&sweep::run(&cfg, &m.path(&cfg))?)),
        Command::LatentDump(m) => {
            let sets = latent::run(&cfg, &m.path(&cfg))?;
            println!(
                "wrote {} observation sets to {}/latents.csv",
                sets.len(),
                cfg.out_dir
            );
        }
        Command::Baseline => print!("{}", baseline::run(&cfg)?.to_csv()),
        Command::Keys => {
            let defaults = RunConfig::default().to_text();
            for ((key, doc), line) in RunConfig::KEYS.iter().zip(defaults.lines()) {
                println!("# {doc}\n{line}");
                debug_assert!(line.starts_with(key));
            }
        }
    }
    Ok(())
}

//! Mini-batch training with periodic checkpoints and a loss log.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::index;
use tvae_core::data::{augment, ObservationWindow};
use tvae_core::model::{Batch, TeacherNoise, WindowFeatures};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::seeds::{stream, Purpose};

pub const CHECKPOINT_FILE: &str = "checkpoint.svae";
pub const LOSS_FILE: &str = "loss.csv";
const LOSS_HEADER: &str = "step,loss,recon,kl";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    /// 1-based number of the update that produced this loss.
    pub step: u64,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

impl StepLoss {
    fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss, self.recon, self.kl)
    }
}

/// One optimizer update on a batch drawn without replacement, augmented,
/// and paired with fresh noise, all from the stream of this step.
pub fn train_step(ck: &mut Checkpoint, windows: &[ObservationWindow]) -> Result<StepLoss> {
    if windows.is_empty() {
        bail!("training set is empty");
    }
    let step = ck.step + 1;
    let cfg = &ck.config;
    let mut rng = stream(cfg.seed, Purpose::Train, ck.step);
    let size = cfg.batch_size.min(windows.len());
    let picks = index::sample(&mut rng, windows.len(), size).into_vec();
    let aug = cfg.augmentation();
    let features = picks
        .iter()
        .map(|&i| {
            let w = augment(&windows[i], &aug, &mut rng);
            WindowFeatures::from_window(&w, cfg.mpd_horizon)
        })
        .collect::<tvae_core::Result<Vec<_>>>()?;
    let refs: Vec<&WindowFeatures> = features.iter().collect();
    let batch = Batch::<f32>::new(&refs)?;
    let noise = TeacherNoise::draw(size, cfg.latent_dim, batch.pred_len, &mut rng);

    let (loss, recon, kl, grads) = ck
        .model
        .loss_and_gradients(&ck.params, &batch, &noise)
        .map_err(|e| anyhow!("training aborted at step {step}: {e}"))?;
    let adam = ck
        .optimizer
        .as_mut()
        .ok_or_else(|| anyhow!("checkpoint carries no optimizer state"))?;
    ck.params.zero_grad();
    ck.params.accumulate(&grads, 1.0);
    adam.update(&mut ck.params)
        .map_err(|e| anyhow!("training aborted at step {step}: {e}"))?;
    ck.step = step;
    Ok(StepLoss {
        step,
        loss,
        recon,
        kl,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<StepLoss>,
    pub checkpoint_path: PathBuf,
}

/// Trains until `cfg.steps` updates have been made in total, starting
/// fresh or from `resume`. The loss log keeps earlier rows up to the
/// resumed step.
pub fn run(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = Dataset::load(cfg)?;
    if data.train.is_empty() {
        bail!("training set is empty");
    }
    run_on(cfg, &data.train, resume)
}

pub fn run_on(
    cfg: &RunConfig,
    windows: &[ObservationWindow],
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut ck = match resume {
        None => Checkpoint::init(cfg.clone())?,
        Some(path) => {
            let mut ck = Checkpoint::load(path)?;
            if ck.config.model_config() != cfg.model_config() {
                bail!("model settings differ from the checkpoint being resumed");
            }
            if ck.optimizer.is_none() {
                bail!(
                    "checkpoint {} has no optimizer state to resume from",
                    path.display()
                );
            }
            ck.config = cfg.clone();
            ck
        }
    };
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let loss_path = out.join(LOSS_FILE);
    let checkpoint_path = out.join(CHECKPOINT_FILE);

    let mut log = String::from(LOSS_HEADER);
    log.push('\n');
    if resume.is_some() && loss_path.exists() {
        for line in std::fs::read_to_string(&loss_path)?.lines().skip(1) {
            let step: u64 = line
                .split(',')
                .next()
                .unwrap_or("")
                .parse()
                .unwrap_or(u64::MAX);
            if step <= ck.step {
                let _ = writeln!(log, "{line}");
            }
        }
    }

    let mut losses = Vec::new();
    while ck.step < cfg.steps {
        let l = train_step(&mut ck, windows)?;
        let _ = writeln!(log, "{}", l.csv_row());
        losses.push(l);
        if cfg.checkpoint_every > 0 && l.step % cfg.checkpoint_every == 0 {
            std::fs::write(&loss_path, &log)?;
            ck.save(&checkpoint_path)?;
            eprintln!(
                "step {}: loss {:.5} (recon {:.5}, kl {:.5})",
                l.step, l.loss, l.recon, l.kl
            );
        }
    }
    std::fs::write(&loss_path, &log)?;
    ck.save(&checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint: ck,
        losses,
        checkpoint_path,
    })
}

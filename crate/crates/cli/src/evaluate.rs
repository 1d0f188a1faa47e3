//! Best-of-K and density evaluation of a trained model.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tvae_core::data::ObservationWindow;
use tvae_core::fpc::{predict_with_fpc, sample_predictions, PredictionSet};
use tvae_core::geom::Position;
use tvae_core::metrics::{best_of_k, nll_kde, KdeNll, MetricAccumulator, MetricReport};
use tvae_core::model::{encode_observation, rollout_batch};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::seeds::{stream, Purpose};

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?)
}

/// Runs `f` on every window inside `pool`, keeping window order.
pub fn per_window<T, F>(
    pool: &rayon::ThreadPool,
    windows: &[ObservationWindow],
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ObservationWindow) -> Result<T> + Sync,
{
    pool.install(|| {
        windows
            .par_iter()
            .enumerate()
            .map(|(i, w)| f(i, w).with_context(|| format!("window {i}")))
            .collect()
    })
}

/// Sampling strategy for best-of-K predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Plain,
    Clustered { rate: usize },
}

/// The K predictions for window `index`, drawn from its own stream.
pub fn predictions(
    ck: &Checkpoint,
    cfg: &RunConfig,
    index: usize,
    window: &ObservationWindow,
    sampling: Sampling,
) -> Result<PredictionSet> {
    let enc = encode_observation(&ck.model, &ck.params, window)?;
    let mut rng = stream(cfg.seed, Purpose::Predict, index as u64);
    let steps = window.pred_len();
    Ok(match sampling {
        Sampling::Plain => sample_predictions(&ck.model, &ck.params, &enc, cfg.k, steps, &mut rng)?,
        Sampling::Clustered { rate } => predict_with_fpc(
            &ck.model,
            &ck.params,
            &enc,
            cfg.k,
            steps,
            rate,
            &cfg.kmeans(),
            &mut rng,
        )?,
    })
}

fn trajectories(set: &PredictionSet) -> Vec<Vec<Position>> {
    set.samples.iter().map(|s| s.positions.clone()).collect()
}

/// Best-of-K `(ade, fde)` per window.
pub fn best_of_scores(
    ck: &Checkpoint,
    cfg: &RunConfig,
    windows: &[ObservationWindow],
    sampling: Sampling,
    pool: &rayon::ThreadPool,
) -> Result<Vec<(f64, f64)>> {
    per_window(pool, windows, |i, w| {
        let set = predictions(ck, cfg, i, w, sampling)?;
        Ok(best_of_k(&trajectories(&set), &w.fut, cfg.best_of)?)
    })
}

/// KDE NLL of the ground truth from `nll_samples` plain samples per window.
pub fn density_scores(
    ck: &Checkpoint,
    cfg: &RunConfig,
    windows: &[ObservationWindow],
    pool: &rayon::ThreadPool,
) -> Result<Vec<KdeNll>> {
    per_window(pool, windows, |i, w| {
        let enc = encode_observation(&ck.model, &ck.params, w)?;
        let mut rng = stream(cfg.seed, Purpose::Density, i as u64);
        let samples = rollout_batch(
            &ck.model,
            &ck.params,
            &enc,
            w.pred_len(),
            cfg.nll_samples,
            &mut rng,
        )?;
        let paths: Vec<Vec<Position>> = samples.into_iter().map(|s| s.positions).collect();
        Ok(nll_kde(&paths, &w.fut)?)
    })
}

pub fn report(
    windows: &[ObservationWindow],
    scores: &[(f64, f64)],
    nll: Option<&[KdeNll]>,
) -> MetricReport {
    let mut acc = MetricAccumulator::new();
    for (i, (w, &(ade, fde))) in windows.iter().zip(scores).enumerate() {
        acc.add(&w.scene_id, ade, fde, nll.map(|n| &n[i]));
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub k: usize,
    pub fpc_rate: usize,
    pub without_fpc: MetricReport,
    pub with_fpc: MetricReport,
}

impl Evaluation {
    /// Both reports in one table with a leading `variant` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,");
        for (name, r) in [
            ("without_fpc", &self.without_fpc),
            ("with_fpc", &self.with_fpc),
        ] {
            let csv = r.to_csv();
            let mut lines = csv.lines();
            let header = lines.next().unwrap_or_default();
            if out == "variant," {
                out.push_str(header);
                out.push('\n');
            }
            for l in lines {
                out.push_str(&format!("{name},{l}\n"));
            }
        }
        out
    }
}

pub fn evaluate(
    ck: &Checkpoint,
    cfg: &RunConfig,
    windows: &[ObservationWindow],
) -> Result<Evaluation> {
    let pool = thread_pool(cfg.threads)?;
    let nll = if cfg.eval_nll {
        Some(density_scores(ck, cfg, windows, &pool)?)
    } else {
        None
    };
    let plain = best_of_scores(ck, cfg, windows, Sampling::Plain, &pool)?;
    let clustered = best_of_scores(
        ck,
        cfg,
        windows,
        Sampling::Clustered { rate: cfg.fpc_rate },
        &pool,
    )?;
    Ok(Evaluation {
        k: cfg.k,
        fpc_rate: cfg.fpc_rate,
        without_fpc: report(windows, &plain, nll.as_deref()),
        with_fpc: report(windows, &clustered, nll.as_deref()),
    })
}

/// Evaluates on the evaluation split and writes `metrics.json` and `metrics.csv`.
pub fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<Evaluation> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let data = Dataset::load(cfg)?.evaluation(cfg);
    if data.is_empty() {
        anyhow::bail!("evaluation set is empty");
    }
    let eval = evaluate(&ck, cfg, &data)?;
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&eval)?,
    )?;
    std::fs::write(out.join("metrics.csv"), eval.to_csv())?;
    Ok(eval)
}

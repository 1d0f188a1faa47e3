//! Best-of-K error as a function of the clustering sampling rate.

use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use tvae_core::data::ObservationWindow;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::evaluate::{best_of_scores, thread_pool, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub rate: usize,
    pub ade: f64,
    pub fde: f64,
    /// Relative to the rate-1 values.
    pub ade_ratio: f64,
    pub fde_ratio: f64,
}

/// Mean best-of-K ADE/FDE for rate 1 and every rate in `rates`, each
/// window using the same stream at every rate.
pub fn sweep(
    ck: &Checkpoint,
    cfg: &RunConfig,
    windows: &[ObservationWindow],
    rates: &[usize],
) -> Result<Vec<SweepPoint>> {
    if windows.is_empty() {
        bail!("evaluation set is empty");
    }
    let pool = thread_pool(cfg.threads)?;
    let mean = |rate: usize| -> Result<(f64, f64)> {
        let sampling = if rate <= 1 {
            Sampling::Plain
        } else {
            Sampling::Clustered { rate }
        };
        let scores = best_of_scores(ck, cfg, windows, sampling, &pool)?;
        let n = scores.len() as f64;
        Ok((
            scores.iter().map(|s| s.0).sum::<f64>() / n,
            scores.iter().map(|s| s.1).sum::<f64>() / n,
        ))
    };
    let base = mean(1)?;
    let mut all: Vec<usize> = std::iter::once(1).chain(rates.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all.into_iter()
        .map(|rate| {
            let (ade, fde) = if rate == 1 { base } else { mean(rate)? };
            Ok(SweepPoint {
                rate,
                ade,
                fde,
                ade_ratio: ade / base.0,
                fde_ratio: fde / base.1,
            })
        })
        .collect()
}

pub fn to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("rate,ade,fde,ade_ratio,fde_ratio\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.rate, p.ade, p.fde, p.ade_ratio, p.fde_ratio
        ));
    }
    out
}

/// Sweeps `sweep_rates` on the evaluation split and writes `fpc_sweep.csv`.
pub fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let data = Dataset::load(cfg)?.evaluation(cfg);
    let points = sweep(&ck, cfg, &data, &cfg.sweep_rates)?;
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("fpc_sweep.csv"), to_csv(&points))?;
    Ok(points)
}

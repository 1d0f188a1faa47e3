//! Constant-velocity baseline on the evaluation split.

use std::path::Path;

use anyhow::{bail, Result};
use tvae_core::data::ObservationWindow;
use tvae_core::metrics::{
    ade, fde, linear_baseline, MetricAccumulator, MetricReport, VelocityMode,
};

use crate::config::RunConfig;
use crate::dataset::Dataset;

pub fn linear_report(windows: &[ObservationWindow], mode: VelocityMode) -> Result<MetricReport> {
    if windows.is_empty() {
        bail!("evaluation set is empty");
    }
    let mut acc = MetricAccumulator::new();
    for w in windows {
        let pred = linear_baseline(w, mode)?;
        acc.add(&w.scene_id, ade(&pred, &w.fut)?, fde(&pred, &w.fut)?, None);
    }
    Ok(acc.finish())
}

/// Writes `baseline.json` and `baseline.csv`.
pub fn run(cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let data = Dataset::load(cfg)?.evaluation(cfg);
    let report = linear_report(&data, cfg.baseline_velocity)?;
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("baseline.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(out.join("baseline.csv"), report.to_csv())?;
    Ok(report)
}

//! Prediction export: sampled trajectories, occupancy heatmaps and
//! attention weights per window.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use tvae_core::data::ObservationWindow;
use tvae_core::geom::Position;
use tvae_core::model::{encode_observation, rollout_batch};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::evaluate::{per_window, predictions, thread_pool, Sampling};
use crate::seeds::{stream, Purpose};

/// Counts of points on a `bins × bins` grid over a padded bounding box.
/// Row 0 holds the lowest y values, column 0 the lowest x values.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub counts: Vec<Vec<u32>>,
}

const MIN_EXTENT: f64 = 1e-3;

impl Heatmap {
    pub fn from_points(points: &[Position], bins: usize, padding: f64) -> Self {
        let span = |vals: Vec<f64>| {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = (hi - lo).max(MIN_EXTENT) * padding;
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo).max(MIN_EXTENT) + pad;
            (mid - half, mid + half)
        };
        let x_range = span(points.iter().map(|p| p.x).collect());
        let y_range = span(points.iter().map(|p| p.y).collect());
        let mut counts = vec![vec![0u32; bins]; bins];
        let cell = |v: f64, (lo, hi): (f64, f64)| {
            let c = ((v - lo) / (hi - lo) * bins as f64).floor();
            (c.max(0.0) as usize).min(bins - 1)
        };
        for p in points {
            counts[cell(p.y, y_range)][cell(p.x, x_range)] += 1;
        }
        Self {
            x_range,
            y_range,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }
}

#[derive(Serialize)]
struct AttentionLine<'a> {
    window: usize,
    scene: &'a str,
    /// 1-based observed frame.
    frame: usize,
    neighbor: u64,
    weight: f64,
}

struct WindowExport {
    samples: String,
    heatmap: Heatmap,
    attention: String,
}

fn export_window(
    ck: &Checkpoint,
    cfg: &RunConfig,
    i: usize,
    w: &ObservationWindow,
) -> Result<WindowExport> {
    let sampling = if cfg.fpc_rate <= 1 {
        Sampling::Plain
    } else {
        Sampling::Clustered { rate: cfg.fpc_rate }
    };
    let set = predictions(ck, cfg, i, w, sampling)?;
    let mut samples = String::new();
    for (s, sample) in set.samples.iter().enumerate() {
        for (t, p) in sample.positions.iter().enumerate() {
            let _ = writeln!(samples, "{i},{s},{},{},{}", t + 1, p.x, p.y);
        }
    }

    let enc = encode_observation(&ck.model, &ck.params, w)?;
    let mut rng = stream(cfg.seed, Purpose::Heatmap, i as u64);
    let cloud = rollout_batch(
        &ck.model,
        &ck.params,
        &enc,
        w.pred_len(),
        cfg.heatmap_samples,
        &mut rng,
    )?;
    let points: Vec<Position> = cloud
        .iter()
        .flat_map(|s| s.positions.iter().copied())
        .collect();
    let heatmap = Heatmap::from_points(&points, cfg.heatmap_bins, cfg.heatmap_padding);

    let mut attention = String::new();
    for (f, weights) in enc.attention.iter().enumerate() {
        for &(neighbor, weight) in weights {
            let line = AttentionLine {
                window: i,
                scene: &w.scene_id,
                frame: f + 1,
                neighbor,
                weight,
            };
            let _ = writeln!(attention, "{}", serde_json::to_string(&line)?);
        }
    }
    Ok(WindowExport {
        samples,
        heatmap,
        attention,
    })
}

/// Writes `windows.csv`, `samples.csv`, `heatmaps.csv` with one grid file
/// per window under `heatmaps/`, and `attention.jsonl`.
pub fn export(
    ck: &Checkpoint,
    cfg: &RunConfig,
    windows: &[ObservationWindow],
    out: &Path,
) -> Result<()> {
    if windows.is_empty() {
        bail!("no windows to predict");
    }
    let pool = thread_pool(cfg.threads)?;
    let exports = per_window(&pool, windows, |i, w| export_window(ck, cfg, i, w))?;
    let grids = out.join("heatmaps");
    std::fs::create_dir_all(&grids)?;

    let mut index = String::from("window,scene,target,start_frame\n");
    let mut samples = String::from("window,sample,t,x,y\n");
    let mut heat_index = String::from("window,file,x_min,x_max,y_min,y_max,bins,points\n");
    let mut attention = String::new();
    for (i, (w, e)) in windows.iter().zip(&exports).enumerate() {
        let _ = writeln!(index, "{i},{},{},{}", w.scene_id, w.target, w.start_frame);
        samples.push_str(&e.samples);
        attention.push_str(&e.attention);
        let file = format!("heatmap_{i:05}.csv");
        let h = &e.heatmap;
        let _ = writeln!(
            heat_index,
            "{i},{file},{},{},{},{},{},{}",
            h.x_range.0,
            h.x_range.1,
            h.y_range.0,
            h.y_range.1,
            h.counts.len(),
            h.total()
        );
        let grid: String = h
            .counts
            .iter()
            .map(|row| {
                let cells: Vec<String> = row.iter().map(u32::to_string).collect();
                cells.join(",") + "\n"
            })
            .collect();
        std::fs::write(grids.join(file), grid)?;
    }
    std::fs::write(out.join("windows.csv"), index)?;
    std::fs::write(out.join("samples.csv"), samples)?;
    std::fs::write(out.join("heatmaps.csv"), heat_index)?;
    std::fs::write(out.join("attention.jsonl"), attention)?;
    Ok(())
}

/// Predicts for the evaluation split, or for the files in `input` when given.
pub fn run(cfg: &RunConfig, checkpoint: &Path, input: &[String]) -> Result<()> {
    let mut cfg = cfg.clone();
    if !input.is_empty() {
        cfg.test_paths = input.to_vec();
        cfg.synthetic = false;
        cfg.window_cache.clear();
    }
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let windows = Dataset::load(&cfg)?.evaluation(&cfg);
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    export(&ck, &cfg, &windows, out)
}

//! Prior samples of the first predicted latent for a grid of synthetic
//! observations (constant speed, one heading change).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use tvae_core::data::ObservationWindow;
use tvae_core::geom::{Position, Vec2};
use tvae_core::model::{encode_observation, rollout_batch};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::seeds::{stream, Purpose};

/// Straight walk along +x at `speed` per frame that turns by `turn_deg`
/// (counter-clockwise) after observed frame `turn_frame` (1-based). No
/// neighbors and no future.
pub fn synthetic_observation(
    obs_len: usize,
    speed: f64,
    turn_deg: f64,
    turn_frame: usize,
) -> ObservationWindow {
    let turn = turn_deg.to_radians();
    let mut obs = vec![Position::ZERO];
    for f in 2..=obs_len {
        let heading = if f > turn_frame { turn } else { 0.0 };
        let last = obs[obs.len() - 1];
        obs.push(last + Vec2::new(heading.cos(), heading.sin()) * speed);
    }
    ObservationWindow {
        scene_id: format!("speed{speed}_turn{turn_deg}"),
        target: 0,
        start_frame: 0,
        frame_dt: 0.4,
        obs,
        fut: Vec::new(),
        neighbors: vec![Vec::new(); obs_len],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub speed: f64,
    pub turn_deg: f64,
    pub samples: Vec<Vec<f64>>,
}

pub fn latent_sets(ck: &Checkpoint, cfg: &RunConfig) -> Result<Vec<LatentSet>> {
    let mut out = Vec::new();
    for &speed in &cfg.latent_speeds {
        for &turn_deg in &cfg.latent_turns {
            let w = synthetic_observation(cfg.obs_len, speed, turn_deg, cfg.latent_turn_frame);
            let enc = encode_observation(&ck.model, &ck.params, &w)?;
            let mut rng = stream(cfg.seed, Purpose::Latent, out.len() as u64);
            let samples =
                rollout_batch(&ck.model, &ck.params, &enc, 1, cfg.latent_samples, &mut rng)?
                    .into_iter()
                    .map(|s| s.latents[0].clone())
                    .collect();
            out.push(LatentSet {
                speed,
                turn_deg,
                samples,
            });
        }
    }
    Ok(out)
}

pub fn to_csv(sets: &[LatentSet]) -> String {
    let dim = sets
        .first()
        .and_then(|s| s.samples.first())
        .map_or(0, Vec::len);
    let mut out = String::from("speed,turn_deg,sample");
    for d in 0..dim {
        let _ = write!(out, ",z{d}");
    }
    out.push('\n');
    for set in sets {
        for (i, z) in set.samples.iter().enumerate() {
            let _ = write!(out, "{},{},{i}", set.speed, set.turn_deg);
            for v in z {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// Writes `latents.csv`.
pub fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<LatentSet>> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = cfg.clone();
    cfg.obs_len = ck.config.obs_len;
    let sets = latent_sets(&ck, &cfg)?;
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("latents.csv"), to_csv(&sets))?;
    Ok(sets)
}

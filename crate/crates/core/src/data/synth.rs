//! Synthetic pedestrian scenes with smooth, multi-modal motion. Used for
//! tests, smoke runs and the acceptance suite when no recorded data is at
//! hand.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{AgentId, TrajectoryScene, ETH_UCY_FRAME_DT};
use crate::geom::{Position, Vec2};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_agents: usize,
    pub num_frames: usize,
    pub frame_dt: f64,
    /// Side length of the square spawn area.
    pub area: f64,
    /// Per-frame speed range.
    pub speed: (f64, f64),
    /// Turn rates (radians per frame) an agent picks from.
    pub turn_rates: Vec<f64>,
    /// Per-frame probability of picking a new turn rate.
    pub switch_prob: f64,
    pub noise: f64,
    pub lifespan: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_agents: 40,
            num_frames: 200,
            frame_dt: ETH_UCY_FRAME_DT,
            area: 16.0,
            speed: (0.3, 0.5),
            turn_rates: vec![-0.06, 0.0, 0.06],
            switch_prob: 0.05,
            noise: 0.005,
            lifespan: (20, 40),
        }
    }
}

pub fn synthetic_scene(config: &SynthConfig, seed: u64) -> TrajectoryScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, config.noise.max(0.0)).expect("valid noise");
    let mut samples: BTreeMap<AgentId, Vec<(usize, Position)>> = BTreeMap::new();

    for agent in 0..config.num_agents {
        let len = rng
            .gen_range(config.lifespan.0..=config.lifespan.1)
            .min(config.num_frames);
        let start = rng.gen_range(0..=config.num_frames - len);
        let mut pos = Vec2::new(
            rng.gen_range(0.0..config.area),
            rng.gen_range(0.0..config.area),
        );
        let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(config.speed.0..=config.speed.1);
        let mut turn = config.turn_rates[rng.gen_range(0..config.turn_rates.len())];

        let mut rows = Vec::with_capacity(len);
        for f in start..start + len {
            let noisy = pos + Vec2::new(jitter.sample(&mut rng), jitter.sample(&mut rng));
            rows.push((f, noisy));
            if rng.gen_bool(config.switch_prob) {
                turn = config.turn_rates[rng.gen_range(0..config.turn_rates.len())];
            }
            heading += turn;
            pos = pos + Vec2::new(heading.cos(), heading.sin()) * speed;
        }
        samples.insert(agent as AgentId, rows);
    }

    TrajectoryScene::from_samples(
        format!("synth-{seed}"),
        config.frame_dt,
        1.0,
        (0..config.num_frames as i64).collect(),
        samples,
    )
    .expect("synthetic scene is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig::default();
        let a = synthetic_scene(&cfg, 7);
        let b = synthetic_scene(&cfg, 7);
        assert_eq!(a.tracks, b.tracks);
        assert_eq!(a.num_agents(), cfg.num_agents);
        assert!(a.tracks.iter().all(|t| t.positions.len() >= cfg.lifespan.0));
    }
}

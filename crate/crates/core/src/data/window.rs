use serde::{Deserialize, Serialize};

use super::scene::{AgentId, TrajectoryScene};
use crate::error::{Error, Result};
use crate::geom::{self, neighbor_state, NeighborState, Position, Vec2};

pub const DEFAULT_OBS_LEN: usize = 8;
pub const DEFAULT_PRED_LEN: usize = 12;

/// Default observation radius for pedestrian scenes, in working units.
pub const DEFAULT_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub agent: AgentId,
    pub state: NeighborState,
}

/// `obs_len` observed plus `pred_len` future frames of one target agent,
/// with the neighbor set of every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub scene_id: String,
    pub target: AgentId,
    /// Raw id of the first observed frame.
    pub start_frame: i64,
    pub frame_dt: f64,
    pub obs: Vec<Position>,
    pub fut: Vec<Position>,
    /// One list per frame, `obs_len + pred_len` lists in total.
    pub neighbors: Vec<Vec<NeighborEntry>>,
}

impl ObservationWindow {
    pub fn obs_len(&self) -> usize {
        self.obs.len()
    }

    pub fn pred_len(&self) -> usize {
        self.fut.len()
    }

    pub fn last_observed(&self) -> Position {
        *self.obs.last().expect("window has observed frames")
    }

    /// Target positions over all frames, observed then future.
    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.obs.iter().chain(self.fut.iter()).copied()
    }

    /// Displacement arriving at each frame of the window; the first frame
    /// has none and reports zero.
    pub fn target_displacements(&self) -> Vec<Vec2> {
        let pos: Vec<Position> = self.positions().collect();
        let mut out = Vec::with_capacity(pos.len());
        out.push(Vec2::ZERO);
        out.extend(pos.windows(2).map(|w| w[1] - w[0]));
        out
    }

    pub fn shifted(&self, offset: Vec2) -> Self {
        let mut w = self.clone();
        for p in w.obs.iter_mut().chain(w.fut.iter_mut()) {
            *p = *p + offset;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbors.len() != self.obs.len() + self.fut.len() {
            return Err(Error::Shape(format!(
                "window has {} neighbor frames for {} positions",
                self.neighbors.len(),
                self.obs.len() + self.fut.len()
            )));
        }
        if !self.positions().all(Vec2::is_finite) {
            return Err(Error::Data("window contains non-finite positions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub obs_len: usize,
    pub pred_len: usize,
    pub stride: usize,
    pub radius: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            obs_len: DEFAULT_OBS_LEN,
            pred_len: DEFAULT_PRED_LEN,
            stride: 1,
            radius: DEFAULT_RADIUS,
        }
    }
}

/// Every window where a target is tracked for `obs_len + pred_len`
/// consecutive frames, ordered by track then start frame.
pub fn make_windows(scene: &TrajectoryScene, spec: &WindowSpec) -> Result<Vec<ObservationWindow>> {
    if spec.obs_len < 2 || spec.pred_len < 1 || spec.stride < 1 {
        return Err(Error::InvalidInput(format!(
            "need obs_len >= 2, pred_len >= 1, stride >= 1 (got {}, {}, {})",
            spec.obs_len, spec.pred_len, spec.stride
        )));
    }
    let span = spec.obs_len + spec.pred_len;
    let mut out = Vec::new();
    for track in &scene.tracks {
        if track.positions.len() < span {
            continue;
        }
        for offset in (0..=track.positions.len() - span).step_by(spec.stride) {
            out.push(build_window(
                scene,
                track.agent,
                track.first + offset,
                spec,
            )?);
        }
    }
    Ok(out)
}

fn build_window(
    scene: &TrajectoryScene,
    target: AgentId,
    first: usize,
    spec: &WindowSpec,
) -> Result<ObservationWindow> {
    let span = spec.obs_len + spec.pred_len;
    let mut positions = Vec::with_capacity(span);
    let mut neighbors = Vec::with_capacity(span);
    for frame in first..first + span {
        let here = scene
            .position(target, frame)
            .ok_or_else(|| Error::Data(format!("agent {target} missing at frame index {frame}")))?;
        positions.push(here);
        let own_disp = scene.displacement(target, frame);
        let ids = geom::neighborhood(scene, target, frame, spec.radius)?;
        let entries = ids
            .into_iter()
            .map(|j| {
                let pj = scene.position(j, frame).expect("neighbor present");
                NeighborEntry {
                    agent: j,
                    state: neighbor_state(here, own_disp, pj, scene.displacement(j, frame)),
                }
            })
            .collect();
        neighbors.push(entries);
    }
    let fut = positions.split_off(spec.obs_len);
    Ok(ObservationWindow {
        scene_id: scene.scene_id.clone(),
        target,
        start_frame: scene.frames[first],
        frame_dt: scene.frame_dt,
        obs: positions,
        fut,
        neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn walker(len: usize) -> TrajectoryScene {
        let mut samples = BTreeMap::new();
        samples.insert(
            1,
            (0..len)
                .map(|f| (f, Position::new(f as f64 * 0.5, 0.0)))
                .collect(),
        );
        TrajectoryScene::from_samples("w", 0.4, 1.0, (0..len as i64).collect(), samples).unwrap()
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        assert_eq!(make_windows(&walker(20), &spec).unwrap().len(), 1);
        assert_eq!(make_windows(&walker(21), &spec).unwrap().len(), 2);
        assert_eq!(make_windows(&walker(19), &spec).unwrap().len(), 0);
        let strided = WindowSpec { stride: 2, ..spec };
        assert_eq!(make_windows(&walker(23), &strided).unwrap().len(), 2);
    }

    #[test]
    fn bad_spec_rejected() {
        let spec = WindowSpec {
            obs_len: 1,
            ..Default::default()
        };
        assert!(make_windows(&walker(20), &spec).is_err());
    }

    #[test]
    fn neighbors_are_relative_and_per_frame() {
        let mut samples = BTreeMap::new();
        samples.insert(
            1,
            (0..20).map(|f| (f, Position::new(f as f64, 0.0))).collect(),
        );
        // neighbor appears at frame 5, walking alongside
        samples.insert(
            2,
            (5..20).map(|f| (f, Position::new(f as f64, 3.0))).collect(),
        );
        let scene =
            TrajectoryScene::from_samples("n", 0.4, 1.0, (0..20).collect(), samples).unwrap();
        let w = &make_windows(&scene, &WindowSpec::default()).unwrap()[0];
        assert!(w.neighbors[4].is_empty());
        let first = &w.neighbors[5][0];
        assert_eq!(first.state.rel_position, Vec2::new(0.0, 3.0));
        // no previous frame for the neighbor: its displacement counts as zero
        assert_eq!(first.state.rel_velocity, Vec2::new(-1.0, 0.0));
        assert_eq!(w.neighbors[6][0].state.rel_velocity, Vec2::ZERO);
        w.validate().unwrap();
    }

    #[test]
    fn windows_are_deterministic() {
        let a = serde_json::to_string(&make_windows(&walker(30), &WindowSpec::default()).unwrap())
            .unwrap();
        let b = serde_json::to_string(&make_windows(&walker(30), &WindowSpec::default()).unwrap())
            .unwrap();
        assert_eq!(a, b);
    }
}

//! Network inputs derived from observation windows: self states, neighbor
//! states and social features per frame, assembled into batches.

use std::sync::Arc;

use ndarray::Array2;

use crate::data::{AgentId, ObservationWindow};
use crate::diff::{Index, Real};
use crate::error::{Error, Result};
use crate::geom::{self, Position, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborFeatures {
    pub agent: AgentId,
    pub state: [f64; 4],
    pub social: [f64; 3],
}

/// Everything the network reads from one window, in `f64`. Frame `f` is
/// 0-based: `f = 0` is the first observed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Self state per frame; entry 0 is unused (no displacement yet).
    pub self_states: Vec<[f64; 4]>,
    pub neighbors: Vec<Vec<NeighborFeatures>>,
    /// Neighbor positions relative to the target at the first frame.
    pub initial_offsets: Vec<[f64; 2]>,
    /// Ground-truth `x^t - x^T` for each future step, if known.
    pub future_offsets: Option<Vec<[f64; 2]>>,
    pub last_observed: Position,
}

impl WindowFeatures {
    pub fn from_window(window: &ObservationWindow, mpd_horizon: f64) -> Result<Self> {
        window.validate()?;
        Self::build(window, mpd_horizon, true)
    }

    /// Features of the observed part only; the future is ignored.
    pub fn observation_only(window: &ObservationWindow, mpd_horizon: f64) -> Result<Self> {
        Self::build(window, mpd_horizon, false)
    }

    fn build(window: &ObservationWindow, mpd_horizon: f64, with_future: bool) -> Result<Self> {
        let obs_len = window.obs_len();
        if obs_len < 2 {
            return Err(Error::InvalidInput(format!(
                "observation needs at least 2 frames, got {obs_len}"
            )));
        }
        let pred_len = window.pred_len();
        let frames = if with_future {
            obs_len + pred_len
        } else {
            obs_len
        };
        if window.neighbors.len() < frames {
            return Err(Error::Shape("window is missing neighbor frames".into()));
        }
        let disp = window.target_displacements();

        let mut self_states = Vec::with_capacity(frames);
        let mut neighbors = Vec::with_capacity(frames);
        for f in 0..frames {
            let state = match f {
                0 => [0.0; 4],
                1 => geom::self_state(disp[1], disp[1]).to_array(),
                _ => geom::self_state(disp[f], disp[f - 1]).to_array(),
            };
            self_states.push(state);
            let mut list = Vec::with_capacity(window.neighbors[f].len());
            for entry in &window.neighbors[f] {
                let s = entry.state;
                let social = geom::social_features(
                    s.rel_position,
                    s.rel_velocity,
                    disp[f],
                    window.frame_dt,
                    mpd_horizon,
                )?;
                list.push(NeighborFeatures {
                    agent: entry.agent,
                    state: s.to_array(),
                    social: social.to_array(),
                });
            }
            neighbors.push(list);
        }
        let initial_offsets = window.neighbors[0]
            .iter()
            .map(|e| [e.state.rel_position.x, e.state.rel_position.y])
            .collect();
        let last = window.last_observed();
        let future_offsets = with_future.then(|| {
            window
                .fut
                .iter()
                .map(|p| {
                    let o: Vec2 = *p - last;
                    [o.x, o.y]
                })
                .collect()
        });
        Ok(Self {
            obs_len,
            pred_len,
            self_states,
            neighbors,
            initial_offsets,
            future_offsets,
            last_observed: last,
        })
    }

    pub fn has_future(&self) -> bool {
        self.future_offsets.is_some()
    }
}

/// Inputs of one frame across a batch. Neighbor rows of all windows are
/// stacked; `segment[r]` is the window of row `r`.
#[derive(Debug, Clone)]
pub struct FrameBatch<F> {
    pub self_states: Array2<F>,
    pub states: Array2<F>,
    pub social: Array2<F>,
    pub segment: Index,
    pub agents: Vec<AgentId>,
}

impl<F> FrameBatch<F> {
    pub fn num_pairs(&self) -> usize {
        self.segment.len()
    }
}

#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub size: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    pub initial_offsets: Array2<F>,
    pub initial_segment: Index,
    /// Frames `0..obs_len` always; future frames when every window has them.
    pub frames: Vec<FrameBatch<F>>,
    /// Ground-truth offsets per future step, `[size, 2]` each.
    pub targets: Option<Vec<Array2<F>>>,
    pub last_observed: Vec<Position>,
}

fn cast<F: Real, const N: usize>(rows: &[[f64; N]]) -> Array2<F> {
    Array2::from_shape_fn((rows.len(), N), |(r, c)| F::of(rows[r][c]))
}

impl<F: Real> Batch<F> {
    pub fn new(windows: &[&WindowFeatures]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let (obs_len, pred_len) = (first.obs_len, first.pred_len);
        if windows
            .iter()
            .any(|w| w.obs_len != obs_len || w.pred_len != pred_len)
        {
            return Err(Error::Shape("windows in a batch must share lengths".into()));
        }
        let with_future = windows.iter().all(|w| w.has_future());
        let frames_used = if with_future {
            obs_len + pred_len
        } else {
            obs_len
        };

        let mut init_rows = Vec::new();
        let mut init_seg = Vec::new();
        for (b, w) in windows.iter().enumerate() {
            init_rows.extend_from_slice(&w.initial_offsets);
            init_seg.extend(std::iter::repeat_n(b, w.initial_offsets.len()));
        }

        let mut frames = Vec::with_capacity(frames_used);
        for f in 0..frames_used {
            let selfs: Vec<[f64; 4]> = windows.iter().map(|w| w.self_states[f]).collect();
            let mut states = Vec::new();
            let mut social = Vec::new();
            let mut seg = Vec::new();
            let mut agents = Vec::new();
            for (b, w) in windows.iter().enumerate() {
                for n in &w.neighbors[f] {
                    states.push(n.state);
                    social.push(n.social);
                    seg.push(b);
                    agents.push(n.agent);
                }
            }
            frames.push(FrameBatch {
                self_states: cast(&selfs),
                states: cast(&states),
                social: cast(&social),
                segment: Arc::from(seg),
                agents,
            });
        }

        let targets = with_future.then(|| {
            (0..pred_len)
                .map(|s| {
                    let rows: Vec<[f64; 2]> = windows
                        .iter()
                        .map(|w| w.future_offsets.as_ref().expect("checked")[s])
                        .collect();
                    cast(&rows)
                })
                .collect()
        });

        Ok(Self {
            size: windows.len(),
            obs_len,
            pred_len,
            initial_offsets: cast(&init_rows),
            initial_segment: Arc::from(init_seg),
            frames,
            targets,
            last_observed: windows.iter().map(|w| w.last_observed).collect(),
        })
    }

    pub fn has_future(&self) -> bool {
        self.targets.is_some()
    }
}

//! Planar geometry for agents: displacements, self and neighbor states and
//! the social features used to score neighbors in the attention module.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::data::{AgentId, TrajectoryScene};
use crate::error::{Error, Result};

/// Bearing cosine reported when the target has no heading (zero displacement).
pub const STATIONARY_BEARING_COS: f64 = 1.0;

/// Default look-ahead horizon for the minimal predicted distance, in seconds.
pub const DEFAULT_MPD_HORIZON: f64 = 7.0;

/// A 2D vector. Used for absolute positions, displacements and relative
/// offsets alike; the aliases below only document intent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub type Position = Vec2;
pub type Displacement = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise rotation by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Velocity and acceleration of the target, both as per-frame differences.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelfState {
    pub velocity: Displacement,
    pub acceleration: Displacement,
}

impl SelfState {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.velocity.x,
            self.velocity.y,
            self.acceleration.x,
            self.acceleration.y,
        ]
    }
}

/// State of a neighbor relative to the target agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborState {
    pub rel_position: Vec2,
    pub rel_velocity: Vec2,
}

impl NeighborState {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.rel_position.x,
            self.rel_position.y,
            self.rel_velocity.x,
            self.rel_velocity.y,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SocialFeatures {
    pub distance: f64,
    pub bearing_cos: f64,
    /// Minimal predicted distance within the look-ahead horizon.
    pub mpd: f64,
}

impl SocialFeatures {
    pub fn to_array(self) -> [f64; 3] {
        [self.distance, self.bearing_cos, self.mpd]
    }
}

/// Per-frame differences of a position sequence.
pub fn displacements(positions: &[Position]) -> Result<Vec<Displacement>> {
    if positions.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "displacements need at least 2 positions, got {}",
            positions.len()
        )));
    }
    Ok(positions.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn self_state(d_t: Displacement, d_prev: Displacement) -> SelfState {
    SelfState {
        velocity: d_t,
        acceleration: d_t - d_prev,
    }
}

pub fn neighbor_state(
    target_pos: Position,
    target_disp: Displacement,
    nb_pos: Position,
    nb_disp: Displacement,
) -> NeighborState {
    NeighborState {
        rel_position: nb_pos - target_pos,
        rel_velocity: nb_disp - target_disp,
    }
}

/// Distance, bearing cosine and minimal predicted distance of a neighbor.
///
/// `rel_velocity` and `target_disp` are per-frame displacements; they are
/// converted to per-second velocities with `frame_dt` so that the closest
/// approach time is measured in seconds and clamped to `[0, horizon]`.
pub fn social_features(
    rel_position: Vec2,
    rel_velocity: Vec2,
    target_disp: Displacement,
    frame_dt: f64,
    horizon: f64,
) -> Result<SocialFeatures> {
    if frame_dt.is_nan() || frame_dt <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "frame_dt must be > 0, got {frame_dt}"
        )));
    }
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    let distance = rel_position.norm();

    let denom = distance * target_disp.norm();
    let bearing_cos = if target_disp.norm_sq() == 0.0 {
        STATIONARY_BEARING_COS
    } else if distance == 0.0 {
        // co-located neighbor: no direction to it
        STATIONARY_BEARING_COS
    } else {
        (rel_position.dot(target_disp) / denom).clamp(-1.0, 1.0)
    };

    let v = rel_velocity * (1.0 / frame_dt);
    let v_sq = v.norm_sq();
    let mpd = if v_sq == 0.0 {
        distance
    } else {
        let tau = (-rel_position.dot(v) / v_sq).clamp(0.0, horizon);
        (rel_position + v * tau).norm().min(distance)
    };

    Ok(SocialFeatures {
        distance,
        bearing_cos,
        mpd,
    })
}

/// Agents within `radius` of `agent` at a frame index (strict inequality),
/// in ascending id order.
pub fn neighborhood(
    scene: &TrajectoryScene,
    agent: AgentId,
    frame: usize,
    radius: f64,
) -> Result<Vec<AgentId>> {
    let center = scene.position(agent, frame).ok_or_else(|| {
        Error::InvalidInput(format!(
            "agent {agent} is not present at frame index {frame}"
        ))
    })?;
    let mut ids: Vec<AgentId> = scene
        .present(frame)
        .filter(|t| t.agent != agent)
        .filter(|t| t.at(frame).is_some_and(|p| p.distance(center) < radius))
        .map(|t| t.agent)
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

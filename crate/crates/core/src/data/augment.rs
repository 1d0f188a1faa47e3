use rand::Rng;
use serde::{Deserialize, Serialize};

use super::window::ObservationWindow;
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub enable_flip: bool,
    pub enable_rotation: bool,
}

/// A rigid map applied about the target's last observed position: optional
/// mirroring of each axis followed by a counter-clockwise rotation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub flip_x: bool,
    pub flip_y: bool,
    pub angle: f64,
}

impl RigidTransform {
    pub fn apply_linear(&self, v: Vec2) -> Vec2 {
        let mut u = v;
        if self.flip_x {
            u.x = -u.x;
        }
        if self.flip_y {
            u.y = -u.y;
        }
        if self.angle == 0.0 {
            u
        } else {
            u.rotate(self.angle)
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == RigidTransform::default()
    }

    pub fn apply_point(&self, p: Vec2, center: Vec2) -> Vec2 {
        if self.is_identity() {
            return p;
        }
        center + self.apply_linear(p - center)
    }
}

pub fn transform_window(window: &ObservationWindow, t: &RigidTransform) -> ObservationWindow {
    if t.is_identity() {
        return window.clone();
    }
    let center = window.last_observed();
    let mut out = window.clone();
    for p in out.obs.iter_mut().chain(out.fut.iter_mut()) {
        *p = t.apply_point(*p, center);
    }
    for entry in out.neighbors.iter_mut().flatten() {
        entry.state.rel_position = t.apply_linear(entry.state.rel_position);
        entry.state.rel_velocity = t.apply_linear(entry.state.rel_velocity);
    }
    out
}

/// Random flip/rotation drawn from `rng`. Draws happen only for enabled
/// options, so disabling everything consumes no randomness.
pub fn sample_transform<R: Rng + ?Sized>(
    config: &AugmentationConfig,
    rng: &mut R,
) -> RigidTransform {
    let mut t = RigidTransform::default();
    if config.enable_flip {
        t.flip_x = rng.gen_bool(0.5);
        t.flip_y = rng.gen_bool(0.5);
    }
    if config.enable_rotation {
        t.angle = rng.gen_range(0.0..std::f64::consts::TAU);
    }
    t
}

pub fn augment<R: Rng + ?Sized>(
    window: &ObservationWindow,
    config: &AugmentationConfig,
    rng: &mut R,
) -> ObservationWindow {
    let t = sample_transform(config, rng);
    transform_window(window, &t)
}

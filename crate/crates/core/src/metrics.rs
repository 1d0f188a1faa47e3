//! Displacement errors, best-of-K selection, kernel-density NLL and the
//! constant-velocity baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ObservationWindow;
use crate::error::{Error, Result};
use crate::geom::{Position, Vec2};

/// Smallest kernel bandwidth used by [`nll_kde`].
pub const MIN_BANDWIDTH: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BestOfMode {
    /// ADE and FDE minimized separately over the samples.
    #[default]
    Independent,
    /// Both taken from the sample with the lowest ADE.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VelocityMode {
    /// Mean of the observed displacements.
    #[default]
    Mean,
    /// Last observed displacement.
    Last,
}

fn check_lengths(pred: &[Position], truth: &[Position]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    Ok(())
}

pub fn ade(pred: &[Position], truth: &[Position]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| p.distance(*t)).sum();
    Ok(total / truth.len() as f64)
}

pub fn fde(pred: &[Position], truth: &[Position]) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(pred[pred.len() - 1].distance(truth[truth.len() - 1]))
}

/// Best `(ade, fde)` over a set of sampled trajectories.
pub fn best_of_k(
    samples: &[Vec<Position>],
    truth: &[Position],
    mode: BestOfMode,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "best-of-K needs at least one sample".into(),
        ));
    }
    let mut best_ade = f64::INFINITY;
    let mut best_fde = f64::INFINITY;
    let mut fde_of_best_ade = f64::INFINITY;
    for s in samples {
        let a = ade(s, truth)?;
        let f = fde(s, truth)?;
        if a < best_ade {
            best_ade = a;
            fde_of_best_ade = f;
        }
        best_fde = best_fde.min(f);
    }
    Ok(match mode {
        BestOfMode::Independent => (best_ade, best_fde),
        BestOfMode::Joint => (best_ade, fde_of_best_ade),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeNll {
    pub per_step: Vec<f64>,
    /// Average over steps.
    pub mean: f64,
    /// Sum over steps, the NLL of the product density.
    pub total: f64,
}

fn bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var.sqrt() * n.powf(-1.0 / 6.0)).max(MIN_BANDWIDTH)
}

/// Negative log-density of `point` under a 2D product-kernel Gaussian KDE
/// with Scott's-rule bandwidth per dimension.
pub fn kde_nll_at(samples: &[Position], point: Position) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(
            "density estimate needs at least 2 samples".into(),
        ));
    }
    let xs: Vec<f64> = samples.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = samples.iter().map(|p| p.y).collect();
    let (hx, hy) = (bandwidth(&xs), bandwidth(&ys));
    let log_norm = -LN_2PI - hx.ln() - hy.ln();
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| {
            let u = (point.x - s.x) / hx;
            let v = (point.y - s.y) / hy;
            log_norm - 0.5 * (u * u + v * v)
        })
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    let log_density = peak + sum.ln() - (samples.len() as f64).ln();
    Ok(-log_density)
}

/// Per-step KDE NLL of the ground truth; steps are treated as independent.
pub fn nll_kde(samples: &[Vec<Position>], truth: &[Position]) -> Result<KdeNll> {
    for s in samples {
        check_lengths(s, truth)?;
    }
    let per_step = (0..truth.len())
        .map(|t| {
            let at: Vec<Position> = samples.iter().map(|s| s[t]).collect();
            kde_nll_at(&at, truth[t])
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = per_step.iter().sum();
    Ok(KdeNll {
        mean: total / per_step.len() as f64,
        total,
        per_step,
    })
}

/// Constant-velocity extrapolation over the window's prediction horizon.
pub fn linear_baseline(window: &ObservationWindow, mode: VelocityMode) -> Result<Vec<Position>> {
    linear_extrapolation(&window.obs, window.pred_len(), mode)
}

pub fn linear_extrapolation(
    obs: &[Position],
    steps: usize,
    mode: VelocityMode,
) -> Result<Vec<Position>> {
    if obs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "velocity needs at least 2 observed frames, got {}",
            obs.len()
        )));
    }
    let disp: Vec<Vec2> = obs.windows(2).map(|w| w[1] - w[0]).collect();
    let velocity = match mode {
        VelocityMode::Mean => {
            disp.iter().fold(Vec2::ZERO, |a, d| a + *d) * (1.0 / disp.len() as f64)
        }
        VelocityMode::Last => disp[disp.len() - 1],
    };
    let last = obs[obs.len() - 1];
    Ok((1..=steps).map(|k| last + velocity * k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub count: usize,
    pub ade: f64,
    pub fde: f64,
    pub nll: Option<f64>,
    pub nll_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub ade: f64,
    pub fde: f64,
    /// Per-step average NLL, averaged over windows.
    pub nll: Option<f64>,
    /// Sum over steps, averaged over windows.
    pub nll_total: Option<f64>,
    pub per_scene: BTreeMap<String, SceneMetrics>,
}

impl MetricReport {
    /// `scene,count,ade,fde,nll,nll_total`, one row per scene plus `all`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("scene,count,ade,fde,nll,nll_total\n");
        for (name, m) in &self.per_scene {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{}",
                m.count,
                m.ade,
                m.fde,
                fmt(m.nll),
                fmt(m.nll_total)
            );
        }
        let _ = writeln!(
            out,
            "all,{},{},{},{},{}",
            self.count,
            self.ade,
            self.fde,
            fmt(self.nll),
            fmt(self.nll_total)
        );
        out
    }
}

#[derive(Debug, Clone, Default)]
struct Sums {
    count: usize,
    ade: f64,
    fde: f64,
    nll_count: usize,
    nll: f64,
    nll_total: f64,
}

impl Sums {
    fn add(&mut self, ade: f64, fde: f64, nll: Option<&KdeNll>) {
        self.count += 1;
        self.ade += ade;
        self.fde += fde;
        if let Some(n) = nll {
            self.nll_count += 1;
            self.nll += n.mean;
            self.nll_total += n.total;
        }
    }

    fn finish(&self) -> SceneMetrics {
        let c = self.count.max(1) as f64;
        let nc = self.nll_count as f64;
        SceneMetrics {
            count: self.count,
            ade: self.ade / c,
            fde: self.fde / c,
            nll: (self.nll_count > 0).then(|| self.nll / nc),
            nll_total: (self.nll_count > 0).then(|| self.nll_total / nc),
        }
    }
}

/// Window-weighted averages per scene and overall.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    all: Sums,
    scenes: BTreeMap<String, Sums>,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, scene: &str, ade: f64, fde: f64, nll: Option<&KdeNll>) {
        self.all.add(ade, fde, nll);
        self.scenes
            .entry(scene.to_string())
            .or_default()
            .add(ade, fde, nll);
    }

    pub fn finish(&self) -> MetricReport {
        let all = self.all.finish();
        MetricReport {
            count: all.count,
            ade: all.ade,
            fde: all.fde,
            nll: all.nll,
            nll_total: all.nll_total,
            per_scene: self
                .scenes
                .iter()
                .map(|(k, s)| (k.clone(), s.finish()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RigidTransform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn path(points: &[(f64, f64)]) -> Vec<Position> {
        points.iter().map(|&(x, y)| v(x, y)).collect()
    }

    #[test]
    fn exact_prediction_has_zero_error() {
        let gt = path(&[(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)]);
        assert_eq!(ade(&gt, &gt).unwrap(), 0.0);
        assert_eq!(fde(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_is_three_four_five() {
        let gt = path(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        let pred: Vec<Position> = gt.iter().map(|p| *p + v(0.3, 0.4)).collect();
        assert!((ade(&pred, &gt).unwrap() - 0.5).abs() < 1e-12);
        assert!((fde(&pred, &gt).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_frame_ade_equals_fde() {
        let gt = path(&[(1.0, 1.0)]);
        let pred = path(&[(2.0, 3.0)]);
        assert_eq!(ade(&pred, &gt).unwrap(), fde(&pred, &gt).unwrap());
    }

    #[test]
    fn offsets_before_final_frame_leave_fde_zero() {
        let gt = path(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let pred = path(&[(5.0, 5.0), (-1.0, 3.0), (2.0, 0.0)]);
        assert_eq!(fde(&pred, &gt).unwrap(), 0.0);
        assert!(ade(&pred, &gt).unwrap() > 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let gt = path(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(ade(&gt[..1], &gt).is_err());
        assert!(fde(&gt[..1], &gt).is_err());
    }

    #[test]
    fn best_of_k_minimizes_independently_by_default() {
        let gt = path(&[(0.0, 0.0), (0.0, 0.0)]);
        // A: small early error, large final. B: large early, exact final.
        let a = path(&[(0.1, 0.0), (1.0, 0.0)]);
        let b = path(&[(3.0, 0.0), (0.0, 0.0)]);
        let samples = vec![a.clone(), b.clone()];
        let (ba, bf) = best_of_k(&samples, &gt, BestOfMode::Independent).unwrap();
        assert_eq!((ba, bf), (ade(&a, &gt).unwrap(), fde(&b, &gt).unwrap()));
        let (ja, jf) = best_of_k(&samples, &gt, BestOfMode::Joint).unwrap();
        assert_eq!((ja, jf), (ade(&a, &gt).unwrap(), fde(&a, &gt).unwrap()));
    }

    #[test]
    fn best_of_one_and_perfect_sample() {
        let gt = path(&[(0.0, 0.0), (1.0, 1.0)]);
        let s = path(&[(0.5, 0.0), (1.0, 2.0)]);
        let one = best_of_k(std::slice::from_ref(&s), &gt, BestOfMode::Independent).unwrap();
        assert_eq!(one, (ade(&s, &gt).unwrap(), fde(&s, &gt).unwrap()));
        let with_perfect = best_of_k(&[s, gt.clone()], &gt, BestOfMode::Independent).unwrap();
        assert_eq!(with_perfect, (0.0, 0.0));
        assert!(best_of_k(&[], &gt, BestOfMode::Independent).is_err());
    }

    fn normal_cloud(n: usize, seed: u64) -> Vec<Position> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| v(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    }

    #[test]
    fn kde_nll_of_standard_normal_at_mean() {
        let cloud = normal_cloud(2000, 1);
        let nll = kde_nll_at(&cloud, Vec2::ZERO).unwrap();
        assert!((nll - LN_2PI).abs() < 0.15, "nll {nll}");
    }

    #[test]
    fn kde_matches_direct_double_sum() {
        let cloud = normal_cloud(50, 2);
        let point = v(0.3, -0.7);
        let n = cloud.len() as f64;
        let sd = |vals: Vec<f64>| {
            let m = vals.iter().sum::<f64>() / n;
            (vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let hx = sd(cloud.iter().map(|p| p.x).collect()) * n.powf(-1.0 / 6.0);
        let hy = sd(cloud.iter().map(|p| p.y).collect()) * n.powf(-1.0 / 6.0);
        let density: f64 = cloud
            .iter()
            .map(|s| {
                let gx = (-(point.x - s.x).powi(2) / (2.0 * hx * hx)).exp()
                    / (hx * (2.0 * std::f64::consts::PI).sqrt());
                let gy = (-(point.y - s.y).powi(2) / (2.0 * hy * hy)).exp()
                    / (hy * (2.0 * std::f64::consts::PI).sqrt());
                gx * gy
            })
            .sum::<f64>()
            / n;
        let nll = kde_nll_at(&cloud, point).unwrap();
        assert!((nll + density.ln()).abs() < 1e-10);
    }

    #[test]
    fn kde_nll_grows_away_from_cloud() {
        let cloud = normal_cloud(500, 3);
        let near = kde_nll_at(&cloud, v(4.0, 0.0)).unwrap();
        let far = kde_nll_at(&cloud, v(8.0, 0.0)).unwrap();
        assert!(far > near && near > kde_nll_at(&cloud, Vec2::ZERO).unwrap());
        let radii = [0.5, 1.5, 3.0];
        let along: Vec<f64> = radii
            .iter()
            .map(|r| kde_nll_at(&cloud, v(*r * 0.6, *r * 0.8)).unwrap())
            .collect();
        assert!(along[0] < along[1] && along[1] < along[2]);
    }

    #[test]
    fn degenerate_cloud_uses_bandwidth_floor() {
        let cloud = vec![v(1.0, 1.0); 10];
        let at = kde_nll_at(&cloud, v(1.0, 1.0)).unwrap();
        let expected = LN_2PI + 2.0 * MIN_BANDWIDTH.ln();
        assert!((at - expected).abs() < 1e-9);
        assert!(kde_nll_at(&cloud[..1], v(1.0, 1.0)).is_err());
    }

    #[test]
    fn total_nll_sums_independent_steps() {
        let a = normal_cloud(300, 4);
        let b = normal_cloud(300, 5);
        let samples: Vec<Vec<Position>> = a
            .iter()
            .zip(&b)
            .map(|(p, q)| vec![*p, *q + v(2.0, 0.0)])
            .collect();
        let gt = vec![v(0.1, 0.2), v(2.5, -0.3)];
        let r = nll_kde(&samples, &gt).unwrap();
        let s0 = kde_nll_at(&a, gt[0]).unwrap();
        let s1 = kde_nll_at(
            &b.iter().map(|q| *q + v(2.0, 0.0)).collect::<Vec<_>>(),
            gt[1],
        )
        .unwrap();
        assert_eq!(r.per_step, vec![s0, s1]);
        assert_eq!(r.total, s0 + s1);
        assert_eq!(r.mean, (s0 + s1) / 2.0);
    }

    #[test]
    fn linear_baseline_examples() {
        let obs: Vec<Position> = (0..8).map(|i| v(0.5 * i as f64 - 3.5, 0.0)).collect();
        let pred = linear_extrapolation(&obs, 12, VelocityMode::Mean).unwrap();
        assert!((pred[11] - v(6.0, 0.0)).norm() < 1e-12);

        let still = vec![v(2.0, -1.0); 8];
        let pred = linear_extrapolation(&still, 12, VelocityMode::Mean).unwrap();
        assert!(pred.iter().all(|p| *p == v(2.0, -1.0)));

        let line: Vec<Position> = (0..20)
            .map(|i| v(0.25 * i as f64, -0.5 * i as f64))
            .collect();
        let pred = linear_extrapolation(&line[..8], 12, VelocityMode::Mean).unwrap();
        assert!(ade(&pred, &line[8..]).unwrap() < 1e-12);
        assert!(fde(&pred, &line[8..]).unwrap() < 1e-12);
        assert!(linear_extrapolation(&line[..1], 12, VelocityMode::Mean).is_err());
    }

    #[test]
    fn last_displacement_mode() {
        let obs = path(&[(0.0, 0.0), (1.0, 0.0), (1.0, 2.0)]);
        let pred = linear_extrapolation(&obs, 2, VelocityMode::Last).unwrap();
        assert_eq!(pred, path(&[(1.0, 4.0), (1.0, 6.0)]));
        let pred = linear_extrapolation(&obs, 1, VelocityMode::Mean).unwrap();
        assert_eq!(pred, path(&[(1.5, 3.0)]));
    }

    #[test]
    fn report_averages_per_scene_and_overall() {
        let mut acc = MetricAccumulator::new();
        acc.add("a", 1.0, 2.0, None);
        acc.add("a", 3.0, 4.0, None);
        acc.add("b", 5.0, 6.0, None);
        let r = acc.finish();
        assert_eq!((r.count, r.ade, r.fde), (3, 3.0, 4.0));
        assert_eq!(r.per_scene["a"].ade, 2.0);
        assert_eq!(r.nll, None);
        let csv = r.to_csv();
        assert!(csv.starts_with("scene,count,ade,fde,nll,nll_total\na,2,2,3,,\n"));
        assert!(csv.ends_with("all,3,3,4,,\n"));
    }

    fn brute(samples: &[Vec<Position>], gt: &[Position]) -> (f64, f64) {
        let mut best = (f64::INFINITY, f64::INFINITY);
        for s in samples {
            let mut sum = 0.0;
            for t in 0..gt.len() {
                let dx = s[t].x - gt[t].x;
                let dy = s[t].y - gt[t].y;
                sum += (dx * dx + dy * dy).sqrt();
            }
            let a = sum / gt.len() as f64;
            let last = gt.len() - 1;
            let f = ((s[last].x - gt[last].x).powi(2) + (s[last].y - gt[last].y).powi(2)).sqrt();
            if a < best.0 {
                best.0 = a;
            }
            if f < best.1 {
                best.1 = f;
            }
        }
        best
    }

    fn traj() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 12)
    }

    proptest! {
        #[test]
        fn best_of_k_matches_naive_loops(gt in traj(), samples in prop::collection::vec(traj(), 1..20)) {
            let gt = path(&gt);
            let samples: Vec<Vec<Position>> = samples.iter().map(|s| path(s)).collect();
            let (a, f) = best_of_k(&samples, &gt, BestOfMode::Independent).unwrap();
            let (ba, bf) = brute(&samples, &gt);
            prop_assert!((a - ba).abs() <= 1e-9 * ba.abs().max(1e-300));
            prop_assert!((f - bf).abs() <= 1e-9 * bf.abs().max(1e-300));
        }

        #[test]
        fn errors_are_rigid_invariant(
            gt in traj(), pred in traj(),
            angle in -3.2f64..3.2, flip in any::<bool>(), tx in -100.0f64..100.0, ty in -100.0f64..100.0,
        ) {
            let t = RigidTransform { flip_x: flip, flip_y: false, angle };
            let map = |p: &Position| t.apply_linear(*p) + v(tx, ty);
            let (gt, pred) = (path(&gt), path(&pred));
            let gt2: Vec<Position> = gt.iter().map(map).collect();
            let pred2: Vec<Position> = pred.iter().map(map).collect();
            prop_assert!((ade(&pred, &gt).unwrap() - ade(&pred2, &gt2).unwrap()).abs() < 1e-9);
            prop_assert!((fde(&pred, &gt).unwrap() - fde(&pred2, &gt2).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn more_samples_never_hurt(gt in traj(), samples in prop::collection::vec(traj(), 2..10)) {
            let gt = path(&gt);
            let samples: Vec<Vec<Position>> = samples.iter().map(|s| path(s)).collect();
            let fewer = best_of_k(&samples[..samples.len() - 1], &gt, BestOfMode::Independent).unwrap();
            let all = best_of_k(&samples, &gt, BestOfMode::Independent).unwrap();
            prop_assert!(all.0 <= fewer.0 && all.1 <= fewer.1);
        }
    }
}

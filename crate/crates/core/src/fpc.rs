//! Drawing prediction sets and Final Position Clustering: oversample,
//! cluster the final positions with k-means, keep the drawn sample closest
//! to each cluster mean.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{ParamStore, Real};
use crate::error::{Error, Result};
use crate::geom::Position;
use crate::model::{rollout_batch, EncodedObservation, RolloutSample, TrajectoryVae};

/// Number of predictions in the best-of-K protocol.
pub const DEFAULT_K: usize = 20;

/// Upper bound on the oversampling multiplier.
pub const MAX_SAMPLING_RATE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub samples: Vec<RolloutSample>,
    /// Index of every retained sample among the drawn ones.
    pub drawn_indices: Vec<usize>,
    pub k_requested: usize,
    pub sampling_rate: usize,
    /// Fewer distinct final positions than clusters were available, so some
    /// retained samples share a final position.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub final_positions: Vec<Position>,
    pub centroids: Vec<Position>,
    /// Cluster of each point, in input order.
    pub labels: Vec<usize>,
    /// Input index of the representative of each cluster.
    pub representatives: Vec<usize>,
    pub degenerate: bool,
}

impl ClusterAssignment {
    pub fn inertia(&self) -> f64 {
        self.final_positions
            .iter()
            .zip(&self.labels)
            .map(|(p, &l)| (*p - self.centroids[l]).norm_sq())
            .sum()
    }
}

/// `k` independent rollouts of `steps` steps.
pub fn sample_predictions<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    encoded: &EncodedObservation,
    k: usize,
    steps: usize,
    rng: &mut R,
) -> Result<PredictionSet> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "at least one prediction is required".into(),
        ));
    }
    let samples = rollout_batch(model, store, encoded, steps, k, rng)?;
    Ok(PredictionSet {
        samples,
        drawn_indices: (0..k).collect(),
        k_requested: k,
        sampling_rate: 1,
        degenerate: false,
    })
}

/// Draws `k * rate` samples and reduces them to `k` with [`fpc_select`].
/// A rate of 1 (or 0) draws exactly `k` samples and skips clustering.
#[allow(clippy::too_many_arguments)]
pub fn predict_with_fpc<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    encoded: &EncodedObservation,
    k: usize,
    steps: usize,
    rate: usize,
    kmeans: &KMeansConfig,
    rng: &mut R,
) -> Result<PredictionSet> {
    if rate > MAX_SAMPLING_RATE {
        return Err(Error::InvalidInput(format!(
            "sampling rate {rate} exceeds the cap of {MAX_SAMPLING_RATE}"
        )));
    }
    if rate <= 1 {
        return sample_predictions(model, store, encoded, k, steps, rng);
    }
    let drawn = sample_predictions(model, store, encoded, k * rate, steps, rng)?;
    let mut set = fpc_select(drawn.samples, k, kmeans)?;
    set.sampling_rate = rate;
    Ok(set)
}

pub fn fpc_select(
    samples: Vec<RolloutSample>,
    k: usize,
    config: &KMeansConfig,
) -> Result<PredictionSet> {
    if k == 0 || samples.len() < k {
        return Err(Error::InvalidInput(format!(
            "cannot select {k} predictions from {} samples",
            samples.len()
        )));
    }
    let finals: Vec<Position> = samples.iter().map(RolloutSample::final_position).collect();
    let clusters = kmeans(&finals, k, config)?;
    let mut chosen = clusters.representatives.clone();
    chosen.sort_unstable();
    let mut slots: Vec<Option<RolloutSample>> = samples.into_iter().map(Some).collect();
    let kept = chosen
        .iter()
        .map(|&i| slots[i].take().expect("representatives are distinct"))
        .collect();
    Ok(PredictionSet {
        samples: kept,
        drawn_indices: chosen,
        k_requested: k,
        sampling_rate: 1,
        degenerate: clusters.degenerate,
    })
}

fn cmp_points(a: Position, b: Position) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

fn nearest(p: Position, centroids: &[Position]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, q) in centroids.iter().enumerate() {
        let d = (p - *q).norm_sq();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding over `pts` (already in canonical order).
fn seed_centroids(pts: &[Position], k: usize, rng: &mut ChaCha8Rng) -> Vec<Position> {
    let mut centroids = vec![pts[rng.gen_range(0..pts.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = pts.iter().map(|p| nearest(*p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.gen_range(0..pts.len())
        };
        centroids.push(pts[next]);
    }
    centroids
}

fn assign(pts: &[Position], centroids: &mut [Position], labels: &mut [usize]) {
    for (p, l) in pts.iter().zip(labels.iter_mut()) {
        *l = nearest(*p, centroids).0;
    }
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        // Move the point lying farthest from its own centroid, among
        // clusters that can spare one, into the empty cluster.
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in pts.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = (*p - centroids[labels[i]]).norm_sq();
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("at least k points");
        labels[i] = empty;
        centroids[empty] = pts[i];
    }
}

fn means(pts: &[Position], labels: &[usize], k: usize) -> Vec<Position> {
    let mut sums = vec![Position::ZERO; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in pts.iter().zip(labels) {
        sums[l] = sums[l] + *p;
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| *s * (1.0 / c as f64))
        .collect()
}

/// Seeded k-means on 2D points. Clusters do not depend on the order of
/// `points`; members equidistant from their centroid are resolved by the
/// lowest input index.
pub fn kmeans(points: &[Position], k: usize, config: &KMeansConfig) -> Result<ClusterAssignment> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("point {bad} is not finite")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_points(points[a], points[b]).then(a.cmp(&b)));
    let pts: Vec<Position> = order.iter().map(|&i| points[i]).collect();
    let distinct = 1 + pts.windows(2).filter(|w| w[0] != w[1]).count();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = seed_centroids(&pts, k, &mut rng);
    let mut labels = vec![0usize; n];
    for _ in 0..config.max_iter {
        assign(&pts, &mut centroids, &mut labels);
        let updated = means(&pts, &labels, k);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift <= config.tol {
            break;
        }
    }
    assign(&pts, &mut centroids, &mut labels);
    centroids = means(&pts, &labels, k);

    let mut reps: Vec<Option<(usize, f64)>> = vec![None; k];
    for (s, &l) in labels.iter().enumerate() {
        let d = (pts[s] - centroids[l]).norm_sq();
        let orig = order[s];
        let better = match reps[l] {
            None => true,
            Some((o, bd)) => d < bd || (d == bd && orig < o),
        };
        if better {
            reps[l] = Some((orig, d));
        }
    }
    let mut out_labels = vec![0usize; n];
    for (s, &l) in labels.iter().enumerate() {
        out_labels[order[s]] = l;
    }
    Ok(ClusterAssignment {
        final_positions: points.to_vec(),
        centroids,
        labels: out_labels,
        representatives: reps.into_iter().map(|r| r.expect("non-empty").0).collect(),
        degenerate: distinct < k,
    })
}

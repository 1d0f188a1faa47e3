use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use super::features::{Batch, WindowFeatures};
use super::network::{TeacherNoise, TrajectoryVae};
use crate::data::{AgentId, ObservationWindow};
use crate::diff::{DiagGaussian, Eager, Ops, ParamId, ParamStore, Real};
use crate::error::{Error, Result};
use crate::geom::{Displacement, Position, Vec2};

/// Encoder output for one window, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedObservation {
    pub q_states: Vec<Vec<f64>>,
    pub h_init: Vec<f64>,
    /// Per observed frame, `(neighbor, weight)` in neighbor-list order.
    pub attention: Vec<Vec<(AgentId, f64)>>,
    pub origin: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSample {
    pub latents: Vec<Vec<f64>>,
    pub displacements: Vec<Displacement>,
    /// Running sums of `displacements`.
    pub offsets: Vec<Displacement>,
    /// `origin + offsets[t]`.
    pub positions: Vec<Position>,
    pub decoder: Option<Vec<DiagGaussian>>,
}

impl RolloutSample {
    pub fn final_position(&self) -> Position {
        *self.positions.last().expect("non-empty rollout")
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput<F> {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub gradients: Vec<(ParamId, Array2<F>)>,
}

fn row<F: Real>(a: &Array2<F>, r: usize) -> Vec<f64> {
    a.row(r).iter().map(|v| v.as_f64()).collect()
}

pub fn encode_observation<F: Real>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    window: &ObservationWindow,
) -> Result<EncodedObservation> {
    let features = WindowFeatures::observation_only(window, model.config.mpd_horizon)?;
    let batch = Batch::<F>::new(&[&features])?;
    let mut ops = Eager::new(store);
    let enc = model.encode(&mut ops, &batch)?;
    let attention = enc
        .attention
        .iter()
        .zip(&batch.frames)
        .map(|(w, frame)| match w {
            None => Vec::new(),
            Some(w) => frame
                .agents
                .iter()
                .zip(w.iter())
                .map(|(a, v)| (*a, v.as_f64()))
                .collect(),
        })
        .collect();
    Ok(EncodedObservation {
        q_states: enc.q_states.iter().map(|q| row(q, 0)).collect(),
        h_init: row(&enc.h_init, 0),
        attention,
        origin: features.last_observed,
    })
}

/// Rolls out one trajectory per row of `h_init`, row `r` anchored at
/// `origins[r]`.
pub fn rollout_rows<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    h_init: Array2<F>,
    origins: &[Position],
    steps: usize,
    keep_decoder: bool,
    rng: &mut R,
) -> Result<Vec<RolloutSample>> {
    if origins.len() != h_init.nrows() {
        return Err(Error::Shape(
            "one origin per rollout row is required".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::InvalidInput(
            "rollout needs at least one step".into(),
        ));
    }
    let mut ops = Eager::new(store);
    let h = ops.constant(h_init);
    let gen = model.generate(&mut ops, &h, steps, rng)?;
    let samples = origins
        .iter()
        .enumerate()
        .map(|(r, &origin)| {
            let displacements: Vec<Vec2> = gen
                .displacements
                .iter()
                .map(|d| Vec2::new(d[[r, 0]].as_f64(), d[[r, 1]].as_f64()))
                .collect();
            let (offsets, positions) = accumulate_positions(origin, &displacements);
            let decoder = keep_decoder.then(|| {
                gen.decoder
                    .iter()
                    .map(|(m, lv)| DiagGaussian::new(row(m, r), row(lv, r)))
                    .collect()
            });
            RolloutSample {
                latents: gen.latents.iter().map(|z| row(z, r)).collect(),
                displacements,
                offsets,
                positions,
                decoder,
            }
        })
        .collect();
    Ok(samples)
}

/// Running sums of `displacements` and the positions they reach from
/// `origin`.
pub fn accumulate_positions(
    origin: Position,
    displacements: &[Displacement],
) -> (Vec<Displacement>, Vec<Position>) {
    let mut offsets = Vec::with_capacity(displacements.len());
    let mut run = Vec2::ZERO;
    for d in displacements {
        run = run + *d;
        offsets.push(run);
    }
    let positions = offsets.iter().map(|o| origin + *o).collect();
    (offsets, positions)
}

fn h_matrix<F: Real>(encoded: &EncodedObservation, copies: usize) -> Array2<F> {
    let h = &encoded.h_init;
    Array2::from_shape_fn((copies, h.len()), |(_, c)| F::of(h[c]))
}

pub fn rollout<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    encoded: &EncodedObservation,
    steps: usize,
    rng: &mut R,
) -> Result<RolloutSample> {
    let mut out = rollout_batch(model, store, encoded, steps, 1, rng)?;
    Ok(out.pop().expect("one sample"))
}

/// `count` independent rollouts from one encoding, evaluated as a batch.
pub fn rollout_batch<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    encoded: &EncodedObservation,
    steps: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<RolloutSample>> {
    let origins = vec![encoded.origin; count];
    rollout_rows(
        model,
        store,
        h_matrix(encoded, count),
        &origins,
        steps,
        true,
        rng,
    )
}

/// Backward recurrence states for the future steps of `window`.
pub fn backward_pass<F: Real>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    window: &ObservationWindow,
) -> Result<Vec<Vec<f64>>> {
    let features = WindowFeatures::from_window(window, model.config.mpd_horizon)?;
    let batch = Batch::<F>::new(&[&features])?;
    let mut ops = Eager::new(store);
    let states = model.backward_states(&mut ops, &batch)?;
    Ok(states.iter().map(|b| row(b, 0)).collect())
}

/// Loss and gradients of one complete window with freshly drawn noise.
pub fn training_loss<F: Real, R: Rng + ?Sized>(
    model: &TrajectoryVae,
    store: &ParamStore<F>,
    window: &ObservationWindow,
    rng: &mut R,
) -> Result<LossOutput<F>> {
    let features = WindowFeatures::from_window(window, model.config.mpd_horizon)?;
    let batch = Batch::<F>::new(&[&features])?;
    let noise = TeacherNoise::draw(1, model.config.latent_dim, batch.pred_len, rng);
    let (loss, recon, kl, gradients) = model.loss_and_gradients(store, &batch, &noise)?;
    Ok(LossOutput {
        loss,
        recon,
        kl,
        gradients,
    })
}

/// Index that repeats each of `n` rows `copies` times, row-major.
pub fn repeat_index(n: usize, copies: usize) -> Arc<[usize]> {
    (0..n)
        .flat_map(|i| std::iter::repeat_n(i, copies))
        .collect()
}

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{NeighborEntry, ObservationWindow};
use crate::diff::check::{check_gradients, GradCheck};
use crate::diff::{Eager, Graph, Ops, ParamStore, Real};
use crate::geom::{NeighborState, Vec2};

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

fn toy_window(obs: usize, pred: usize, neighbors: usize, seed: u64) -> ObservationWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = v(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let vel = v(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let mut positions = Vec::new();
    for _ in 0..obs + pred {
        positions.push(p);
        p = p + vel + v(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
    }
    let lists = (0..obs + pred)
        .map(|_| {
            (0..neighbors)
                .map(|j| NeighborEntry {
                    agent: 10 + j as u64,
                    state: NeighborState {
                        rel_position: v(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
                        rel_velocity: v(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
                    },
                })
                .collect()
        })
        .collect();
    ObservationWindow {
        scene_id: "toy".into(),
        target: 1,
        start_frame: 0,
        frame_dt: 0.4,
        obs: positions[..obs].to_vec(),
        fut: positions[obs..].to_vec(),
        neighbors: lists,
    }
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        ..ModelConfig::uniform(6)
    }
}

fn build<F: Real>(config: ModelConfig, seed: u64) -> (TrajectoryVae, ParamStore<F>) {
    let mut store = ParamStore::new();
    let model =
        TrajectoryVae::new(config, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (model, store)
}

fn batch_of<F: Real>(model: &TrajectoryVae, windows: &[&ObservationWindow]) -> Batch<F> {
    let feats: Vec<WindowFeatures> = windows
        .iter()
        .map(|w| WindowFeatures::from_window(w, model.config.mpd_horizon).unwrap())
        .collect();
    let refs: Vec<&WindowFeatures> = feats.iter().collect();
    Batch::new(&refs).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn default_latent_is_32_dimensional() {
    assert_eq!(ModelConfig::default().latent_dim, 32);
    assert_eq!(ModelConfig::default().mpd_horizon, 7.0);
}

#[test]
fn single_neighbor_gets_full_attention() {
    let (model, store) = build::<f32>(tiny_config(), 1);
    let enc = encode_observation(&model, &store, &toy_window(8, 12, 1, 3)).unwrap();
    assert!(enc.attention[0].is_empty());
    for frame in &enc.attention[1..] {
        assert_eq!(frame.len(), 1);
        assert_eq!(frame[0].1, 1.0);
    }
}

#[test]
fn identical_neighbors_split_attention() {
    let (model, store) = build::<f32>(tiny_config(), 2);
    let mut w = toy_window(8, 12, 1, 4);
    for list in &mut w.neighbors {
        let mut twin = list[0].clone();
        twin.agent = 99;
        list.push(twin);
    }
    let enc = encode_observation(&model, &store, &w).unwrap();
    for frame in &enc.attention[1..] {
        assert!((frame[0].1 - 0.5).abs() < 1e-6 && (frame[1].1 - 0.5).abs() < 1e-6);
    }
}

#[test]
fn empty_neighborhood_ignores_neighbor_nets() {
    let (model, mut store) = build::<f64>(tiny_config(), 3);
    let w = toy_window(8, 12, 0, 5);
    let before = encode_observation(&model, &store, &w).unwrap();
    assert!(before.q_states[0].iter().all(|&x| x == 0.0));
    assert!(before.attention.iter().all(Vec::is_empty));
    for block in store.blocks_mut() {
        if block.name.starts_with("encoder.neighbor")
            || block.name.starts_with("encoder.key")
            || block.name.starts_with("encoder.query")
            || block.name.starts_with("encoder.init")
        {
            block.values.fill(0.37);
        }
    }
    let after = encode_observation(&model, &store, &w).unwrap();
    assert_eq!(before, after);
}

#[test]
fn short_observation_is_rejected() {
    let (model, store) = build::<f32>(tiny_config(), 4);
    let w = toy_window(1, 3, 1, 6);
    assert!(encode_observation(&model, &store, &w).is_err());
}

#[test]
fn graph_and_eager_encodings_agree() {
    let (model, store) = build::<f32>(tiny_config(), 5);
    let w = toy_window(8, 12, 3, 7);
    let batch = batch_of::<f32>(&model, &[&w]);
    let mut e = Eager::new(&store);
    let a = model.encode(&mut e, &batch).unwrap();
    let mut g = Graph::new(&store);
    let b = model.encode(&mut g, &batch).unwrap();
    assert_eq!(*a.h_init, *g.value(&b.h_init));
}

#[test]
fn batched_encoding_matches_single_windows() {
    let (model, store) = build::<f64>(tiny_config(), 6);
    let w1 = toy_window(8, 12, 2, 8);
    let w2 = toy_window(8, 12, 0, 9);
    let w3 = toy_window(8, 12, 4, 10);
    let batch = batch_of::<f64>(&model, &[&w1, &w2, &w3]);
    let mut ops = Eager::new(&store);
    let enc = model.encode(&mut ops, &batch).unwrap();
    for (r, w) in [&w1, &w2, &w3].iter().enumerate() {
        let single = encode_observation(&model, &store, w).unwrap();
        let row: Vec<f64> = enc.h_init.row(r).to_vec();
        assert!(max_abs_diff(&row, &single.h_init) < 1e-12);
    }
}

#[test]
fn neighbor_order_does_not_matter() {
    let (model, store) = build::<f32>(tiny_config(), 7);
    let w = toy_window(8, 12, 5, 11);
    let mut r = w.clone();
    for list in &mut r.neighbors {
        list.reverse();
    }
    let a = encode_observation(&model, &store, &w).unwrap();
    let b = encode_observation(&model, &store, &r).unwrap();
    assert!(max_abs_diff(&a.h_init, &b.h_init) < 1e-6);
    for (fa, fb) in a.attention.iter().zip(&b.attention) {
        for (agent, weight) in fa {
            let other = fb.iter().find(|(id, _)| id == agent).unwrap().1;
            assert!((weight - other).abs() < 1e-6);
        }
    }
    let ba = backward_pass(&model, &store, &w).unwrap();
    let bb = backward_pass(&model, &store, &r).unwrap();
    for (x, y) in ba.iter().zip(&bb) {
        assert!(max_abs_diff(x, y) < 1e-6);
    }
}

#[test]
fn single_step_backward_pass_starts_from_zero() {
    let (model, store) = build::<f64>(tiny_config(), 8);
    let w = toy_window(8, 1, 2, 12);
    let states = backward_pass(&model, &store, &w).unwrap();
    assert_eq!(states.len(), 1);

    let batch = batch_of::<f64>(&model, &[&w]);
    let frame = &batch.frames[8];
    let mut ops = Eager::new(&store);
    let s = ops.constant(frame.self_states.clone());
    let own = model.future_self_net.forward(&mut ops, &s);
    let n = ops.constant(frame.states.clone());
    let n = model.future_neighbor_net.forward(&mut ops, &n);
    let social = ops.segment_sum(&n, &frame.segment, 1);
    let o = ops.concat(&[own, social]);
    let zero = ops.zeros(1, model.config.rnn_hidden);
    let expected = model.backward_gru.step(&mut ops, &o, &zero);
    assert!(max_abs_diff(&states[0], &expected.row(0).to_vec()) < 1e-15);
}

#[test]
fn zero_parameters_give_zero_backward_states() {
    let (model, mut store) = build::<f64>(tiny_config(), 9);
    for block in store.blocks_mut() {
        block.values.fill(0.0);
    }
    let states = backward_pass(&model, &store, &toy_window(8, 12, 3, 13)).unwrap();
    assert!(states.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn backward_pass_needs_future() {
    let (model, store) = build::<f64>(tiny_config(), 10);
    let w = toy_window(8, 12, 1, 14);
    let feats = WindowFeatures::observation_only(&w, 7.0).unwrap();
    let batch = Batch::<f64>::new(&[&feats]).unwrap();
    let mut ops = Eager::new(&store);
    assert!(model.backward_states(&mut ops, &batch).is_err());
    let noise = TeacherNoise::zeros(1, 4, 12);
    assert!(model.loss_and_gradients(&store, &batch, &noise).is_err());
}

#[test]
fn matching_posterior_and_exact_displacements_give_zero_loss() {
    let (model, mut store) = build::<f64>(tiny_config(), 11);
    for block in store.blocks_mut() {
        block.values.fill(0.0);
    }
    let mut w = toy_window(8, 12, 2, 15);
    let last = w.last_observed();
    w.fut.iter_mut().for_each(|p| *p = last);
    let batch = batch_of::<f64>(&model, &[&w]);
    let noise = TeacherNoise::zeros(1, 4, 12);
    let (loss, recon, kl, _) = model.loss_and_gradients(&store, &batch, &noise).unwrap();
    assert_eq!((loss, recon, kl), (0.0, 0.0, 0.0));
}

#[test]
fn loss_matches_hand_computed_reconstruction() {
    // Zero network with a decoder bias of (a, b): every step adds (a, b)
    // and the prior equals the posterior.
    let (model, mut store) = build::<f64>(tiny_config(), 12);
    for block in store.blocks_mut() {
        block.values.fill(0.0);
    }
    let bias_name = format!("decoder.{}.bias", model.decoder.net.layers.len() - 1);
    let mut bias = Array2::zeros((1, 4));
    bias[[0, 0]] = 0.3;
    bias[[0, 1]] = -0.1;
    store.set_values(&bias_name, bias).unwrap();
    let w = toy_window(8, 5, 1, 16);
    let batch = batch_of::<f64>(&model, &[&w]);
    let (loss, recon, kl, _) = model
        .loss_and_gradients(&store, &batch, &TeacherNoise::zeros(1, 4, 5))
        .unwrap();
    let last = w.last_observed();
    let expected: f64 = w
        .fut
        .iter()
        .enumerate()
        .map(|(s, p)| {
            let k = (s + 1) as f64;
            let off = *p - last;
            (off.x - 0.3 * k).powi(2) + (off.y + 0.1 * k).powi(2)
        })
        .sum::<f64>()
        / 5.0;
    assert_eq!(kl, 0.0);
    assert!((recon - expected).abs() < 1e-12 && loss == recon);
}

fn grad_check_for(config: ModelConfig, neighbors: usize, seed: u64) -> f64 {
    let (model, store) = build::<f64>(config, seed);
    let w = toy_window(4, 3, neighbors, seed + 100);
    let batch = batch_of::<f64>(&model, &[&w]);
    let noise = TeacherNoise::draw(
        1,
        model.config.latent_dim,
        3,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let report = check_gradients(&store, &GradCheck::default(), |g| {
        model.teacher_forward(g, &batch, &noise).unwrap().total
    });
    report.max_rel_error
}

#[test]
fn training_loss_gradient_matches_finite_differences() {
    let err = grad_check_for(tiny_config(), 1, 21);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn sampled_kl_gradient_matches_finite_differences() {
    let config = ModelConfig {
        kl_mode: KlMode::Sampled,
        ..tiny_config()
    };
    let err = grad_check_for(config, 2, 22);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn future_changes_posterior_but_not_first_prior() {
    let (model, store) = build::<f64>(tiny_config(), 13);
    let w = toy_window(8, 6, 2, 17);
    let mut moved = w.clone();
    let k = 3;
    moved.fut[k] = moved.fut[k] + v(0.7, -0.4);
    let noise = TeacherNoise::draw(1, 4, 6, &mut ChaCha8Rng::seed_from_u64(1));
    let run = |w: &ObservationWindow| {
        let batch = batch_of::<f64>(&model, &[w]);
        let mut ops = Eager::new(&store);
        let t = model.teacher_forward(&mut ops, &batch, &noise).unwrap();
        t.steps
            .iter()
            .map(|s| ((*s.prior_mean).clone(), (*s.posterior_mean).clone()))
            .collect::<Vec<_>>()
    };
    let (a, b) = (run(&w), run(&moved));
    assert_eq!(a[0].0, b[0].0);
    for s in 0..=k {
        assert_ne!(a[s].1, b[s].1, "posterior at step {s} ignores the future");
    }
}

#[test]
fn translation_leaves_encoding_and_displacements_unchanged() {
    let (model, store) = build::<f32>(ModelConfig::uniform(16), 14);
    let w = toy_window(8, 12, 3, 18);
    let shift = v(100.0, -50.0);
    let moved = w.shifted(shift);
    let a = encode_observation(&model, &store, &w).unwrap();
    let b = encode_observation(&model, &store, &moved).unwrap();
    assert!(max_abs_diff(&a.h_init, &b.h_init) < 1e-6);
    let ra = rollout_batch(&model, &store, &a, 12, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let rb = rollout_batch(&model, &store, &b, 12, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for (x, y) in ra.iter().zip(&rb) {
        for (p, q) in x.displacements.iter().zip(&y.displacements) {
            assert!((*p - *q).norm() < 1e-6);
        }
        assert!((y.final_position() - x.final_position() - shift).norm() < 1e-6);
    }
}

#[test]
fn positions_are_running_sums_of_displacements() {
    let (model, store) = build::<f32>(tiny_config(), 15);
    let w = toy_window(8, 12, 2, 19);
    let enc = encode_observation(&model, &store, &w).unwrap();
    let s = rollout(&model, &store, &enc, 12, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut run = Vec2::ZERO;
    for t in 0..12 {
        run = run + s.displacements[t];
        assert_eq!(s.offsets[t], run);
        assert_eq!(s.positions[t], enc.origin + run);
    }
    assert_eq!(s.latents.len(), 12);
    assert_eq!(s.latents[0].len(), 4);
}

#[test]
fn unit_steps_reach_diagonal() {
    let (offsets, positions) = accumulate_positions(Vec2::ZERO, &[v(1.0, 0.0), v(0.0, 1.0)]);
    assert_eq!(positions[1], v(1.0, 1.0));
    assert_eq!(offsets, positions);
}

#[test]
fn same_seed_gives_identical_rollouts() {
    let (model, store) = build::<f32>(tiny_config(), 16);
    let enc = encode_observation(&model, &store, &toy_window(8, 12, 2, 20)).unwrap();
    let a = rollout_batch(
        &model,
        &store,
        &enc,
        12,
        3,
        &mut ChaCha8Rng::seed_from_u64(9),
    )
    .unwrap();
    let b = rollout_batch(
        &model,
        &store,
        &enc,
        12,
        3,
        &mut ChaCha8Rng::seed_from_u64(9),
    )
    .unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn mean_mode_follows_decoder_means() {
    let config = ModelConfig {
        decode_mode: DecodeMode::Mean,
        ..tiny_config()
    };
    let (model, store) = build::<f64>(config, 17);
    let enc = encode_observation(&model, &store, &toy_window(8, 12, 1, 21)).unwrap();
    let s = rollout(&model, &store, &enc, 12, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for (d, dist) in s.displacements.iter().zip(s.decoder.as_ref().unwrap()) {
        assert_eq!((d.x, d.y), (dist.mean[0], dist.mean[1]));
    }
}

#[test]
fn non_finite_state_reports_step() {
    let (model, mut store) = build::<f64>(tiny_config(), 18);
    let enc = encode_observation(&model, &store, &toy_window(8, 12, 1, 22)).unwrap();
    let id = store.find("forward.gru.b_input").unwrap();
    store.get_mut(id).values.fill(f64::NAN);
    let err = rollout(&model, &store, &enc, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
    assert!(err.to_string().contains("step 1"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attention_is_a_probability_vector(seed in 0u64..1000, n in 1usize..6) {
        let (model, store) = build::<f32>(tiny_config(), seed);
        let enc = encode_observation(&model, &store, &toy_window(8, 12, n, seed)).unwrap();
        for frame in &enc.attention[1..] {
            prop_assert!(frame.iter().all(|(_, w)| *w >= 0.0));
            let total: f64 = frame.iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_form_loss_and_kl_are_nonnegative(seed in 0u64..1000, n in 0usize..4) {
        let (model, store) = build::<f64>(tiny_config(), seed);
        let w = toy_window(8, 12, n, seed + 7);
        let out = training_loss(&model, &store, &w, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(out.loss >= 0.0 && out.kl >= 0.0 && out.recon >= 0.0);

        let batch = batch_of::<f64>(&model, &[&w]);
        let noise = TeacherNoise::draw(1, 4, 12, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut ops = Eager::new(&store);
        let terms = model.teacher_forward(&mut ops, &batch, &noise).unwrap();
        for kl in &terms.kl_steps {
            prop_assert!(kl[[0, 0]] >= -1e-12);
        }
    }
}

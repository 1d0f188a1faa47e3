use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::features::{Batch, FrameBatch};
use super::{DecodeMode, KlMode, ModelConfig};
use crate::diff::{
    kl_rows, log_density_rows, reparam_sample, GaussianHead, Graph, GruCell, LayerSpec, Linear,
    Mlp, Ops, ParamId, ParamStore, Real, LEAKY_SLOPE,
};
use crate::error::{Error, Result};

const SELF_DIM: usize = 4;
const NEIGHBOR_DIM: usize = 4;
const SOCIAL_DIM: usize = 3;

/// `(total, recon, kl, gradients)` from one batch.
pub type LossGradients<F> = (f64, f64, f64, Vec<(ParamId, Array2<F>)>);

/// Network layout. Holds parameter ids only; values live in a
/// [`ParamStore`], so one layout serves stores of either precision.
#[derive(Debug, Clone)]
pub struct TrajectoryVae {
    pub config: ModelConfig,
    pub self_net: Mlp,
    pub neighbor_net: Mlp,
    pub query_net: Mlp,
    pub key_net: Mlp,
    pub init_net: Mlp,
    pub obs_gru: GruCell,
    pub state_init: Linear,
    pub step_embed: Mlp,
    pub forward_gru: GruCell,
    pub future_self_net: Mlp,
    pub future_neighbor_net: Mlp,
    pub backward_gru: GruCell,
    pub prior: GaussianHead,
    pub posterior: GaussianHead,
    pub decoder: GaussianHead,
}

/// Output of the observation encoder for a batch.
#[derive(Debug, Clone)]
pub struct Encoding<V> {
    pub q_states: Vec<V>,
    pub h_init: V,
    /// Per observed frame: `[pairs, 1]` weights aligned with the frame's
    /// neighbor rows, `None` at the first frame or with no neighbors.
    pub attention: Vec<Option<V>>,
}

#[derive(Debug, Clone)]
pub struct StepDistributions<V> {
    pub prior_mean: V,
    pub prior_log_var: V,
    pub posterior_mean: V,
    pub posterior_log_var: V,
}

#[derive(Debug, Clone)]
pub struct LossTerms<V> {
    pub total: V,
    pub recon: V,
    pub kl: V,
    /// Per step, `[batch, 1]`.
    pub kl_steps: Vec<V>,
    pub steps: Vec<StepDistributions<V>>,
}

#[derive(Debug, Clone)]
pub struct Generated<V> {
    pub latents: Vec<V>,
    pub displacements: Vec<V>,
    pub decoder: Vec<(V, V)>,
}

/// Standard normal draws for one teacher-forced pass, held fixed so the
/// same noise can be replayed (for instance by a gradient check).
#[derive(Debug, Clone)]
pub struct TeacherNoise<F> {
    pub latent: Vec<Array2<F>>,
    pub displacement: Vec<Array2<F>>,
}

pub(crate) fn normal_matrix<F: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || F::of(rng.sample::<f64, _>(StandardNormal)))
}

impl<F: Real> TeacherNoise<F> {
    /// Draw order: per step, latent noise then displacement noise.
    pub fn draw<R: Rng + ?Sized>(
        batch: usize,
        latent_dim: usize,
        steps: usize,
        rng: &mut R,
    ) -> Self {
        let mut latent = Vec::with_capacity(steps);
        let mut displacement = Vec::with_capacity(steps);
        for _ in 0..steps {
            latent.push(normal_matrix(batch, latent_dim, rng));
            displacement.push(normal_matrix(batch, 2, rng));
        }
        Self {
            latent,
            displacement,
        }
    }

    pub fn zeros(batch: usize, latent_dim: usize, steps: usize) -> Self {
        Self {
            latent: vec![Array2::zeros((batch, latent_dim)); steps],
            displacement: vec![Array2::zeros((batch, 2)); steps],
        }
    }
}

fn head_widths(input: usize, hidden: usize) -> Vec<usize> {
    if hidden == 0 {
        vec![input]
    } else {
        vec![input, hidden]
    }
}

impl TrajectoryVae {
    /// Registers every parameter block in `store`, initialized from `rng`.
    pub fn new<F: Real, R: Rng + ?Sized>(
        config: ModelConfig,
        store: &mut ParamStore<F>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let (emb, hid, obs, lat) = (c.embed_dim, c.rnn_hidden, c.obs_hidden, c.latent_dim);
        let spec = LayerSpec::new;

        let self_net = Mlp::new(
            store,
            "encoder.self",
            &spec(&[SELF_DIM, emb, emb], true),
            rng,
        );
        let neighbor_net = Mlp::new(
            store,
            "encoder.neighbor",
            &spec(&[NEIGHBOR_DIM, emb, emb], true),
            rng,
        );
        let query_net = Mlp::new(
            store,
            "encoder.query",
            &spec(&[obs, c.attn_dim], false),
            rng,
        );
        let key_net = Mlp::new(
            store,
            "encoder.key",
            &spec(&[SOCIAL_DIM, emb, c.attn_dim], false),
            rng,
        );
        let init_net = Mlp::new(store, "encoder.init", &spec(&[2, emb, obs], false), rng);
        let obs_gru = GruCell::new(store, "encoder.gru", 2 * emb, obs, rng);
        let state_init = Linear::new(store, "state_init", obs, hid, rng);
        let step_embed = Mlp::new(store, "forward.embed", &spec(&[lat + 2, emb], true), rng);
        let forward_gru = GruCell::new(store, "forward.gru", emb, hid, rng);
        let future_self_net = Mlp::new(
            store,
            "backward.self",
            &spec(&[SELF_DIM, emb, emb], true),
            rng,
        );
        let future_neighbor_net = Mlp::new(
            store,
            "backward.neighbor",
            &spec(&[NEIGHBOR_DIM, emb, emb], true),
            rng,
        );
        let backward_gru = GruCell::new(store, "backward.gru", 2 * emb, hid, rng);
        let prior = GaussianHead::new(store, "prior", &head_widths(hid, c.head_hidden), lat, rng);
        let posterior = GaussianHead::new(
            store,
            "posterior",
            &head_widths(2 * hid, c.head_hidden),
            lat,
            rng,
        );
        let decoder = GaussianHead::new(
            store,
            "decoder",
            &head_widths(lat + hid, c.head_hidden),
            2,
            rng,
        );

        Ok(Self {
            config,
            self_net,
            neighbor_net,
            query_net,
            key_net,
            init_net,
            obs_gru,
            state_init,
            step_embed,
            forward_gru,
            future_self_net,
            future_neighbor_net,
            backward_gru,
            prior,
            posterior,
            decoder,
        })
    }

    fn social_term<F: Real, O: Ops<F>>(
        &self,
        ops: &mut O,
        frame: &FrameBatch<F>,
        query: &O::V,
        batch: usize,
    ) -> (O::V, Option<O::V>) {
        if frame.num_pairs() == 0 {
            return (ops.zeros(batch, self.config.embed_dim), None);
        }
        let states = ops.constant(frame.states.clone());
        let embedded = self.neighbor_net.forward(ops, &states);
        let social = ops.constant(frame.social.clone());
        let keys = self.key_net.forward(ops, &social);
        let q = self.query_net.forward(ops, query);
        let q = ops.gather(&q, &frame.segment);
        let score = ops.row_dot(&q, &keys);
        let score = ops.leaky_relu(&score, F::of(LEAKY_SLOPE));
        let weights = ops.segment_softmax(&score, &frame.segment, batch);
        let weighted = ops.scale_rows(&embedded, &weights);
        (
            ops.segment_sum(&weighted, &frame.segment, batch),
            Some(weights),
        )
    }

    /// Runs the observation encoder over frames `0..obs_len`.
    pub fn encode<F: Real, O: Ops<F>>(
        &self,
        ops: &mut O,
        batch: &Batch<F>,
    ) -> Result<Encoding<O::V>> {
        if batch.obs_len < 2 {
            return Err(Error::InvalidInput(format!(
                "observation needs at least 2 frames, got {}",
                batch.obs_len
            )));
        }
        let b = batch.size;
        let mut q = if batch.initial_segment.is_empty() {
            ops.zeros(b, self.config.obs_hidden)
        } else {
            let x = ops.constant(batch.initial_offsets.clone());
            let f = self.init_net.forward(ops, &x);
            ops.segment_sum(&f, &batch.initial_segment, b)
        };
        let mut q_states = vec![q.clone()];
        let mut attention = vec![None];
        for frame in &batch.frames[1..batch.obs_len] {
            let selfs = ops.constant(frame.self_states.clone());
            let own = self.self_net.forward(ops, &selfs);
            let (social, weights) = self.social_term(ops, frame, &q, b);
            let o = ops.concat(&[own, social]);
            q = self.obs_gru.step(ops, &o, &q);
            q_states.push(q.clone());
            attention.push(weights);
        }
        let h_init = self.state_init.forward(ops, &q);
        Ok(Encoding {
            q_states,
            h_init,
            attention,
        })
    }

    /// Backward recurrence over the ground-truth future, returned in
    /// forward order (first future step first).
    pub fn backward_states<F: Real, O: Ops<F>>(
        &self,
        ops: &mut O,
        batch: &Batch<F>,
    ) -> Result<Vec<O::V>> {
        if !batch.has_future() {
            return Err(Error::InvalidInput(
                "backward pass needs the ground-truth future".into(),
            ));
        }
        let b = batch.size;
        let mut state = ops.zeros(b, self.config.rnn_hidden);
        let mut out = Vec::with_capacity(batch.pred_len);
        for frame in batch.frames[batch.obs_len..].iter().rev() {
            let selfs = ops.constant(frame.self_states.clone());
            let own = self.future_self_net.forward(ops, &selfs);
            let social = if frame.num_pairs() == 0 {
                ops.zeros(b, self.config.embed_dim)
            } else {
                let states = ops.constant(frame.states.clone());
                let embedded = self.future_neighbor_net.forward(ops, &states);
                ops.segment_sum(&embedded, &frame.segment, b)
            };
            let o = ops.concat(&[own, social]);
            state = self.backward_gru.step(ops, &o, &state);
            out.push(state.clone());
        }
        out.reverse();
        Ok(out)
    }

    fn advance<F: Real, O: Ops<F>>(&self, ops: &mut O, z: &O::V, d: &O::V, h: &O::V) -> O::V {
        let zd = ops.concat(&[z.clone(), d.clone()]);
        let e = self.step_embed.forward(ops, &zd);
        self.forward_gru.step(ops, &e, h)
    }

    /// Teacher-forced pass with latents from the posterior, each latent and
    /// displacement drawn once. The loss is averaged over steps and batch.
    pub fn teacher_forward<F: Real, O: Ops<F>>(
        &self,
        ops: &mut O,
        batch: &Batch<F>,
        noise: &TeacherNoise<F>,
    ) -> Result<LossTerms<O::V>> {
        let targets = batch
            .targets
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("training needs the ground-truth future".into()))?;
        let steps = batch.pred_len;
        if noise.latent.len() != steps || noise.displacement.len() != steps {
            return Err(Error::Shape(
                "noise does not cover every prediction step".into(),
            ));
        }
        let encoding = self.encode(ops, batch)?;
        let backward = self.backward_states(ops, batch)?;

        let mut h = encoding.h_init;
        let mut cum: Option<O::V> = None;
        let mut recon_acc: Option<O::V> = None;
        let mut kl_acc: Option<O::V> = None;
        let mut kl_steps = Vec::with_capacity(steps);
        let mut dists = Vec::with_capacity(steps);
        for s in 0..steps {
            let (pm, plv) = self.prior.forward(ops, &h);
            let bh = ops.concat(&[backward[s].clone(), h.clone()]);
            let (qm, qlv) = self.posterior.forward(ops, &bh);
            let ez = ops.constant(noise.latent[s].clone());
            let z = reparam_sample(ops, &qm, &qlv, &ez);
            let zh = ops.concat(&[z.clone(), h.clone()]);
            let (dm, dlv) = self.decoder.forward(ops, &zh);
            let ed = ops.constant(noise.displacement[s].clone());
            let d = reparam_sample(ops, &dm, &dlv, &ed);

            let offset = match cum {
                None => d.clone(),
                Some(c) => ops.add(&c, &d),
            };
            let target = ops.constant(targets[s].clone());
            let err = ops.sub(&target, &offset);
            let err = ops.square(&err);
            let recon = ops.row_sum(&err);
            cum = Some(offset);

            let kl = match self.config.kl_mode {
                KlMode::ClosedForm => kl_rows(ops, &qm, &qlv, &pm, &plv),
                KlMode::Sampled => {
                    let lq = log_density_rows(ops, &qm, &qlv, &z);
                    let lp = log_density_rows(ops, &pm, &plv, &z);
                    ops.sub(&lq, &lp)
                }
            };
            recon_acc = Some(match recon_acc {
                None => recon,
                Some(a) => ops.add(&a, &recon),
            });
            kl_acc = Some(match kl_acc {
                None => kl.clone(),
                Some(a) => ops.add(&a, &kl),
            });
            kl_steps.push(kl);
            dists.push(StepDistributions {
                prior_mean: pm,
                prior_log_var: plv,
                posterior_mean: qm,
                posterior_log_var: qlv,
            });
            h = self.advance(ops, &z, &d, &h);
        }

        let norm = F::of(1.0 / (steps * batch.size) as f64);
        let recon = ops.sum_all(recon_acc.as_ref().expect("at least one step"));
        let recon = ops.scale(&recon, norm);
        let kl = ops.sum_all(kl_acc.as_ref().expect("at least one step"));
        let kl = ops.scale(&kl, norm);
        let total = ops.add(&recon, &kl);
        Ok(LossTerms {
            total,
            recon,
            kl,
            kl_steps,
            steps: dists,
        })
    }

    /// Generative rollout from the prior. Rows of `h_init` are independent
    /// trajectories; noise is drawn per step, latent before displacement.
    pub fn generate<F: Real, O: Ops<F>, R: Rng + ?Sized>(
        &self,
        ops: &mut O,
        h_init: &O::V,
        steps: usize,
        rng: &mut R,
    ) -> Result<Generated<O::V>> {
        let n = ops.rows(h_init);
        let mut h = h_init.clone();
        let mut out = Generated {
            latents: Vec::with_capacity(steps),
            displacements: Vec::with_capacity(steps),
            decoder: Vec::with_capacity(steps),
        };
        for s in 0..steps {
            let (pm, plv) = self.prior.forward(ops, &h);
            let ez = ops.constant(normal_matrix(n, self.config.latent_dim, rng));
            let z = reparam_sample(ops, &pm, &plv, &ez);
            let zh = ops.concat(&[z.clone(), h.clone()]);
            let (dm, dlv) = self.decoder.forward(ops, &zh);
            let d = match self.config.decode_mode {
                DecodeMode::Sample => {
                    let ed = ops.constant(normal_matrix(n, 2, rng));
                    reparam_sample(ops, &dm, &dlv, &ed)
                }
                DecodeMode::Mean => dm.clone(),
            };
            h = self.advance(ops, &z, &d, &h);
            if ops.value(&h).iter().any(|v| !v.is_finite()) {
                return Err(Error::Runtime(format!(
                    "non-finite recurrent state at prediction step {}",
                    s + 1
                )));
            }
            out.latents.push(z);
            out.displacements.push(d);
            out.decoder.push((dm, dlv));
        }
        Ok(out)
    }

    /// Total, reconstruction and KL loss with parameter gradients for one batch.
    pub fn loss_and_gradients<F: Real>(
        &self,
        store: &ParamStore<F>,
        batch: &Batch<F>,
        noise: &TeacherNoise<F>,
    ) -> Result<LossGradients<F>> {
        let mut g = Graph::new(store);
        let terms = self.teacher_forward(&mut g, batch, noise)?;
        let total = g.value(&terms.total)[[0, 0]].as_f64();
        if !total.is_finite() {
            return Err(Error::Training(format!("non-finite loss {total}")));
        }
        let recon = g.value(&terms.recon)[[0, 0]].as_f64();
        let kl = g.value(&terms.kl)[[0, 0]].as_f64();
        let grads = g.backward(terms.total)?;
        Ok((total, recon, kl, grads))
    }
}

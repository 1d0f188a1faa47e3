//! The timewise variational trajectory model: an attention-based observation
//! encoder, a forward generative recurrence with a conditional prior over a
//! per-step latent, a backward posterior recurrence over the future, and a
//! Gaussian displacement decoder.

mod api;
mod features;
mod network;

pub use api::{
    accumulate_positions, backward_pass, encode_observation, repeat_index, rollout, rollout_batch,
    rollout_rows, training_loss, EncodedObservation, LossOutput, RolloutSample,
};
pub use features::{Batch, FrameBatch, NeighborFeatures, WindowFeatures};
pub use network::{Encoding, Generated, LossTerms, StepDistributions, TeacherNoise, TrajectoryVae};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::DEFAULT_MPD_HORIZON;

/// How the KL term of the training loss is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KlMode {
    #[default]
    ClosedForm,
    /// One-sample estimate `log q(z) - log p(z)` at the drawn latent.
    Sampled,
}

/// Displacements at generation time: drawn from the decoder or its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DecodeMode {
    #[default]
    Sample,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub obs_hidden: usize,
    pub rnn_hidden: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    /// Hidden width of the prior, posterior and decoder heads; 0 makes
    /// each head a single affine layer.
    pub head_hidden: usize,
    pub mpd_horizon: f64,
    pub kl_mode: KlMode,
    pub decode_mode: DecodeMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            obs_hidden: 256,
            rnn_hidden: 256,
            embed_dim: 64,
            attn_dim: 32,
            head_hidden: 128,
            mpd_horizon: DEFAULT_MPD_HORIZON,
            kl_mode: KlMode::ClosedForm,
            decode_mode: DecodeMode::Sample,
        }
    }
}

impl ModelConfig {
    /// All widths set to `width`, for tests and quick experiments.
    pub fn uniform(width: usize) -> Self {
        Self {
            latent_dim: width,
            obs_hidden: width,
            rnn_hidden: width,
            embed_dim: width,
            attn_dim: width,
            head_hidden: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("latent_dim", self.latent_dim),
            ("obs_hidden", self.obs_hidden),
            ("rnn_hidden", self.rnn_hidden),
            ("embed_dim", self.embed_dim),
            ("attn_dim", self.attn_dim),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if !(self.mpd_horizon.is_finite() && self.mpd_horizon >= 0.0) {
            return Err(Error::InvalidInput(
                "mpd_horizon must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

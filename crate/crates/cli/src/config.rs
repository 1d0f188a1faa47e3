//! Flat `key = value` run configuration with command-line overrides.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;
use tvae_core::data::{AugmentationConfig, ParseOptions, WindowSpec, DEFAULT_RADIUS};
use tvae_core::diff::AdamConfig;
use tvae_core::fpc::{KMeansConfig, DEFAULT_K, MAX_SAMPLING_RATE};
use tvae_core::metrics::{BestOfMode, VelocityMode};
use tvae_core::model::{DecodeMode, KlMode, ModelConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Field delimiter of trajectory text files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Whitespace,
    Comma,
    Tab,
}

/// Which window list evaluation-style commands read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Test,
}

trait ConfigValue: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f64, usize, u64, bool);

impl ConfigValue for String {
    fn parse(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(",")
    }
}

macro_rules! enum_value {
    ($t:ty { $($name:literal => $v:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($v),)*
                    _ => Err(format!("expected one of {}", [$($name),*].join(", "))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $v { return $name.to_string(); })*
                unreachable!()
            }
        }
    };
}

enum_value!(Delimiter { "whitespace" => Delimiter::Whitespace, "comma" => Delimiter::Comma, "tab" => Delimiter::Tab });
enum_value!(EvalSplit { "train" => EvalSplit::Train, "test" => EvalSplit::Test });
enum_value!(KlMode { "closed_form" => KlMode::ClosedForm, "sampled" => KlMode::Sampled });
enum_value!(DecodeMode { "sample" => DecodeMode::Sample, "mean" => DecodeMode::Mean });
enum_value!(BestOfMode { "independent" => BestOfMode::Independent, "joint" => BestOfMode::Joint });
enum_value!(VelocityMode { "mean" => VelocityMode::Mean, "last" => VelocityMode::Last });

macro_rules! run_config {
    ($($field:ident : $ty:ty = $default:expr, $doc:literal;)*) => {
        /// Every setting of a run. Keys in config files are the field names.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// `(key, description)` for every setting.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$((stringify!($field), $doc),)*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($field) => {
                        self.$field = ConfigValue::parse(value).map_err(|msg| ConfigError::Value {
                            key: key.to_string(),
                            msg,
                        })?;
                    })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// Canonical text form; parsing it gives back an equal config.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(let _ = writeln!(out, "{} = {}", stringify!($field), ConfigValue::render(&self.$field));)*
                out
            }
        }
    };
}

run_config! {
    train_paths: Vec<String> = Vec::new(), "Trajectory files or directories for training, comma separated";
    test_paths: Vec<String> = Vec::new(), "Trajectory files or directories for evaluation, comma separated";
    data_dir: String = String::new(), "Root with one folder per held-out scene, each holding train/ and test/";
    test_scene: String = String::new(), "Held-out scene under data_dir; fills empty train_paths/test_paths";
    delimiter: Delimiter = Delimiter::Whitespace, "Field delimiter: whitespace, comma or tab";
    columns: Vec<usize> = vec![0, 1, 2, 3], "Column indices of frame, agent, x, y";
    unit_scale: f64 = 1.0, "Multiplier from file units to working units";
    frame_dt: f64 = 0.4, "Seconds between consecutive frames";
    synthetic: bool = false, "Use a generated scene instead of files";
    synthetic_agents: usize = 40, "Agents in the generated scene";
    synthetic_frames: usize = 200, "Frames in the generated scene";
    synthetic_seed: u64 = 0, "Seed of the generated scene";
    synthetic_train_fraction: f64 = 0.5, "Share of generated frames whose windows are used for training";
    window_cache: String = String::new(), "Window cache file; built on first use and reused while the data settings match (empty disables)";
    eval_split: EvalSplit = EvalSplit::Test, "Windows scored by eval, predict, fpc-sweep and baseline: train or test";
    max_train_windows: usize = 0, "Keep only the first N training windows (0 keeps all)";
    max_test_windows: usize = 0, "Keep only the first N evaluation windows (0 keeps all)";
    obs_len: usize = 8, "Observed frames per window";
    pred_len: usize = 12, "Predicted frames per window";
    stride: usize = 1, "Frame step between consecutive windows of an agent";
    radius: f64 = DEFAULT_RADIUS, "Neighborhood radius in working units";
    latent_dim: usize = 32, "Latent dimension";
    obs_hidden: usize = 256, "Observation encoder state width";
    rnn_hidden: usize = 256, "Forward and backward recurrence state width";
    embed_dim: usize = 64, "Feature embedding width";
    attn_dim: usize = 32, "Attention projection width";
    head_hidden: usize = 128, "Hidden width of the prior, posterior and decoder heads (0 for affine heads)";
    mpd_horizon: f64 = 7.0, "Horizon of the minimal predicted distance feature, seconds";
    kl_mode: KlMode = KlMode::ClosedForm, "KL term: closed_form or sampled";
    decode_mode: DecodeMode = DecodeMode::Sample, "Displacements at inference: sample or mean";
    learning_rate: f64 = 3e-4, "Adam step size";
    beta1: f64 = 0.9, "Adam first-moment decay";
    beta2: f64 = 0.999, "Adam second-moment decay";
    adam_eps: f64 = 1e-8, "Adam denominator offset";
    batch_size: usize = 128, "Windows per training step";
    steps: u64 = 20000, "Total training steps";
    checkpoint_every: u64 = 1000, "Steps between checkpoints (0 saves only at the end)";
    augment_flip: bool = true, "Random axis flips during training";
    augment_rotate: bool = true, "Random rotations during training";
    k: usize = DEFAULT_K, "Predictions per window for best-of-K";
    fpc_rate: usize = MAX_SAMPLING_RATE, "Oversampling multiplier for final position clustering";
    kmeans_seed: u64 = 0, "Seed of the clustering initialization";
    nll_samples: usize = 2000, "Samples per window for the density estimate";
    eval_nll: bool = true, "Compute the density-based NLL during evaluation";
    best_of: BestOfMode = BestOfMode::Independent, "Best-of-K selection: independent or joint";
    baseline_velocity: VelocityMode = VelocityMode::Mean, "Linear baseline velocity: mean or last";
    heatmap_bins: usize = 128, "Heatmap grid cells per side";
    heatmap_padding: f64 = 0.1, "Heatmap bounding-box padding as a fraction of its extent";
    heatmap_samples: usize = 2000, "Samples drawn per window for heatmaps";
    sweep_rates: Vec<usize> = vec![1, 2, 5, 10, 20, 30, 40, 50], "Sampling rates evaluated by fpc-sweep";
    latent_samples: usize = 150, "Prior samples per synthetic observation in latent-dump";
    latent_speeds: Vec<f64> = vec![0.6, 0.7, 0.8], "Per-frame speeds of the synthetic observations";
    latent_turns: Vec<f64> = vec![-30.0, -15.0, 0.0, 15.0, 30.0], "Heading changes in degrees of the synthetic observations";
    latent_turn_frame: usize = 5, "Observed frame (1-based) at which the heading changes";
    seed: u64 = 0, "Seed for initialization, batching, augmentation and sampling";
    threads: usize = 1, "Worker threads for evaluation and export";
    out_dir: String = "out".to_string(), "Output directory";
}

impl RunConfig {
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Value {
                key: o.to_string(),
                msg: "override must look like key=value".into(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.columns.len() != 4 {
            return bad("columns needs exactly four indices");
        }
        if self.obs_len < 2 || self.pred_len == 0 {
            return bad("obs_len must be at least 2 and pred_len at least 1");
        }
        if self.stride == 0 || self.batch_size == 0 || self.k == 0 {
            return bad("stride, batch_size and k must be positive");
        }
        if self.fpc_rate > MAX_SAMPLING_RATE
            || self.sweep_rates.iter().any(|&r| r > MAX_SAMPLING_RATE)
        {
            return bad("sampling rates are capped at 50");
        }
        if !(self.frame_dt > 0.0 && self.unit_scale > 0.0 && self.radius > 0.0) {
            return bad("frame_dt, unit_scale and radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.heatmap_padding) || self.heatmap_bins == 0 {
            return bad("heatmap_padding must be in [0, 1] and heatmap_bins positive");
        }
        if self.latent_turn_frame == 0 || self.latent_turn_frame > self.obs_len {
            return bad("latent_turn_frame must lie within the observation");
        }
        self.model_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            latent_dim: self.latent_dim,
            obs_hidden: self.obs_hidden,
            rnn_hidden: self.rnn_hidden,
            embed_dim: self.embed_dim,
            attn_dim: self.attn_dim,
            head_hidden: self.head_hidden,
            mpd_horizon: self.mpd_horizon,
            kl_mode: self.kl_mode,
            decode_mode: self.decode_mode,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            step_size: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            obs_len: self.obs_len,
            pred_len: self.pred_len,
            stride: self.stride,
            radius: self.radius,
        }
    }

    pub fn parse_options(&self) -> ParseOptions {
        let mut columns = [0usize; 4];
        columns.copy_from_slice(&self.columns[..4]);
        ParseOptions {
            columns,
            delimiter: match self.delimiter {
                Delimiter::Whitespace => None,
                Delimiter::Comma => Some(','),
                Delimiter::Tab => Some('\t'),
            },
            unit_scale: self.unit_scale,
            frame_dt: self.frame_dt,
        }
    }

    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig {
            enable_flip: self.augment_flip,
            enable_rotation: self.augment_rotate,
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            seed: self.kmeans_seed,
            ..KMeansConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_evaluation_protocol() {
        let c = RunConfig::default();
        assert_eq!((c.obs_len, c.pred_len, c.latent_dim, c.k), (8, 12, 32, 20));
        assert_eq!((c.fpc_rate, c.nll_samples, c.mpd_horizon), (50, 2000, 7.0));
        assert_eq!(
            (c.batch_size, c.heatmap_bins, c.latent_samples),
            (128, 128, 150)
        );
        c.validate().unwrap();
    }

    #[test]
    fn every_key_is_documented_and_settable() {
        let c = RunConfig::default();
        let text = c.to_text();
        assert_eq!(text.lines().count(), RunConfig::KEYS.len());
        assert!(RunConfig::KEYS.iter().all(|(_, doc)| !doc.is_empty()));
        assert_eq!(RunConfig::parse_text(&text).unwrap(), c);
    }

    #[test]
    fn text_round_trips_non_defaults() {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "train_paths=a.txt, b/dir",
            "learning_rate=0.00123",
            "kl_mode=sampled",
            "delimiter=comma",
            "latent_turns=-10.5,3",
            "synthetic=true",
        ])
        .unwrap();
        assert_eq!(c.train_paths, vec!["a.txt", "b/dir"]);
        let again = RunConfig::parse_text(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(
            RunConfig::parse_text("no_such_key = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse_text("steps = many"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            RunConfig::parse_text("# comment\n\njust text"),
            Err(ConfigError::Syntax { line: 3 })
        ));
        assert!(RunConfig::parse_text("kl_mode = fancy").is_err());
    }

    #[test]
    fn validation_catches_inconsistent_settings() {
        let c = RunConfig {
            fpc_rate: 51,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            columns: vec![0, 1],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            obs_len: 1,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}

//! Model checkpoints: config snapshot, parameter blocks, optimizer moments
//! and the step counter, stored in the record container.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvae_core::diff::{Adam, ParamStore};
use tvae_core::model::TrajectoryVae;

use crate::config::RunConfig;
use crate::container::{self, Payload, Record};

const CONFIG: &str = "config";
const STEP: &str = "step";
const ADAM_STEP: &str = "adam.step";
const PARAM: &str = "param/";
const FIRST: &str = "adam.m/";
const SECOND: &str = "adam.v/";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: u64,
    pub model: TrajectoryVae,
    pub params: ParamStore<f32>,
    pub optimizer: Option<Adam<f32>>,
}

fn matrix_record(name: String, a: &Array2<f32>) -> Record {
    Record {
        name,
        dims: vec![a.nrows() as u64, a.ncols() as u64],
        payload: Payload::F32(a.iter().copied().collect()),
    }
}

impl Checkpoint {
    /// A freshly initialized model for `config`.
    pub fn init(config: RunConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = TrajectoryVae::new(config.model_config(), &mut params, &mut rng)?;
        let optimizer = Some(Adam::new(config.adam_config(), &params));
        Ok(Self {
            config,
            step: 0,
            model,
            params,
            optimizer,
        })
    }

    pub fn to_records(&self) -> Vec<Record> {
        let mut out = vec![
            Record::bytes(CONFIG, self.config.to_text().into_bytes()),
            Record::u64(STEP, self.step),
        ];
        for b in self.params.blocks() {
            out.push(matrix_record(format!("{PARAM}{}", b.name), &b.values));
        }
        if let Some(adam) = &self.optimizer {
            out.push(Record::u64(ADAM_STEP, adam.step));
            for (b, m) in self.params.blocks().iter().zip(&adam.first) {
                out.push(matrix_record(format!("{FIRST}{}", b.name), m));
            }
            for (b, v) in self.params.blocks().iter().zip(&adam.second) {
                out.push(matrix_record(format!("{SECOND}{}", b.name), v));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(container::to_bytes(&self.to_records())?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = container::read_records(&mut &bytes[..])?;
        let find = |name: &str| records.iter().find(|r| r.name == name);
        let config_text = find(CONFIG)
            .ok_or_else(|| anyhow!("checkpoint has no config record"))?
            .as_bytes()?;
        let config = RunConfig::parse_text(std::str::from_utf8(config_text)?)
            .context("checkpoint config snapshot")?;
        let step = find(STEP)
            .ok_or_else(|| anyhow!("checkpoint has no step record"))?
            .as_u64()?;

        let mut ck = Self::init(config)?;
        ck.step = step;

        let load = |rec: &Record, shape: (usize, usize)| -> Result<Array2<f32>> {
            let Payload::F32(values) = &rec.payload else {
                bail!("record `{}` is not f32", rec.name);
            };
            if rec.dims != [shape.0 as u64, shape.1 as u64] {
                bail!(
                    "record `{}` has shape {:?}, model expects {:?}",
                    rec.name,
                    rec.dims,
                    [shape.0, shape.1]
                );
            }
            Ok(Array2::from_shape_vec(shape, values.clone())?)
        };

        let mut known = vec![CONFIG.to_string(), STEP.to_string()];
        let names: Vec<String> = ck.params.blocks().iter().map(|b| b.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            let key = format!("{PARAM}{name}");
            let rec = find(&key).ok_or_else(|| anyhow!("checkpoint is missing `{key}`"))?;
            let shape = ck.params.blocks()[i].values.dim();
            ck.params.blocks_mut()[i].values = load(rec, shape)?;
            known.push(key);
        }

        ck.optimizer = match find(ADAM_STEP) {
            None => None,
            Some(rec) => {
                let mut adam = Adam::new(ck.config.adam_config(), &ck.params);
                adam.step = rec.as_u64()?;
                known.push(ADAM_STEP.to_string());
                for (i, name) in names.iter().enumerate() {
                    let shape = ck.params.blocks()[i].values.dim();
                    for (prefix, slot) in
                        [(FIRST, &mut adam.first[i]), (SECOND, &mut adam.second[i])]
                    {
                        let key = format!("{prefix}{name}");
                        let rec =
                            find(&key).ok_or_else(|| anyhow!("checkpoint is missing `{key}`"))?;
                        *slot = load(rec, shape)?;
                        known.push(key);
                    }
                }
                Some(adam)
            }
        };
        if let Some(extra) = records.iter().find(|r| !known.contains(&r.name)) {
            bail!("checkpoint has unexpected record `{}`", extra.name);
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
    }
}

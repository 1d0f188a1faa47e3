use ndarray::Array2;
use rand::Rng;

use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named, learnable matrix and its accumulated gradient. Vectors (biases)
/// are stored as a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<F> {
    pub name: String,
    pub values: Array2<F>,
    pub gradient: Array2<F>,
}

impl<F: Real> ParamBlock<F> {
    pub fn shape(&self) -> Vec<usize> {
        self.values.shape().to_vec()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    blocks: Vec<ParamBlock<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self { blocks: Vec::new() }
    }

    /// Registers a block initialized uniformly in `[-bound, bound]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let values = Array2::from_shape_simple_fn((rows, cols), || {
            F::of(if bound > 0.0 {
                rng.gen_range(-bound..=bound)
            } else {
                0.0
            })
        });
        self.add(name, values)
    }

    pub fn add(&mut self, name: impl Into<String>, values: Array2<F>) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter block {name}"
        );
        let gradient = Array2::zeros(values.dim());
        self.blocks.push(ParamBlock {
            name,
            values,
            gradient,
        });
        ParamId(self.blocks.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.blocks.iter().position(|b| b.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &ParamBlock<F> {
        &self.blocks[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamBlock<F> {
        &mut self.blocks[id.0]
    }

    pub fn values(&self, id: ParamId) -> &Array2<F> {
        &self.blocks[id.0].values
    }

    pub fn blocks(&self) -> &[ParamBlock<F>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock<F>] {
        &mut self.blocks
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.gradient.fill(F::zero());
        }
    }

    /// Adds `scale * grad` into the gradient of each listed block.
    pub fn accumulate(&mut self, grads: &[(ParamId, Array2<F>)], scale: F) {
        for (id, g) in grads {
            self.blocks[id.0].gradient.scaled_add(scale, g);
        }
    }

    /// Replaces the values of a block; the shape must match.
    pub fn set_values(&mut self, name: &str, values: Array2<F>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter block {name}")))?;
        let block = &mut self.blocks[id.0];
        if block.values.dim() != values.dim() {
            return Err(Error::Shape(format!(
                "block {name}: expected {:?}, got {:?}",
                block.values.dim(),
                values.dim()
            )));
        }
        block.values = values;
        Ok(())
    }

    /// Same blocks converted to another element type.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    values: b.values.mapv(|v| G::of(v.as_f64())),
                    gradient: b.gradient.mapv(|v| G::of(v.as_f64())),
                })
                .collect(),
        }
    }
}

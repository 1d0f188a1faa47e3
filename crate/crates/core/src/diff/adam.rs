use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every block of a store, in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub first: Vec<Array2<F>>,
    pub second: Vec<Array2<F>>,
    pub step: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, store: &ParamStore<F>) -> Self {
        let zeros = || {
            store
                .blocks()
                .iter()
                .map(|b| Array2::zeros(b.values.dim()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    /// One bias-corrected step using the accumulated gradients, which are
    /// zeroed afterwards. Fails without touching anything if any gradient
    /// is non-finite.
    pub fn update(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        if let Some(bad) = store
            .blocks()
            .iter()
            .find(|b| b.gradient.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::Training(format!(
                "non-finite gradient in block {}",
                bad.name
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let corr1 = F::of(1.0 - c.beta1.powi(t));
        let corr2 = F::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (F::of(c.step_size), F::of(c.eps));

        for ((block, m), v) in store
            .blocks_mut()
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(&mut block.values)
                .and(&mut block.gradient)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + one_b1 * *g;
                    *v = b2 * *v + one_b2 * *g * *g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    *g = F::zero();
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", array![[1.0, -2.0]]);
        let before = store.clone();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.update(&mut store).unwrap();
        assert_eq!(store.blocks()[0].values, before.blocks()[0].values);
    }

    #[test]
    fn first_step_moves_by_step_size() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", array![[0.5]]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.get_mut(id).gradient.fill(1.0);
        adam.update(&mut store).unwrap();
        let moved = store.values(id)[[0, 0]] - 0.5;
        assert!((moved + 3e-4).abs() < 1e-10);
        assert_eq!(store.get(id).gradient[[0, 0]], 0.0);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut store = ParamStore::<f64>::new();
        store.add("ok", array![[0.0]]);
        let id = store.add("broken", array![[0.0]]);
        store.get_mut(id).gradient.fill(f64::NAN);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let err = adam.update(&mut store).unwrap_err();
        assert!(err.to_string().contains("broken"));
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", array![[3.0, -2.0, 0.5]]);
        let target = array![[1.0, 0.25, -0.75]];
        let cfg = AdamConfig {
            step_size: 0.05,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &store);
        for _ in 0..2000 {
            let g = (store.values(id) - &target) * 2.0;
            store.get_mut(id).gradient.assign(&g);
            adam.update(&mut store).unwrap();
        }
        let err = (store.values(id) - &target)
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(err < 1e-4, "err {err}");
    }
}

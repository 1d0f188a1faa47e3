//! Diagonal Gaussians: reparameterized sampling, log-density and KL, both
//! on plain vectors and as differentiable ops on batches.

use ndarray::Array2;

use super::ops::Ops;
use super::real::Real;

pub const LOG_VAR_MIN: f64 = -8.0;
pub const LOG_VAR_MAX: f64 = 4.0;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagGaussian {
    /// Log-variances are clamped into `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_var.len(), "mean and log_var lengths differ");
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        Self { mean, log_var }
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `mean + exp(log_var / 2) * noise`.
pub fn gaussian_sample(dist: &DiagGaussian, noise: &[f64]) -> Vec<f64> {
    assert_eq!(noise.len(), dist.dim(), "noise length");
    dist.mean
        .iter()
        .zip(&dist.log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

pub fn gaussian_log_density(dist: &DiagGaussian, point: &[f64]) -> f64 {
    assert_eq!(point.len(), dist.dim(), "point length");
    dist.mean
        .iter()
        .zip(&dist.log_var)
        .zip(point)
        .map(|((m, lv), x)| -0.5 * (LN_2PI + lv + (x - m).powi(2) * (-lv).exp()))
        .sum()
}

/// Closed-form `KL(q || p)`.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL between different dimensions");
    q.mean
        .iter()
        .zip(&q.log_var)
        .zip(p.mean.iter().zip(&p.log_var))
        .map(|((mq, lq), (mp, lp))| {
            0.5 * (lp - lq + ((lq - lp).exp() + (mq - mp).powi(2) * (-lp).exp()) - 1.0)
        })
        .sum()
}

/// Batched reparameterized sample; `noise` is a constant of the same shape.
pub fn reparam_sample<F: Real, O: Ops<F>>(
    ops: &mut O,
    mean: &O::V,
    log_var: &O::V,
    noise: &O::V,
) -> O::V {
    let half = ops.scale(log_var, F::of(0.5));
    let std = ops.exp(&half);
    let spread = ops.mul(&std, noise);
    ops.add(mean, &spread)
}

/// Row-wise closed-form KL, `[n, 1]`.
pub fn kl_rows<F: Real, O: Ops<F>>(
    ops: &mut O,
    q_mean: &O::V,
    q_log_var: &O::V,
    p_mean: &O::V,
    p_log_var: &O::V,
) -> O::V {
    let (rows, dim) = (ops.rows(q_mean), ops.cols(q_mean));
    let lv_gap = ops.sub(p_log_var, q_log_var);
    let neg_gap = ops.scale(&lv_gap, -F::one());
    let ratio = ops.exp(&neg_gap);
    let dm = ops.sub(q_mean, p_mean);
    let dm2 = ops.square(&dm);
    let neg_lp = ops.scale(p_log_var, -F::one());
    let inv_p = ops.exp(&neg_lp);
    let maha = ops.mul(&dm2, &inv_p);
    let t = ops.add(&lv_gap, &ratio);
    let t = ops.add(&t, &maha);
    let s = ops.row_sum(&t);
    let offset = ops.constant(Array2::from_elem((rows, 1), F::of(dim as f64)));
    let s = ops.sub(&s, &offset);
    ops.scale(&s, F::of(0.5))
}

/// Row-wise log-density of `x`, `[n, 1]`.
pub fn log_density_rows<F: Real, O: Ops<F>>(
    ops: &mut O,
    mean: &O::V,
    log_var: &O::V,
    x: &O::V,
) -> O::V {
    let (rows, dim) = (ops.rows(mean), ops.cols(mean));
    let d = ops.sub(x, mean);
    let d2 = ops.square(&d);
    let neg_lv = ops.scale(log_var, -F::one());
    let prec = ops.exp(&neg_lv);
    let maha = ops.mul(&d2, &prec);
    let t = ops.add(log_var, &maha);
    let s = ops.row_sum(&t);
    let offset = ops.constant(Array2::from_elem((rows, 1), F::of(dim as f64 * LN_2PI)));
    let s = ops.add(&s, &offset);
    ops.scale(&s, F::of(-0.5))
}

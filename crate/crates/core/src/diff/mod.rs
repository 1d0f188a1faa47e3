//! Differentiable building blocks: a batched reverse-mode tape, an eager
//! evaluator sharing the same kernels, layers, Gaussian heads and Adam.

pub mod adam;
pub mod check;
pub mod eager;
pub mod gaussian;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod ops;
pub mod params;
pub mod real;

pub use adam::{Adam, AdamConfig};
pub use eager::{Eager, Val};
pub use gaussian::{
    gaussian_log_density, gaussian_sample, kl_diag_gaussians, kl_rows, log_density_rows,
    reparam_sample, DiagGaussian, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub use graph::{Graph, Var};
pub use layers::{GaussianHead, GruCell, LayerSpec, Linear, Mlp, LEAKY_SLOPE};
pub use ops::{Index, Ops};
pub use params::{ParamBlock, ParamId, ParamStore};
pub use real::{DType, Real};

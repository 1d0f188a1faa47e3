use std::sync::Arc;

use ndarray::Array2;

use super::params::ParamId;
use super::real::Real;

/// Row indices shared between a forward op and its backward rule.
pub type Index = Arc<[usize]>;

/// The operation set the model is written against. [`super::Graph`] records
/// a tape for reverse-mode gradients; [`super::Eager`] only evaluates.
pub trait Ops<F: Real> {
    type V: Clone;

    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Array2<F>;

    fn param(&mut self, id: ParamId) -> Self::V;
    fn constant(&mut self, a: Array2<F>) -> Self::V;

    fn zeros(&mut self, rows: usize, cols: usize) -> Self::V {
        self.constant(Array2::zeros((rows, cols)))
    }

    /// `[n, k] x [k, m] -> [n, m]`
    fn matmul(&mut self, a: &Self::V, w: &Self::V) -> Self::V;
    /// Adds a `[1, m]` row to every row of `[n, m]`.
    fn add_row(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, k: F) -> Self::V;
    fn leaky_relu(&mut self, a: &Self::V, slope: F) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn exp(&mut self, a: &Self::V) -> Self::V;
    fn square(&mut self, a: &Self::V) -> Self::V;
    /// Elementwise clamp; the gradient is zero outside `(lo, hi)`.
    fn clamp(&mut self, a: &Self::V, lo: F, hi: F) -> Self::V;
    fn concat(&mut self, parts: &[Self::V]) -> Self::V;
    fn slice(&mut self, a: &Self::V, start: usize, end: usize) -> Self::V;
    fn gather(&mut self, a: &Self::V, idx: &Index) -> Self::V;
    /// Per-row inner product, `[n, m] . [n, m] -> [n, 1]`.
    fn row_dot(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    /// Multiplies each row of `[n, m]` by the matching entry of `[n, 1]`.
    fn scale_rows(&mut self, a: &Self::V, w: &Self::V) -> Self::V;
    fn segment_sum(&mut self, a: &Self::V, seg: &Index, nseg: usize) -> Self::V;
    fn segment_softmax(&mut self, a: &Self::V, seg: &Index, nseg: usize) -> Self::V;
    fn row_sum(&mut self, a: &Self::V) -> Self::V;
    fn sum_all(&mut self, a: &Self::V) -> Self::V;

    fn rows(&self, v: &Self::V) -> usize {
        self.value(v).nrows()
    }

    fn cols(&self, v: &Self::V) -> usize {
        self.value(v).ncols()
    }
}

use std::ops::Deref;
use std::rc::Rc;

use ndarray::Array2;

use super::kernels as k;
use super::ops::{Index, Ops};
use super::params::{ParamId, ParamStore};
use super::real::Real;

/// Value handle of the eager evaluator: borrowed parameters or shared
/// intermediate results.
#[derive(Debug, Clone)]
pub enum Val<'p, F> {
    Param(&'p Array2<F>),
    Owned(Rc<Array2<F>>),
}

impl<F> Deref for Val<'_, F> {
    type Target = Array2<F>;

    fn deref(&self) -> &Array2<F> {
        match self {
            Val::Param(a) => a,
            Val::Owned(a) => a,
        }
    }
}

/// Forward-only evaluation; nothing is recorded.
pub struct Eager<'p, F> {
    store: &'p ParamStore<F>,
}

impl<'p, F: Real> Eager<'p, F> {
    pub fn new(store: &'p ParamStore<F>) -> Self {
        Self { store }
    }
}

fn own<'p, F>(a: Array2<F>) -> Val<'p, F> {
    Val::Owned(Rc::new(a))
}

impl<'p, F: Real> Ops<F> for Eager<'p, F> {
    type V = Val<'p, F>;

    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Array2<F> {
        v
    }

    fn param(&mut self, id: ParamId) -> Self::V {
        Val::Param(self.store.values(id))
    }

    fn constant(&mut self, a: Array2<F>) -> Self::V {
        own(a)
    }

    fn matmul(&mut self, a: &Self::V, w: &Self::V) -> Self::V {
        own(k::matmul(a.view(), w.view()))
    }

    fn add_row(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        own(k::add_row(a.view(), b.view()))
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        own(k::zip_with(a.view(), b.view(), |x, y| x + y))
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        own(k::zip_with(a.view(), b.view(), |x, y| x - y))
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        own(k::zip_with(a.view(), b.view(), |x, y| x * y))
    }

    fn scale(&mut self, a: &Self::V, c: F) -> Self::V {
        own(k::map(a.view(), |x| x * c))
    }

    fn leaky_relu(&mut self, a: &Self::V, slope: F) -> Self::V {
        own(k::map(a.view(), |x| k::leaky_relu(x, slope)))
    }

    fn sigmoid(&mut self, a: &Self::V) -> Self::V {
        own(k::map(a.view(), k::sigmoid))
    }

    fn tanh(&mut self, a: &Self::V) -> Self::V {
        own(k::map(a.view(), F::tanh))
    }

    fn exp(&mut self, a: &Self::V) -> Self::V {
        own(k::map(a.view(), F::exp))
    }

    fn square(&mut self, a: &Self::V) -> Self::V {
        own(k::map(a.view(), |x| x * x))
    }

    fn clamp(&mut self, a: &Self::V, lo: F, hi: F) -> Self::V {
        own(k::map(a.view(), |x| x.max(lo).min(hi)))
    }

    fn concat(&mut self, parts: &[Self::V]) -> Self::V {
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        own(k::concat_cols(&views))
    }

    fn slice(&mut self, a: &Self::V, start: usize, end: usize) -> Self::V {
        own(k::slice_cols(a.view(), start, end))
    }

    fn gather(&mut self, a: &Self::V, idx: &Index) -> Self::V {
        own(k::gather_rows(a.view(), idx))
    }

    fn row_dot(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        own(k::row_dot(a.view(), b.view()))
    }

    fn scale_rows(&mut self, a: &Self::V, w: &Self::V) -> Self::V {
        own(k::scale_rows(a.view(), w.view()))
    }

    fn segment_sum(&mut self, a: &Self::V, seg: &Index, nseg: usize) -> Self::V {
        own(k::segment_sum(a.view(), seg, nseg))
    }

    fn segment_softmax(&mut self, a: &Self::V, seg: &Index, nseg: usize) -> Self::V {
        own(k::segment_softmax(a.view(), seg, nseg))
    }

    fn row_sum(&mut self, a: &Self::V) -> Self::V {
        own(k::row_sum(a.view()))
    }

    fn sum_all(&mut self, a: &Self::V) -> Self::V {
        own(k::sum_all(a.view()))
    }
}

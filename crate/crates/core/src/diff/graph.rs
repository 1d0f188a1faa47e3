//! Reverse-mode differentiation over a linear tape of batched matrix ops.

use ndarray::{s, Array2, Axis, Zip};

use super::kernels as k;
use super::ops::{Index, Ops};
use super::params::{ParamId, ParamStore};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    LeakyRelu(Var, F),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, F, F),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Gather(Var, Index),
    RowDot(Var, Var),
    ScaleRows(Var, Var),
    SegmentSum(Var, Index),
    SegmentSoftmax(Var, Index),
    RowSum(Var),
    SumAll(Var),
}

struct Node<F> {
    op: Op<F>,
    /// `None` for parameters, whose values live in the store.
    value: Option<Array2<F>>,
}

pub struct Graph<'p, F> {
    store: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p, F: Real> Graph<'p, F> {
    pub fn new(store: &'p ParamStore<F>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, value: Array2<F>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Array2<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(a), _) => a,
            (None, Op::Param(id)) => self.store.values(*id),
            _ => unreachable!("non-parameter node without value"),
        }
    }

    /// Gradients of the scalar `loss` (a `[1, 1]` node) with respect to
    /// every parameter that took part in the computation.
    pub fn backward(&self, loss: Var) -> Result<Vec<(ParamId, Array2<F>)>> {
        if self.val(loss).dim() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.val(loss).dim()
            )));
        }
        let mut grads: Vec<Option<Array2<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), F::one()));

        fn acc<F: Real>(grads: &mut [Option<Array2<F>>], v: Var, g: Array2<F>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = self.val(Var(i));
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, w) => {
                    let ga = g.dot(&self.val(*w).t());
                    let gw = self.val(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *w, gw);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.mapv(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.val(*b);
                    let gb = &g * self.val(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, *a, g.mapv(|x| x * c));
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let x = self.val(*a);
                    let ga =
                        Zip::from(&g)
                            .and(x)
                            .map_collect(|&g, &x| if x > F::zero() { g } else { g * slope });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = Zip::from(&g)
                        .and(out)
                        .map_collect(|&g, &y| g * y * (F::one() - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = Zip::from(&g)
                        .and(out)
                        .map_collect(|&g, &y| g * (F::one() - y * y));
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = &g * out;
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let two = F::of(2.0);
                    let ga = Zip::from(&g)
                        .and(self.val(*a))
                        .map_collect(|&g, &x| g * two * x);
                    acc(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = Zip::from(&g).and(self.val(*a)).map_collect(|&g, &x| {
                        if x > lo && x < hi {
                            g
                        } else {
                            F::zero()
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.val(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let nrows = self.val(*a).nrows();
                    let ga = k::segment_sum(g.view(), idx, nrows);
                    acc(&mut grads, *a, ga);
                }
                Op::RowDot(a, b) => {
                    let ga = self.val(*b) * &g;
                    let gb = self.val(*a) * &g;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::ScaleRows(a, w) => {
                    let ga = &g * self.val(*w);
                    let gw = k::row_dot(g.view(), self.val(*a).view());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *w, gw);
                }
                Op::SegmentSum(a, seg) => {
                    let ga = k::gather_rows(g.view(), seg);
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentSoftmax(a, seg) => {
                    // dx_i = y_i (g_i - sum_{j in seg(i)} g_j y_j)
                    let nseg = seg.iter().max().map_or(0, |m| m + 1);
                    let mut inner = vec![F::zero(); nseg];
                    for ((&gi, &yi), &s) in g.column(0).iter().zip(out.column(0)).zip(seg.iter()) {
                        inner[s] += gi * yi;
                    }
                    let mut ga = Array2::zeros(out.dim());
                    for (((o, &gi), &yi), &s) in ga
                        .column_mut(0)
                        .iter_mut()
                        .zip(g.column(0))
                        .zip(out.column(0))
                        .zip(seg.iter())
                    {
                        *o = yi * (gi - inner[s]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let ga = Array2::from_shape_fn(self.val(*a).dim(), |(r, _)| g[[r, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.val(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
            }
        }

        let mut out = Vec::new();
        for (id, var) in self.param_nodes.iter().enumerate() {
            if let Some(v) = var {
                if let Some(g) = grads[v.0].take() {
                    out.push((ParamId(id), g));
                }
            }
        }
        Ok(out)
    }
}

impl<'p, F: Real> Ops<F> for Graph<'p, F> {
    type V = Var;

    fn value<'a>(&'a self, v: &'a Var) -> &'a Array2<F> {
        self.val(*v)
    }

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn constant(&mut self, a: Array2<F>) -> Var {
        self.push(Op::Constant, a)
    }

    fn matmul(&mut self, a: &Var, w: &Var) -> Var {
        let v = k::matmul(self.val(*a).view(), self.val(*w).view());
        self.push(Op::MatMul(*a, *w), v)
    }

    fn add_row(&mut self, a: &Var, b: &Var) -> Var {
        let v = k::add_row(self.val(*a).view(), self.val(*b).view());
        self.push(Op::AddRow(*a, *b), v)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = k::zip_with(self.val(*a).view(), self.val(*b).view(), |x, y| x + y);
        self.push(Op::Add(*a, *b), v)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let v = k::zip_with(self.val(*a).view(), self.val(*b).view(), |x, y| x - y);
        self.push(Op::Sub(*a, *b), v)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let v = k::zip_with(self.val(*a).view(), self.val(*b).view(), |x, y| x * y);
        self.push(Op::Mul(*a, *b), v)
    }

    fn scale(&mut self, a: &Var, c: F) -> Var {
        let v = k::map(self.val(*a).view(), |x| x * c);
        self.push(Op::Scale(*a, c), v)
    }

    fn leaky_relu(&mut self, a: &Var, slope: F) -> Var {
        let v = k::map(self.val(*a).view(), |x| k::leaky_relu(x, slope));
        self.push(Op::LeakyRelu(*a, slope), v)
    }

    fn sigmoid(&mut self, a: &Var) -> Var {
        let v = k::map(self.val(*a).view(), k::sigmoid);
        self.push(Op::Sigmoid(*a), v)
    }

    fn tanh(&mut self, a: &Var) -> Var {
        let v = k::map(self.val(*a).view(), F::tanh);
        self.push(Op::Tanh(*a), v)
    }

    fn exp(&mut self, a: &Var) -> Var {
        let v = k::map(self.val(*a).view(), F::exp);
        self.push(Op::Exp(*a), v)
    }

    fn square(&mut self, a: &Var) -> Var {
        let v = k::map(self.val(*a).view(), |x| x * x);
        self.push(Op::Square(*a), v)
    }

    fn clamp(&mut self, a: &Var, lo: F, hi: F) -> Var {
        let v = k::map(self.val(*a).view(), |x| x.max(lo).min(hi));
        self.push(Op::Clamp(*a, lo, hi), v)
    }

    fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.val(*p).view()).collect();
        let v = k::concat_cols(&views);
        self.push(Op::Concat(parts.to_vec()), v)
    }

    fn slice(&mut self, a: &Var, start: usize, end: usize) -> Var {
        let v = k::slice_cols(self.val(*a).view(), start, end);
        self.push(Op::Slice(*a, start, end), v)
    }

    fn gather(&mut self, a: &Var, idx: &Index) -> Var {
        let v = k::gather_rows(self.val(*a).view(), idx);
        self.push(Op::Gather(*a, idx.clone()), v)
    }

    fn row_dot(&mut self, a: &Var, b: &Var) -> Var {
        let v = k::row_dot(self.val(*a).view(), self.val(*b).view());
        self.push(Op::RowDot(*a, *b), v)
    }

    fn scale_rows(&mut self, a: &Var, w: &Var) -> Var {
        let v = k::scale_rows(self.val(*a).view(), self.val(*w).view());
        self.push(Op::ScaleRows(*a, *w), v)
    }

    fn segment_sum(&mut self, a: &Var, seg: &Index, nseg: usize) -> Var {
        let v = k::segment_sum(self.val(*a).view(), seg, nseg);
        self.push(Op::SegmentSum(*a, seg.clone()), v)
    }

    fn segment_softmax(&mut self, a: &Var, seg: &Index, nseg: usize) -> Var {
        let v = k::segment_softmax(self.val(*a).view(), seg, nseg);
        self.push(Op::SegmentSoftmax(*a, seg.clone()), v)
    }

    fn row_sum(&mut self, a: &Var) -> Var {
        let v = k::row_sum(self.val(*a).view());
        self.push(Op::RowSum(*a), v)
    }

    fn sum_all(&mut self, a: &Var) -> Var {
        let v = k::sum_all(self.val(*a).view());
        self.push(Op::SumAll(*a), v)
    }
}

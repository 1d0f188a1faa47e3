//! Forward kernels on row-major batches (`rows = batch`, `cols = features`).
//! Both the recording graph and the eager evaluator call these, so the two
//! paths produce identical values.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use super::real::Real;

pub fn matmul<F: Real>(a: ArrayView2<F>, w: ArrayView2<F>) -> Array2<F> {
    assert_eq!(a.ncols(), w.nrows(), "matmul inner dimensions");
    a.dot(&w)
}

pub fn add_row<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>) -> Array2<F> {
    assert_eq!(b.nrows(), 1, "bias must be a single row");
    assert_eq!(a.ncols(), b.ncols(), "bias width");
    &a + &b
}

pub fn zip_with<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>, f: impl Fn(F, F) -> F) -> Array2<F> {
    assert_eq!(a.dim(), b.dim(), "elementwise shapes");
    Zip::from(&a).and(&b).map_collect(|&x, &y| f(x, y))
}

pub fn map<F: Real>(a: ArrayView2<F>, f: impl Fn(F) -> F) -> Array2<F> {
    a.mapv(f)
}

pub fn leaky_relu<F: Real>(x: F, slope: F) -> F {
    if x > F::zero() {
        x
    } else {
        x * slope
    }
}

pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn concat_cols<F: Real>(parts: &[ArrayView2<F>]) -> Array2<F> {
    concatenate(Axis(1), parts).expect("concat: row counts must match")
}

pub fn slice_cols<F: Real>(a: ArrayView2<F>, start: usize, end: usize) -> Array2<F> {
    a.slice(s![.., start..end]).to_owned()
}

pub fn gather_rows<F: Real>(a: ArrayView2<F>, idx: &[usize]) -> Array2<F> {
    let mut out = Array2::zeros((idx.len(), a.ncols()));
    for (mut row, &i) in out.rows_mut().into_iter().zip(idx) {
        row.assign(&a.row(i));
    }
    out
}

pub fn row_dot<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>) -> Array2<F> {
    assert_eq!(a.dim(), b.dim(), "row_dot shapes");
    let mut out = Array2::zeros((a.nrows(), 1));
    for ((ra, rb), o) in a.rows().into_iter().zip(b.rows()).zip(out.iter_mut()) {
        *o = ra.dot(&rb);
    }
    out
}

pub fn scale_rows<F: Real>(a: ArrayView2<F>, w: ArrayView2<F>) -> Array2<F> {
    assert_eq!(w.dim(), (a.nrows(), 1), "scale_rows weight shape");
    &a * &w
}

pub fn segment_sum<F: Real>(a: ArrayView2<F>, seg: &[usize], nseg: usize) -> Array2<F> {
    assert_eq!(seg.len(), a.nrows(), "one segment id per row");
    let mut out = Array2::zeros((nseg, a.ncols()));
    for (row, &s) in a.rows().into_iter().zip(seg) {
        let mut o = out.row_mut(s);
        o += &row;
    }
    out
}

/// Softmax of a column vector within each segment. Segments with no rows
/// produce nothing; the max is subtracted per segment.
pub fn segment_softmax<F: Real>(a: ArrayView2<F>, seg: &[usize], nseg: usize) -> Array2<F> {
    assert_eq!(a.ncols(), 1, "segment_softmax takes a column");
    assert_eq!(seg.len(), a.nrows(), "one segment id per row");
    let mut max = vec![F::neg_infinity(); nseg];
    for (&v, &s) in a.column(0).iter().zip(seg) {
        if v > max[s] {
            max[s] = v;
        }
    }
    let mut out = Array2::zeros(a.dim());
    let mut total = vec![F::zero(); nseg];
    for ((o, &v), &s) in out.column_mut(0).iter_mut().zip(a.column(0)).zip(seg) {
        *o = (v - max[s]).exp();
        total[s] += *o;
    }
    for (o, &s) in out.column_mut(0).iter_mut().zip(seg) {
        *o /= total[s];
    }
    out
}

pub fn row_sum<F: Real>(a: ArrayView2<F>) -> Array2<F> {
    a.sum_axis(Axis(1)).insert_axis(Axis(1))
}

pub fn sum_all<F: Real>(a: ArrayView2<F>) -> Array2<F> {
    Array2::from_elem((1, 1), a.sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn segment_softmax_sums_per_segment() {
        let a = array![[1.0f64], [2.0], [0.5], [-3.0]];
        let seg = [0, 0, 2, 2];
        let y = segment_softmax(a.view(), &seg, 3);
        assert!((y[[0, 0]] + y[[1, 0]] - 1.0).abs() < 1e-15);
        assert!((y[[2, 0]] + y[[3, 0]] - 1.0).abs() < 1e-15);
        let single = segment_softmax(array![[7.0f64]].view(), &[0], 1);
        assert_eq!(single[[0, 0]], 1.0);
    }

    #[test]
    fn segment_sum_leaves_empty_segments_zero() {
        let a = array![[1.0f64, 2.0], [3.0, 4.0]];
        let y = segment_sum(a.view(), &[2, 2], 3);
        assert_eq!(y, array![[0.0, 0.0], [0.0, 0.0], [4.0, 6.0]]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}

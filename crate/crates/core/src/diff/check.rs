//! Central finite-difference oracle for gradient checks. It only evaluates
//! the forward pass, so it is independent of the backward rules it checks.

use super::graph::{Graph, Var};
use super::ops::Ops;
use super::params::ParamStore;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub step: f64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// Check at most this many entries per block (evenly strided).
    pub max_entries_per_block: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_entries_per_block: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `loss` with central differences over
/// every (or a strided subset of every) parameter entry.
pub fn check_gradients<L>(store: &ParamStore<f64>, cfg: &GradCheck, loss: L) -> GradReport
where
    L: for<'a> Fn(&mut Graph<'a, f64>) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = loss(&mut g);
        g.backward(out).expect("scalar loss")
    };
    let mut work = store.clone();
    let mut report = GradReport::default();

    for (id, grad) in analytic {
        let n = grad.len();
        let stride = match cfg.max_entries_per_block {
            Some(m) if m < n => n.div_ceil(m),
            _ => 1,
        };
        for flat in (0..n).step_by(stride) {
            let orig = work.get(id).values.as_slice().expect("contiguous")[flat];
            let eval = |store: &ParamStore<f64>| {
                let mut g = Graph::new(store);
                let out = loss(&mut g);
                g.value(&out)[[0, 0]]
            };
            work.get_mut(id).values.as_slice_mut().expect("contiguous")[flat] = orig + cfg.step;
            let up = eval(&work);
            work.get_mut(id).values.as_slice_mut().expect("contiguous")[flat] = orig - cfg.step;
            let down = eval(&work);
            work.get_mut(id).values.as_slice_mut().expect("contiguous")[flat] = orig;

            let numeric = (up - down) / (2.0 * cfg.step);
            let a = grad.as_slice().expect("contiguous")[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_block = store.get(id).name.clone();
                report.worst_index = flat;
            }
        }
    }
    report
}

use rand::seq::index::sample;

use super::{DiffError, Graph, ParamStore, Var};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Maximum number of coordinates probed per parameter tensor.
    pub per_param: usize,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is zero are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { h: 1e-5, per_param: 32, floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckCoord {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<GradCheckCoord>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compares recorded gradients of `loss_fn` against central finite
/// differences at a random subset of parameter coordinates. `loss_fn` must be
/// a pure function of the parameter values.
pub fn grad_check<F>(store: &mut ParamStore<f64>, mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport, DiffError>
where
    F: FnMut(&ParamStore<f64>) -> Result<(Graph<f64>, Var), DiffError>,
{
    store.zero_grads();
    let (graph, loss) = loss_fn(store)?;
    graph.check_finite()?;
    graph.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).data().to_vec()).collect();
    store.zero_grads();

    let mut eval = |s: &ParamStore<f64>| -> Result<f64, DiffError> {
        let (g, l) = loss_fn(s)?;
        Ok(g.value(l).data()[0])
    };

    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).data().len();
        let mut r = rng::stream(opts.seed, id.0 as u64, 0);
        let coords: Vec<usize> = if n <= opts.per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut r, n, opts.per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + opts.h;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - opts.h;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic[id.0][i];
            let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords_checked += 1;
            if rel_err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel_err);
                report.worst = Some(GradCheckCoord {
                    param: store.name(id).to_string(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    Ok(report)
}

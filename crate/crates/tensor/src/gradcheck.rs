//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per parameter tensor;
    /// `None` checks every entry.
    pub max_entries_per_param: Option<usize>,
    pub sample_seed: u64,
    /// Denominator floor: errors on gradients smaller than this are measured
    /// in absolute terms.
    pub abs_floor: f64,
    /// When an entry fails, retry up to this many times with the step shrunk
    /// tenfold. A retry is taken only while successive estimates disagree,
    /// which happens when the perturbation crosses a ReLU or max-pool kink;
    /// a mismatch that is stable across step sizes still fails.
    pub kink_retries: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries_per_param: None,
            sample_seed: 0,
            abs_floor: 1e-6,
            kink_retries: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
    pub tolerance: f64,
    /// entries re-probed at a smaller step after a kink crossing
    pub kink_retries: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn eval<F>(store: &ParamStore<f64>, loss_fn: &mut F) -> Result<f64>
where
    F: for<'a> FnMut(&mut Graph<'a, f64>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let root = loss_fn(&mut g)?;
    let v = g.value(root);
    if v.len() != 1 {
        return Err(TensorError::Dimension(format!(
            "gradient check loss must be scalar, got {:?}",
            v.shape()
        )));
    }
    let l = v.data()[0];
    if !l.is_finite() {
        return Err(TensorError::Numeric(format!("non-finite loss {l}")));
    }
    Ok(l)
}

fn central_difference<F>(
    store: &mut ParamStore<f64>,
    loss_fn: &mut F,
    id: crate::params::ParamId,
    idx: usize,
    h: f64,
) -> Result<f64>
where
    F: for<'a> FnMut(&mut Graph<'a, f64>) -> Result<Var>,
{
    let orig = store.get(id).value.data()[idx];
    store.get_mut(id).value.data_mut()[idx] = orig + h;
    let plus = eval(store, loss_fn);
    store.get_mut(id).value.data_mut()[idx] = orig - h;
    let minus = eval(store, loss_fn);
    store.get_mut(id).value.data_mut()[idx] = orig;
    Ok((plus? - minus?) / (2.0 * h))
}

/// Compare every parameter's backward-pass gradient with central differences
/// of `loss_fn`. The closure must be deterministic: it is re-run for every
/// perturbation.
pub fn gradient_check<F>(
    store: &mut ParamStore<f64>,
    mut loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'a> FnMut(&mut Graph<'a, f64>) -> Result<Var>,
{
    let analytic: Vec<Option<Vec<f64>>> = {
        let mut g = Graph::new(&*store);
        let root = loss_fn(&mut g)?;
        g.value(root).ensure_finite("gradient check loss")?;
        let grads = g.backward(root)?;
        store
            .ids()
            .map(|id| grads.param(id).map(|t| t.data().to_vec()))
            .collect()
    };

    let mut rng = seeded(opts.sample_seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
        tolerance: opts.tolerance,
        kink_retries: 0,
        passed: true,
    };
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let n = store.get(id).value.len();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for idx in entries {
            let a = analytic[pi].as_ref().map_or(0.0, |g| g[idx]);
            let mut h = opts.step;
            let mut numeric = central_difference(store, &mut loss_fn, id, idx, h)?;
            let mut err = relative_error(a, numeric, opts.abs_floor);
            for _ in 0..opts.kink_retries {
                if err < opts.tolerance {
                    break;
                }
                h /= 10.0;
                let finer = central_difference(store, &mut loss_fn, id, idx, h)?;
                if relative_error(numeric, finer, opts.abs_floor) < opts.tolerance {
                    break;
                }
                report.kink_retries += 1;
                numeric = finer;
                err = relative_error(a, numeric, opts.abs_floor);
            }
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    Ok(report)
}

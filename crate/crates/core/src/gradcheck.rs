//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// Outcome of [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst scalar.
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `grads` to `(loss(θ+eps) - loss(θ-eps)) / (2 eps)` for every
/// scalar in `params`, returning the largest relative error.
pub fn grad_check<F>(
    mut loss_fn: F,
    grads: &ParamSet<f64>,
    params: &ParamSet<f64>,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "grad_check step must be positive, got {eps}"
        )));
    }
    if !grads.same_layout(params) {
        return Err(Error::Config(
            "gradient set does not match parameter names and shapes".into(),
        ));
    }
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for name in &names {
        let analytic = grads.get(name).expect("layout checked").data().to_vec();
        for (idx, &g) in analytic.iter().enumerate() {
            let orig = work.get(name).expect("layout checked").data()[idx];
            let mut eval = |value: f64| -> Result<f64> {
                work.get_mut(name).expect("layout checked").data_mut()[idx] = value;
                let loss = loss_fn(&work)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at perturbed parameter {name}[{idx}] is {loss}"
                    )));
                }
                Ok(loss)
            };
            let plus = eval(orig + eps)?;
            let minus = eval(orig - eps)?;
            work.get_mut(name).expect("layout checked").data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = relative_error(g, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.analytic = g;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

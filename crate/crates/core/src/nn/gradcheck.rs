//! Central finite-difference verification of model gradients.

use super::graph::{Graph, Var};
use super::model::PolicyModel;
use crate::{Error, Result};

/// Denominator floor for the relative error, so parameters with a
/// vanishing gradient are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the worst error occurred.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients with central differences for every
/// parameter value. `build` records the loss and returns it together with
/// the parameter leaves (in parameter order); it must be a pure function of
/// the model parameters.
pub fn check_gradients<F>(model: &PolicyModel<f64>, h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&PolicyModel<f64>, &mut Graph<f64>) -> Result<(Var, Vec<Var>)>,
{
    let mut g = Graph::new();
    let (loss, vars) = build(model, &mut g)?;
    if vars.len() != model.params.len() {
        return Err(Error::Shape("one leaf per parameter is required".into()));
    }
    let grads = g.backward(loss)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let eval = |m: &PolicyModel<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let (l, _) = build(m, &mut g)?;
        Ok(g.value(l).item())
    };
    for (i, &v) in vars.iter().enumerate() {
        let n = model.params.tensor(i).len();
        for j in 0..n {
            let analytic = grads.get(v).map_or(0.0, |s| s[j]);
            let x0 = model.params.tensor(i).data[j];
            probe.params.tensor_mut(i).data[j] = x0 + h;
            let up = eval(&probe)?;
            probe.params.tensor_mut(i).data[j] = x0 - h;
            let down = eval(&probe)?;
            probe.params.tensor_mut(i).data[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic, numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", model.params.name(i))));
            }
            if err > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = (model.params.name(i).to_string(), j);
                report.analytic = analytic;
                report.numeric = numeric;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

//! Central finite-difference gradient oracle.
//!
//! `grad_check` takes a closure returning both the scalar loss and its
//! analytic gradients, perturbs every trainable scalar by `±h`, and reports
//! the worst relative error with denominator `max(|analytic|, |numeric|,
//! 1e-12)`. Always run in `f64`.

use super::{NumericsError, ParamSet};
use serde::Serialize;
use std::collections::BTreeMap;

const REL_ERR_FLOOR: f64 = 1e-12;

/// Central differences cannot resolve gradients below roughly
/// `ulp(loss)/2h`; when both the analytic and numeric values sit under this
/// gate the scalar counts as matched instead of comparing rounding noise.
const NOISE_GATE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    /// Worst relative error per named parameter tensor.
    pub per_param: BTreeMap<String, f64>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn worst_param(&self) -> Option<(&str, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, &v)| (k.as_str(), v))
    }
}

/// Compare analytic gradients against `(f(x+h) - f(x-h)) / 2h` per scalar.
///
/// The closure receives `want_grads = false` on the many perturbed
/// evaluations, where only the loss value is used.
pub fn grad_check<F>(
    mut f: F,
    params: &ParamSet<f64>,
    h: f64,
    tol: f64,
) -> Result<GradReport, NumericsError>
where
    F: FnMut(&ParamSet<f64>, bool) -> Result<(f64, Option<ParamSet<f64>>), NumericsError>,
{
    assert!(h > 0.0, "step size must be positive");
    let (loss_a, analytic) = f(params, true)?;
    let analytic = analytic.ok_or_else(|| {
        NumericsError::Shape("loss function returned no gradients on the base call".into())
    })?;
    let (loss_b, _) = f(params, true)?;
    if loss_a.to_bits() != loss_b.to_bits() {
        return Err(NumericsError::NonDeterministic);
    }

    let mut work = params.clone();
    let mut per_param = BTreeMap::new();
    let mut max_rel_err = 0.0f64;
    let names: Vec<(String, bool)> = params
        .iter()
        .map(|(n, e)| (n.to_string(), e.trainable))
        .collect();
    for (name, trainable) in names {
        if !trainable {
            continue;
        }
        let dim = params.tensor(&name)?.raw_dim();
        let mut worst = 0.0f64;
        for r in 0..dim[0] {
            for c in 0..dim[1] {
                let orig = params.tensor(&name)?[[r, c]];
                work.tensor_mut(&name)?[[r, c]] = orig + h;
                let (plus, _) = f(&work, false)?;
                work.tensor_mut(&name)?[[r, c]] = orig - h;
                let (minus, _) = f(&work, false)?;
                work.tensor_mut(&name)?[[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let ana = analytic.tensor(&name)?[[r, c]];
                if ana.abs() <= NOISE_GATE && numeric.abs() <= NOISE_GATE {
                    continue;
                }
                let rel = (numeric - ana).abs() / ana.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
                worst = worst.max(rel);
            }
        }
        max_rel_err = max_rel_err.max(worst);
        per_param.insert(name, worst);
    }
    Ok(GradReport { per_param, max_rel_err, tolerance: tol, pass: max_rel_err <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use std::cell::Cell;

    fn quad_params(w: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.insert("w", arr2(&[[w]]), true).unwrap();
        ps
    }

    // f(w) = w^2; central differences are exact for quadratics.
    fn quad(ps: &ParamSet<f64>, _want: bool) -> Result<(f64, Option<ParamSet<f64>>), NumericsError> {
        let w = ps.tensor("w")?[[0, 0]];
        let mut g = ps.zeros_like();
        g.tensor_mut("w")?[[0, 0]] = 2.0 * w;
        Ok((w * w, Some(g)))
    }

    #[test]
    fn quadratic_is_exact() {
        let report = grad_check(quad, &quad_params(3.0), 1e-5, 1e-4).unwrap();
        assert!(report.pass, "rel err {}", report.max_rel_err);
        assert!(report.max_rel_err < 1e-9);
    }

    #[test]
    fn scaled_analytic_gradient_is_caught() {
        let f = |ps: &ParamSet<f64>, want: bool| {
            let (l, g) = quad(ps, want)?;
            let mut g = g.unwrap();
            *g.tensor_mut("w")? *= 1.1;
            Ok((l, Some(g)))
        };
        let report = grad_check(f, &quad_params(3.0), 1e-5, 1e-4).unwrap();
        assert!(!report.pass);
        assert!(report.max_rel_err > 0.05);
    }

    #[test]
    fn non_deterministic_loss_is_an_error() {
        let flips = Cell::new(0u32);
        let f = |ps: &ParamSet<f64>, want: bool| {
            flips.set(flips.get() + 1);
            let (l, g) = quad(ps, want)?;
            Ok((l + flips.get() as f64 * 1e-13, g))
        };
        assert!(matches!(
            grad_check(f, &quad_params(1.0), 1e-5, 1e-4),
            Err(NumericsError::NonDeterministic)
        ));
    }

    #[test]
    fn non_trainable_entries_are_skipped() {
        let mut ps = quad_params(2.0);
        ps.insert("frozen", arr2(&[[5.0]]), false).unwrap();
        let report = grad_check(quad, &ps, 1e-5, 1e-4).unwrap();
        assert!(report.pass);
        assert!(!report.per_param.contains_key("frozen"));
    }
}

//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward closure, so it is independent
//! of the reverse-mode sweep it validates.

use crate::error::{Result, TensorError};
use crate::tape::{Bound, Tape, Var};
use crate::tensor::ParamSet;

/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Reverse-mode gradient of `loss` with respect to every entry of `params`.
pub fn analytic_gradients<F>(params: &ParamSet, loss: &F) -> Result<ParamSet>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = tape.bind(params);
    let out = loss(&tape, &bound)?;
    let grads = tape.backward(out)?;
    let mut result = params.clone();
    result.zero_grad();
    result.accumulate_grads(&bound, &grads)?;
    Ok(result)
}

fn eval<F>(params: &ParamSet, loss: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = tape.bind(params);
    let v = loss(&tape, &bound)?.value();
    v.item().ok_or_else(|| TensorError::NonScalarLoss(v.shape().to_vec()))
}

/// Compare reverse-mode gradients against central differences with step `eps`.
pub fn check_gradients<F>(params: &ParamSet, eps: f64, loss: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let analytic = analytic_gradients(params, &loss)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.value(name)?.numel();
        for i in 0..n {
            let orig = params.value(name)?.data()[i];
            probe.get_mut(name)?.value.data_mut()[i] = orig + eps;
            let plus = eval(&probe, &loss)?;
            probe.get_mut(name)?.value.data_mut()[i] = orig - eps;
            let minus = eval(&probe, &loss)?;
            probe.get_mut(name)?.value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(name)?.grad.data()[i];
            let err = relative_error(a, numeric);
            report.entries += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn detects_wrong_gradient() {
        let mut params = ParamSet::new(0);
        params
            .insert("x", Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap())
            .unwrap();
        let ok = check_gradients(&params, 1e-5, |_, p| {
            let x = p.get("x")?;
            Ok(x.mul(x)?.tanh().sum())
        })
        .unwrap();
        assert!(ok.passes(1e-6), "{ok:?}");

        // relu has a kink at 0; a point exactly on it disagrees with the
        // one-sided analytic convention.
        let mut kink = ParamSet::new(0);
        kink.insert("x", Tensor::new(vec![1], vec![0.0]).unwrap()).unwrap();
        let bad = check_gradients(&kink, 1e-5, |_, p| Ok(p.get("x")?.relu().sum())).unwrap();
        assert!(!bad.passes(1e-4));
    }
}

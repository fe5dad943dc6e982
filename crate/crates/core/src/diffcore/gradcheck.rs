use super::{OpKind, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// Input tensor and flat coordinate where the worst error occurred.
    pub worst_input: usize,
    pub worst_index: usize,
    pub n_coords: usize,
}

/// Checks the gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}

/// Checks the gradient of a scalar function with respect to every element of
/// every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(f, inputs, eps, None)
}

/// As [`grad_check_many`], with an optional deliberately corrupted primitive.
pub fn grad_check_with<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    corrupt: Option<OpKind>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new().with_corrupted_backward(corrupt);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        n_coords: 0,
    };
    for (ti, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            work[ti].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::numeric(format!(
                    "grad_check: non-finite function value at input {ti}, coordinate {i}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst_input = ti;
                report.worst_index = i;
            }
            report.n_coords += 1;
        }
    }
    Ok(report)
}

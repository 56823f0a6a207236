//! Central-difference gradient verification.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (tensor index, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, thetas: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = thetas.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::shape("grad_check", value.shape(), &[1]));
    }
    let v = value.data()[0];
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("f(theta) = {v}")));
    }
    Ok(v)
}

/// Checks a scalar function of several parameter tensors.
///
/// Returns the maximum over all coordinates of
/// `|analytic − cd| / max(|analytic|, |cd|, 1e-8)`.
pub fn grad_check_many<F>(f: F, thetas: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::Config(format!("grad_check step must be in (0, 1e-3], got {step}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = thetas.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).data().first().copied().unwrap_or(f64::NAN);
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("f(theta) = {v}")));
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();
    drop(tape);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Tensor> = thetas.to_vec();
    for t in 0..work.len() {
        for c in 0..work[t].len() {
            let original = work[t].data()[c];
            work[t].data_mut()[c] = original + step;
            let plus = evaluate(&f, &work)?;
            work[t].data_mut()[c] = original - step;
            let minus = evaluate(&f, &work)?;
            work[t].data_mut()[c] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[t].data()[c];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (t, c);
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

/// Checks a scalar function of one parameter tensor; returns the max relative error.
pub fn grad_check<F>(f: F, theta: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(theta), step)?;
    Ok(report.max_relative_error)
}

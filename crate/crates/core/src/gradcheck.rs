//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::params::ParamSet;
use crate::tape::{Tape, Var};

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
/// The floor keeps exact-zero gradients from producing 0/0.
pub const DEFAULT_REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the largest relative error.
    pub worst: Option<(String, usize)>,
    /// Elements where `f` was not finite at one of the probe points.
    pub non_finite: Vec<(String, usize)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_empty() && self.max_rel_error < self.tolerance
    }
}

/// Compares `backward` against `(f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h` for every
/// scalar element of every parameter.
///
/// `f` builds the scalar objective on a fresh tape from the given parameters.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    finite_diff_check_with_floor(f, params, step, tol, DEFAULT_REL_FLOOR)
}

pub fn finite_diff_check_with_floor<F>(
    f: F,
    params: &ParamSet,
    step: f64,
    tol: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    assert!(step > 0.0, "finite-difference step must be positive");

    let mut tape = Tape::new();
    let root = f(&mut tape, params)?;
    let analytic = tape.backward(root, params)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let root = f(&mut tape, p)?;
        tape.value(root).item()
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst: None,
        non_finite: Vec::new(),
        tolerance: tol,
    };
    let mut probe = params.clone();
    for id in params.ids() {
        let name = params.name(id).to_string();
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + step;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - step;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            report.checked += 1;
            if !plus.is_finite() || !minus.is_finite() {
                report.non_finite.push((name.clone(), i));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(floor);
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

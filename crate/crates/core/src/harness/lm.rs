//! Bounded Levenberg-Marquardt least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Stop once the residual RMS falls below this.
    pub rms_tol: f64,
    /// Stop once every relative parameter change is below this.
    pub step_tol: f64,
    /// Stop once the relative cost decrease of an accepted step is below this.
    pub cost_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            fd_step: 1e-6,
            rms_tol: 1e-12,
            step_tol: 1e-14,
            cost_tol: 1e-16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn rms(r: &DVector<f64>) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        (r.norm_squared() / r.len() as f64).sqrt()
    }
}

/// Minimises `‖r(x)‖²` with `lower ≤ x ≤ upper`.
///
/// A residual evaluation that fails (e.g. the simulated trajectory leaves its
/// domain) is treated as an infinitely bad trial point.
pub fn levenberg_marquardt<F>(
    mut residual: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    if n == 0 || lower.len() != n || upper.len() != n {
        return Err(Error::config("parameter vector and bounds must be non-empty and equally long"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::config("each lower bound must not exceed its upper bound"));
    }
    let clamp = |x: &mut DVector<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = DVector::from_column_slice(x0);
    clamp(&mut x);
    let mut evals = 1;
    let mut r = DVector::from_vec(residual(x.as_slice())?);
    let m = r.len();
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    let done = |r: &DVector<f64>| rms(r) <= opts.rms_tol;
    if done(&r) {
        return Ok(LmOutcome {
            x: x.as_slice().to_vec(),
            residual_rms: rms(&r),
            iterations: 0,
            evaluations: evals,
            converged: true,
        });
    }

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(1e-8);
            let mut xp = x.clone();
            // Step away from an active upper bound.
            let h = if xp[j] + h > upper[j] { -h } else { h };
            xp[j] += h;
            evals += 1;
            let rp = DVector::from_vec(residual(xp.as_slice())?);
            if rp.len() != m {
                return Err(Error::LengthMismatch(m, rp.len()));
            }
            jac.set_column(j, &((rp - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 {
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let delta = match a.lu().solve(&(-&g)) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = &x + &delta;
            clamp(&mut trial);
            evals += 1;
            let trial_r = match residual(trial.as_slice()) {
                Ok(v) if v.len() == m && v.iter().all(|e| e.is_finite()) => DVector::from_vec(v),
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial_cost = trial_r.norm_squared();
            if trial_cost < cost {
                let rel_step = (0..n)
                    .map(|i| (trial[i] - x[i]).abs() / x[i].abs().max(1e-300))
                    .fold(0.0_f64, f64::max);
                let rel_cost = (cost - trial_cost) / cost;
                x = trial;
                r = trial_r;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if done(&r) || rel_step < opts.step_tol || rel_cost < opts.cost_tol {
                    return Ok(LmOutcome {
                        x: x.as_slice().to_vec(),
                        residual_rms: rms(&r),
                        iterations,
                        evaluations: evals,
                        converged: true,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent at any damping: stationary to working precision.
            return Ok(LmOutcome {
                x: x.as_slice().to_vec(),
                residual_rms: rms(&r),
                iterations,
                evaluations: evals,
                converged: true,
            });
        }
    }
    Ok(LmOutcome {
        x: x.as_slice().to_vec(),
        residual_rms: rms(&r),
        iterations,
        evaluations: evals,
        converged: done(&r),
    })
}

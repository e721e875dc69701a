//! Newton–Raphson maximizer with step-halving line search.
//!
//! Shared by every likelihood fit in the crate. The ascent direction solves
//! `(-H) d = g` by Cholesky; when the Hessian is ill-conditioned (condition
//! proxy above 1e12) or indefinite, the solve falls back to a damped
//! direction `(-H + tau I) d = g` with escalating `tau`. Accepted steps never
//! decrease the objective. Objectives without an analytic Hessian get a
//! central finite-difference Hessian of their gradient.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth objective to maximize (a log-likelihood, possibly penalized).
pub trait Objective {
    fn dim(&self) -> usize;

    /// Observation count; gradient tolerance scales with it.
    fn n_obs(&self) -> usize;

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>);

    /// Analytic Hessian, or `None` to request a finite-difference Hessian.
    fn hessian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence when `||grad||_2 <= tol * max(n_obs, 1)`.
    pub gradient_tol_per_obs: f64,
    /// Relative step for finite-difference Hessians.
    pub fd_step: f64,
    /// Condition-number proxy above which the Newton solve is damped.
    pub condition_limit: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 200,
            gradient_tol_per_obs: 1e-8,
            fd_step: 1e-5,
            condition_limit: 1e12,
        }
    }
}

/// When refinement hits the floating-point resolution of the objective, a
/// stall within this factor of the gradient tolerance still counts as
/// converged; the achieved norm is recorded on the fit.
const STALL_SLACK: f64 = 10.0;

/// Convergence metadata stored on every fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

pub struct Maximum {
    pub theta: Vec<f64>,
    pub convergence: Convergence,
    /// Negated Hessian of the objective at the maximum (observed information).
    pub information: DMatrix<f64>,
}

fn grad_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Central finite-difference Hessian of the gradient, symmetrized.
pub fn fd_hessian(obj: &impl Objective, theta: &[f64], rel_step: f64) -> DMatrix<f64> {
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    let mut work = theta.to_vec();
    for k in 0..d {
        let step = rel_step * theta[k].abs().max(1.0);
        work[k] = theta[k] + step;
        let (_, g_plus) = obj.value_and_grad(&work);
        work[k] = theta[k] - step;
        let (_, g_minus) = obj.value_and_grad(&work);
        work[k] = theta[k];
        for r in 0..d {
            h[(r, k)] = (g_plus[r] - g_minus[r]) / (2.0 * step);
        }
    }
    // Symmetrize: differencing noise breaks exact symmetry.
    for r in 0..d {
        for c in (r + 1)..d {
            let avg = 0.5 * (h[(r, c)] + h[(c, r)]);
            h[(r, c)] = avg;
            h[(c, r)] = avg;
        }
    }
    h
}

/// Cholesky of `a + tau I`, escalating `tau` until it succeeds and passes the
/// condition proxy. Returns the factorization.
fn damped_cholesky(
    a: &DMatrix<f64>,
    condition_limit: f64,
) -> Option<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    let d = a.nrows();
    let scale = (0..d).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let mut tau = 0.0;
    for _ in 0..40 {
        let mut m = a.clone();
        if tau > 0.0 {
            for i in 0..d {
                m[(i, i)] += tau;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for i in 0..d {
                let v = l[(i, i)];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let cond_proxy = (hi / lo).powi(2);
            if cond_proxy.is_finite() && cond_proxy <= condition_limit {
                return Some((chol, tau));
            }
        }
        tau = if tau == 0.0 { scale * 1e-10 } else { tau * 10.0 };
        if tau > scale * 1e6 {
            break;
        }
    }
    None
}

/// Maximize `obj` starting from `theta0`.
///
/// Errors with [`Error::Diverged`] when the objective is non-finite at the
/// start, or when the gradient tolerance is not met within the iteration
/// budget; the error carries a short iteration trace.
pub fn maximize(obj: &impl Objective, theta0: Vec<f64>, opts: &NewtonOptions) -> Result<Maximum> {
    let d = obj.dim();
    assert_eq!(theta0.len(), d, "starting point dimension mismatch");
    let tol = opts.gradient_tol_per_obs * obj.n_obs().max(1) as f64;

    let mut theta = DVector::from_vec(theta0);
    let (mut value, mut grad) = obj.value_and_grad(theta.as_slice());
    let mut trace: Vec<String> = Vec::new();
    let mut flat_streak = 0usize;

    if !value.is_finite() {
        return Err(Error::Diverged {
            msg: "objective non-finite at the starting point".into(),
            trace,
        });
    }

    for iter in 0..opts.max_iterations {
        let gnorm = grad_norm(&grad);
        if trace.len() < 64 {
            trace.push(format!("iter {iter}: value={value:.6e}, grad_norm={gnorm:.3e}"));
        }
        if gnorm <= tol {
            let info = information_at(obj, theta.as_slice(), opts);
            return Ok(Maximum {
                theta: theta.as_slice().to_vec(),
                convergence: Convergence {
                    iterations: iter,
                    final_gradient_norm: gnorm,
                    log_likelihood: value,
                    converged: true,
                },
                information: info,
            });
        }

        let hess = obj
            .hessian(theta.as_slice())
            .unwrap_or_else(|| fd_hessian(obj, theta.as_slice(), opts.fd_step));
        let neg_h = -hess;
        let g_vec = DVector::from_column_slice(&grad);

        let direction = match damped_cholesky(&neg_h, opts.condition_limit) {
            Some((chol, _tau)) => chol.solve(&g_vec),
            // Hessian unusable even with damping: steepest ascent, scaled.
            None => {
                let scale = (0..d)
                    .map(|i| neg_h[(i, i)].abs())
                    .fold(0.0_f64, f64::max)
                    .max(1.0);
                &g_vec / scale
            }
        };

        // Step-halving line search; accepted steps never decrease the value.
        let mut step = 1.0_f64;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &theta + &direction * step;
            let (v, g) = obj.value_and_grad(candidate.as_slice());
            if v.is_finite() && v >= value {
                let improved = v > value;
                let old_gnorm = grad_norm(&grad);
                theta = candidate;
                value = v;
                grad = g;
                accepted = true;
                // A bit-flat step with an unchanged gradient means further
                // refinement is below f64 resolution of the objective.
                if !improved && (grad_norm(&grad) - old_gnorm).abs() <= 1e-12 * (1.0 + old_gnorm)
                {
                    flat_streak += 1;
                } else {
                    flat_streak = 0;
                }
                break;
            }
            step *= 0.5;
        }
        if accepted && flat_streak >= 3 {
            let gnorm = grad_norm(&grad);
            if gnorm <= tol * STALL_SLACK {
                let info = information_at(obj, theta.as_slice(), opts);
                return Ok(Maximum {
                    theta: theta.as_slice().to_vec(),
                    convergence: Convergence {
                        iterations: iter,
                        final_gradient_norm: gnorm,
                        log_likelihood: value,
                        converged: true,
                    },
                    information: info,
                });
            }
            return Err(Error::Diverged {
                msg: format!(
                    "no numerical progress at iteration {iter} (grad_norm={gnorm:.3e}, tol={tol:.3e})"
                ),
                trace,
            });
        }
        if !accepted {
            // No ascent possible along the Newton direction; check whether we
            // are already at (numerical) convergence.
            let gnorm = grad_norm(&grad);
            if gnorm <= tol * STALL_SLACK {
                let info = information_at(obj, theta.as_slice(), opts);
                return Ok(Maximum {
                    theta: theta.as_slice().to_vec(),
                    convergence: Convergence {
                        iterations: iter,
                        final_gradient_norm: gnorm,
                        log_likelihood: value,
                        converged: true,
                    },
                    information: info,
                });
            }
            return Err(Error::Diverged {
                msg: format!("line search stalled at iteration {iter} (grad_norm={gnorm:.3e})"),
                trace,
            });
        }
    }

    let gnorm = grad_norm(&grad);
    Err(Error::Diverged {
        msg: format!(
            "gradient tolerance not reached in {} iterations (grad_norm={gnorm:.3e}, tol={tol:.3e})",
            opts.max_iterations
        ),
        trace,
    })
}

/// Observed information `-H` at `theta`, ridged just enough to invert.
fn information_at(obj: &impl Objective, theta: &[f64], opts: &NewtonOptions) -> DMatrix<f64> {
    let h = obj
        .hessian(theta)
        .unwrap_or_else(|| fd_hessian(obj, theta, opts.fd_step));
    -h
}

/// Invert the observed information into a coefficient covariance estimate.
pub fn covariance_from_information(information: &DMatrix<f64>) -> DMatrix<f64> {
    let d = information.nrows();
    if let Some((chol, _)) = damped_cholesky(information, 1e14) {
        return chol.inverse();
    }
    // Last resort: heavily damped inverse keeps standard errors finite.
    let scale = (0..d)
        .map(|i| information[(i, i)].abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let mut m = information.clone();
    for i in 0..d {
        m[(i, i)] += scale * 1e-6;
    }
    m.try_inverse().unwrap_or_else(|| DMatrix::identity(d, d) * f64::NAN)
}

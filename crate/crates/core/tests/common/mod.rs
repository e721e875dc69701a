//! Shared oracle helpers for the integration suites: finite-difference
//! gradients, adaptive quadrature, and small dataset builders. These stay
//! independent of the implementation paths they check.

#![allow(dead_code)]

use apres_core::schema::{CovariateSchema, CovariateVector, Factor, FactorKind};

/// Central finite-difference gradient of `f` at `theta`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for k in 0..theta.len() {
        let h = step * theta[k].abs().max(1.0);
        work[k] = theta[k] + h;
        let up = f(&work);
        work[k] = theta[k] - h;
        let down = f(&work);
        work[k] = theta[k];
        grad[k] = (up - down) / (2.0 * h);
    }
    grad
}

/// Componentwise relative error between an analytic gradient and its
/// finite-difference estimate, with an absolute floor for near-zero entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol, 48)
}

/// Integral of a density over (0, inf) via the substitution y = t/(1-t).
pub fn integrate_density<F: Fn(f64) -> f64>(pdf: F, tol: f64) -> f64 {
    let g = |t: f64| -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let y = t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        let v = pdf(y) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive_simpson(&g, 1e-12, 1.0 - 1e-12, tol)
}

/// Two-coverage schema with one binary factor, for compact fitting tests.
pub fn schema_c2() -> CovariateSchema {
    CovariateSchema {
        coverages: vec!["VD".into(), "LOU".into()],
        factors: vec![Factor {
            name: "gender".into(),
            kind: FactorKind::Categorical {
                levels: vec!["F".into(), "M".into()],
                reference: "F".into(),
            },
        }],
    }
}

pub fn intercept_only(m: usize) -> CovariateVector {
    let mut v = vec![0.0; m];
    v[0] = 1.0;
    CovariateVector(v)
}

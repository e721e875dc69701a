//! Multinomial logistic regression over activation patterns.
//!
//! Pattern `v = 0` (lowest mask) is the reference with coefficients fixed at
//! zero; the remaining `V - 1` patterns carry one coefficient row each. An
//! observation may restrict the outcome support to the patterns reachable
//! from a previous pattern (supersets of its mask); the likelihood then uses
//! the renormalized probabilities over that support, which is exactly the
//! Markov transition the simulation applies.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitOptions, CHUNK};
use crate::domain::{pattern_count, ActivationPattern};
use crate::error::{Error, Result};
use crate::opt::{covariance_from_information, maximize, Convergence, Objective};
use crate::schema::CovariateVector;

/// Observations for one multinomial fit.
#[derive(Debug, Clone)]
pub struct MultinomialDataset {
    pattern_total: usize,
    m: usize,
    x: Vec<f64>,
    pattern: Vec<u32>,
    /// Mask of the previous-year pattern restricting the outcome support;
    /// 0 means unrestricted (first development year).
    prev_mask: Vec<u16>,
}

impl MultinomialDataset {
    pub fn new(coverage_count: usize, m: usize) -> Result<Self> {
        Ok(MultinomialDataset {
            pattern_total: pattern_count(coverage_count)?,
            m,
            x: Vec::new(),
            pattern: Vec::new(),
            prev_mask: Vec::new(),
        })
    }

    pub fn push(
        &mut self,
        x: &CovariateVector,
        pattern: ActivationPattern,
        prev: Option<ActivationPattern>,
    ) {
        assert_eq!(x.len(), self.m, "covariate vector length mismatch");
        if let Some(p) = prev {
            assert!(
                pattern.is_superset_of(p),
                "observed pattern must be reachable from the previous pattern"
            );
        }
        self.x.extend_from_slice(x.as_slice());
        self.pattern.push(pattern.index() as u32);
        self.prev_mask.push(prev.map(|p| p.mask()).unwrap_or(0));
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    pub fn pattern_total(&self) -> usize {
        self.pattern_total
    }

    pub fn distinct_patterns(&self) -> usize {
        let mut seen = vec![false; self.pattern_total];
        for &v in &self.pattern {
            seen[v as usize] = true;
        }
        seen.iter().filter(|&&b| b).count()
    }
}

/// Linear predictors for all patterns; the reference contributes 0.
#[inline]
fn linear_predictors(beta: &[f64], x: &[f64], v_total: usize, m: usize, eta: &mut [f64]) {
    eta[0] = 0.0;
    for v in 1..v_total {
        let row = &beta[(v - 1) * m..v * m];
        let mut acc = 0.0;
        for k in 0..m {
            acc += row[k] * x[k];
        }
        eta[v] = acc;
    }
}

/// Softmax with max-subtraction, optionally restricted to supersets of
/// `prev_mask`. Returns the log normalizer.
#[inline]
fn softmax_into(eta: &[f64], prev_mask: u16, probs: &mut [f64]) -> f64 {
    let allowed = |v: usize| -> bool {
        let mask = (v + 1) as u16;
        mask & prev_mask == prev_mask
    };
    let mut max = f64::NEG_INFINITY;
    for v in 0..eta.len() {
        if allowed(v) && eta[v] > max {
            max = eta[v];
        }
    }
    let mut denom = 0.0;
    for v in 0..eta.len() {
        if allowed(v) {
            let e = (eta[v] - max).exp();
            probs[v] = e;
            denom += e;
        } else {
            probs[v] = 0.0;
        }
    }
    for p in probs.iter_mut() {
        *p /= denom;
    }
    max + denom.ln()
}

/// Probabilities of all `V` patterns given covariates, using the fitted
/// coefficients; entries sum to 1.
pub fn multinomial_probabilities(x: &CovariateVector, model: &FittedMultinomial) -> Vec<f64> {
    model.probabilities_restricted(x, None)
}

/// Log-likelihood and gradient of the pattern model on a dataset; exposed for
/// verification against finite differences. Empty data gives `(0, zeros)`.
pub fn loglik_and_gradient(beta: &[f64], data: &MultinomialDataset) -> (f64, Vec<f64>) {
    let v_total = data.pattern_total;
    let m = data.m;
    let dim = (v_total - 1) * m;
    assert_eq!(beta.len(), dim, "coefficient dimension mismatch");
    if data.is_empty() {
        return (0.0, vec![0.0; dim]);
    }

    let n = data.len();
    let chunk_results: Vec<(f64, Vec<f64>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ll = 0.0;
            let mut grad = vec![0.0; dim];
            let mut eta = vec![0.0; v_total];
            let mut probs = vec![0.0; v_total];
            for &i in chunk {
                let x = &data.x[i * m..(i + 1) * m];
                linear_predictors(beta, x, v_total, m, &mut eta);
                let log_z = softmax_into(&eta, data.prev_mask[i], &mut probs);
                let vi = data.pattern[i] as usize;
                ll += eta[vi] - log_z;
                for v in 1..v_total {
                    let resid = (if v == vi { 1.0 } else { 0.0 }) - probs[v];
                    if resid != 0.0 {
                        let row = &mut grad[(v - 1) * m..v * m];
                        for k in 0..m {
                            row[k] += resid * x[k];
                        }
                    }
                }
            }
            (ll, grad)
        })
        .collect();

    let mut ll = 0.0;
    let mut grad = vec![0.0; dim];
    for (l, g) in chunk_results {
        ll += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    (ll, grad)
}

struct MultinomialObjective<'a> {
    data: &'a MultinomialDataset,
    ridge: f64,
}

impl MultinomialObjective<'_> {
    fn dim_inner(&self) -> usize {
        (self.data.pattern_total - 1) * self.data.m
    }

    fn apply_ridge(&self, theta: &[f64], value: &mut f64, grad: &mut [f64]) {
        if self.ridge == 0.0 {
            return;
        }
        let m = self.data.m;
        for (idx, t) in theta.iter().enumerate() {
            if idx % m != 0 {
                *value -= 0.5 * self.ridge * t * t;
                grad[idx] -= self.ridge * t;
            }
        }
    }
}

impl Objective for MultinomialObjective<'_> {
    fn dim(&self) -> usize {
        self.dim_inner()
    }

    fn n_obs(&self) -> usize {
        self.data.len()
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (mut ll, mut grad) = loglik_and_gradient(theta, self.data);
        self.apply_ridge(theta, &mut ll, &mut grad);
        (ll, grad)
    }

    fn hessian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let v_total = self.data.pattern_total;
        let m = self.data.m;
        let dim = self.dim_inner();
        let n = self.data.len();

        let chunk_results: Vec<Vec<f64>> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut h = vec![0.0; dim * dim];
                let mut eta = vec![0.0; v_total];
                let mut probs = vec![0.0; v_total];
                let mut active: Vec<usize> = Vec::with_capacity(v_total);
                for &i in chunk {
                    let x = &self.data.x[i * m..(i + 1) * m];
                    linear_predictors(theta, x, v_total, m, &mut eta);
                    softmax_into(&eta, self.data.prev_mask[i], &mut probs);
                    active.clear();
                    active.extend((1..v_total).filter(|&v| probs[v] > 0.0));
                    // H -= (diag(p) - p p') (x) (x x'), restricted to nonzero p.
                    for &v in &active {
                        for &w in &active {
                            if w < v {
                                continue;
                            }
                            let coeff = if v == w {
                                probs[v] * (1.0 - probs[v])
                            } else {
                                -probs[v] * probs[w]
                            };
                            if coeff == 0.0 {
                                continue;
                            }
                            let rb = (v - 1) * m;
                            let cb = (w - 1) * m;
                            for k in 0..m {
                                let xk = coeff * x[k];
                                let row = rb + k;
                                for l in 0..m {
                                    h[row * dim + cb + l] -= xk * x[l];
                                }
                            }
                        }
                    }
                }
                h
            })
            .collect();

        let mut flat = vec![0.0; dim * dim];
        for h in chunk_results {
            for (acc, v) in flat.iter_mut().zip(&h) {
                *acc += v;
            }
        }
        // Mirror the upper blocks into the lower triangle.
        let mut hess = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                hess[(r, c)] = flat[r * dim + c];
            }
        }
        for v in 1..v_total {
            for w in (v + 1)..v_total {
                for k in 0..m {
                    for l in 0..m {
                        let r = (v - 1) * m + k;
                        let c = (w - 1) * m + l;
                        hess[(c, r)] = hess[(r, c)];
                    }
                }
            }
        }
        if self.ridge > 0.0 {
            for idx in 0..dim {
                if idx % m != 0 {
                    hess[(idx, idx)] -= self.ridge;
                }
            }
        }
        Some(hess)
    }
}

/// A fitted activation-pattern model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedMultinomial {
    /// Human-readable period label, e.g. "j=1" or "j=2+".
    pub period: String,
    pub coverage_count: usize,
    pub pattern_total: usize,
    pub m: usize,
    /// Rows for patterns `1..V` in canonical order; pattern 0 is the
    /// reference with implicit zeros.
    pub beta: Vec<Vec<f64>>,
    pub convergence: Convergence,
    /// Flattened `dim x dim` coefficient covariance (inverse observed
    /// information), row-major.
    pub covariance: Vec<f64>,
}

impl FittedMultinomial {
    fn beta_flat(&self) -> Vec<f64> {
        self.beta.iter().flatten().copied().collect()
    }

    /// Pattern probabilities, optionally restricted to the supersets of a
    /// previous pattern and renormalized (the Markov transition law).
    pub fn probabilities_restricted(
        &self,
        x: &CovariateVector,
        prev: Option<ActivationPattern>,
    ) -> Vec<f64> {
        assert_eq!(x.len(), self.m, "covariate vector length mismatch");
        let mut eta = vec![0.0; self.pattern_total];
        let flat = self.beta_flat();
        linear_predictors(&flat, x.as_slice(), self.pattern_total, self.m, &mut eta);
        let mut probs = vec![0.0; self.pattern_total];
        softmax_into(&eta, prev.map(|p| p.mask()).unwrap_or(0), &mut probs);
        probs
    }

    /// Standard errors in the same layout as `beta`.
    pub fn standard_errors(&self) -> Vec<Vec<f64>> {
        let dim = (self.pattern_total - 1) * self.m;
        (0..self.pattern_total - 1)
            .map(|row| {
                (0..self.m)
                    .map(|k| {
                        let idx = row * self.m + k;
                        self.covariance[idx * dim + idx].max(0.0).sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fit the pattern model by maximum likelihood.
///
/// Data containing a single distinct pattern is completely separated and is
/// rejected unless a ridge penalty is supplied.
pub fn fit_multinomial(
    data: &MultinomialDataset,
    period: &str,
    coverage_count: usize,
    options: &FitOptions,
) -> Result<FittedMultinomial> {
    let v_total = pattern_count(coverage_count)?;
    if v_total != data.pattern_total {
        return Err(Error::Config(
            "dataset coverage count does not match the requested fit".into(),
        ));
    }
    if data.is_empty() || (data.distinct_patterns() < 2 && options.ridge <= 0.0) {
        return Err(Error::Separation(format!(
            "{} distinct activation patterns observed; supply a ridge penalty to fit anyway",
            data.distinct_patterns()
        )));
    }

    let objective = MultinomialObjective { data, ridge: options.ridge };
    let dim = (v_total - 1) * data.m;
    let maximum = maximize(&objective, vec![0.0; dim], &options.newton)?;
    let covariance = covariance_from_information(&maximum.information);

    let beta = (0..v_total - 1)
        .map(|row| maximum.theta[row * data.m..(row + 1) * data.m].to_vec())
        .collect();
    Ok(FittedMultinomial {
        period: period.to_string(),
        coverage_count,
        pattern_total: v_total,
        m: data.m,
        beta,
        convergence: maximum.convergence,
        covariance: covariance.as_slice().to_vec(),
    })
}

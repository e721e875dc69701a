//! Logistic regression for payment indicators.
//!
//! One model per (period bucket, coverage), fitted on the claim-years where
//! the coverage is active; the response is whether a payment was recorded.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitOptions, CHUNK};
use crate::error::{Error, Result};
use crate::opt::{covariance_from_information, maximize, Convergence, Objective};
use crate::schema::CovariateVector;

#[derive(Debug, Clone, Default)]
pub struct BernoulliDataset {
    m: usize,
    x: Vec<f64>,
    y: Vec<bool>,
}

impl BernoulliDataset {
    pub fn new(m: usize) -> Self {
        BernoulliDataset { m, x: Vec::new(), y: Vec::new() }
    }

    pub fn push(&mut self, x: &CovariateVector, paid: bool) {
        assert_eq!(x.len(), self.m, "covariate vector length mismatch");
        self.x.extend_from_slice(x.as_slice());
        self.y.push(paid);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&b| b).count()
    }
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(eta))` without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 30.0 {
        eta + (-eta).exp()
    } else if eta < -30.0 {
        eta.exp()
    } else {
        eta.exp().ln_1p()
    }
}

/// Log-likelihood and gradient; empty data gives `(0, zeros)`.
pub fn loglik_and_gradient(gamma: &[f64], data: &BernoulliDataset) -> (f64, Vec<f64>) {
    let m = data.m;
    assert_eq!(gamma.len(), m, "coefficient dimension mismatch");
    if data.is_empty() {
        return (0.0, vec![0.0; m]);
    }
    let n = data.len();
    let chunk_results: Vec<(f64, Vec<f64>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ll = 0.0;
            let mut grad = vec![0.0; m];
            for &i in chunk {
                let x = &data.x[i * m..(i + 1) * m];
                let mut eta = 0.0;
                for k in 0..m {
                    eta += gamma[k] * x[k];
                }
                let y = if data.y[i] { 1.0 } else { 0.0 };
                ll += y * eta - softplus(eta);
                let resid = y - sigmoid(eta);
                for k in 0..m {
                    grad[k] += resid * x[k];
                }
            }
            (ll, grad)
        })
        .collect();

    let mut ll = 0.0;
    let mut grad = vec![0.0; m];
    for (l, g) in chunk_results {
        ll += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    (ll, grad)
}

struct BernoulliObjective<'a> {
    data: &'a BernoulliDataset,
    ridge: f64,
}

impl Objective for BernoulliObjective<'_> {
    fn dim(&self) -> usize {
        self.data.m
    }

    fn n_obs(&self) -> usize {
        self.data.len()
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (mut ll, mut grad) = loglik_and_gradient(theta, self.data);
        if self.ridge > 0.0 {
            for k in 1..theta.len() {
                ll -= 0.5 * self.ridge * theta[k] * theta[k];
                grad[k] -= self.ridge * theta[k];
            }
        }
        (ll, grad)
    }

    fn hessian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let m = self.data.m;
        let n = self.data.len();
        let chunk_results: Vec<Vec<f64>> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut h = vec![0.0; m * m];
                for &i in chunk {
                    let x = &self.data.x[i * m..(i + 1) * m];
                    let mut eta = 0.0;
                    for k in 0..m {
                        eta += theta[k] * x[k];
                    }
                    let p = sigmoid(eta);
                    let w = p * (1.0 - p);
                    for k in 0..m {
                        let wxk = w * x[k];
                        for l in 0..m {
                            h[k * m + l] -= wxk * x[l];
                        }
                    }
                }
                h
            })
            .collect();
        let mut flat = vec![0.0; m * m];
        for h in chunk_results {
            for (acc, v) in flat.iter_mut().zip(&h) {
                *acc += v;
            }
        }
        let mut hess = DMatrix::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                hess[(r, c)] = flat[r * m + c];
            }
        }
        if self.ridge > 0.0 {
            for k in 1..m {
                hess[(k, k)] -= self.ridge;
            }
        }
        Some(hess)
    }
}

/// A fitted payment-indicator model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedBernoulli {
    pub period: String,
    pub coverage: usize,
    pub gamma: Vec<f64>,
    pub convergence: Convergence,
    /// Flattened `m x m` covariance, row-major.
    pub covariance: Vec<f64>,
}

impl FittedBernoulli {
    pub fn probability(&self, x: &CovariateVector) -> f64 {
        assert_eq!(x.len(), self.gamma.len(), "covariate vector length mismatch");
        let eta: f64 = self.gamma.iter().zip(x.as_slice()).map(|(g, v)| g * v).sum();
        sigmoid(eta)
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        let m = self.gamma.len();
        (0..m).map(|k| self.covariance[k * m + k].max(0.0).sqrt()).collect()
    }
}

/// Fit a payment model by maximum likelihood. All-0 or all-1 responses are
/// completely separated and rejected unless a ridge penalty is supplied.
pub fn fit_bernoulli(
    data: &BernoulliDataset,
    period: &str,
    coverage: usize,
    options: &FitOptions,
) -> Result<FittedBernoulli> {
    let positives = data.positives();
    if data.is_empty() || ((positives == 0 || positives == data.len()) && options.ridge <= 0.0) {
        return Err(Error::Separation(format!(
            "{positives} of {} responses positive; supply a ridge penalty to fit anyway",
            data.len()
        )));
    }
    let objective = BernoulliObjective { data, ridge: options.ridge };
    let maximum = maximize(&objective, vec![0.0; data.m], &options.newton)?;
    let covariance = covariance_from_information(&maximum.information);
    Ok(FittedBernoulli {
        period: period.to_string(),
        coverage,
        gamma: maximum.theta,
        convergence: maximum.convergence,
        covariance: covariance.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only() -> CovariateVector {
        CovariateVector(vec![1.0])
    }

    #[test]
    fn intercept_only_matches_empirical_rate() {
        // 10,000 observations with exactly 8,203 positives.
        let mut data = BernoulliDataset::new(1);
        for i in 0..10_000 {
            data.push(&intercept_only(), i < 8_203);
        }
        let fit = fit_bernoulli(&data, "j=1", 2, &FitOptions::default()).unwrap();
        let p = fit.probability(&intercept_only());
        assert!((p - 0.8203).abs() < 1e-8, "p = {p}");
    }

    #[test]
    fn all_one_responses_are_separation() {
        let mut data = BernoulliDataset::new(1);
        for _ in 0..20 {
            data.push(&intercept_only(), true);
        }
        assert!(matches!(
            fit_bernoulli(&data, "j=1", 0, &FitOptions::default()),
            Err(Error::Separation(_))
        ));
        let opts = FitOptions { ridge: 1e-6, ..Default::default() };
        // Intercept is unpenalized, so an intercept-only all-one fit still
        // diverges; with a slope covariate the ridge makes it fittable.
        let mut data2 = BernoulliDataset::new(2);
        for i in 0..20 {
            data2.push(&CovariateVector(vec![1.0, (i % 5) as f64 - 2.0]), i % 4 != 0);
        }
        assert!(fit_bernoulli(&data2, "j=1", 0, &opts).is_ok());
    }

    #[test]
    fn fitted_probabilities_in_unit_interval() {
        let mut data = BernoulliDataset::new(2);
        for i in 0..200 {
            let x = CovariateVector(vec![1.0, (i as f64 / 40.0) - 2.0]);
            data.push(&x, i % 3 == 0);
        }
        let fit = fit_bernoulli(&data, "j=2+", 1, &FitOptions::default()).unwrap();
        for i in 0..200 {
            let x = CovariateVector(vec![1.0, (i as f64 / 40.0) - 2.0]);
            let p = fit.probability(&x);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn empty_dataset_gives_zero_loglik() {
        let data = BernoulliDataset::new(3);
        let (ll, grad) = loglik_and_gradient(&[0.0, 0.0, 0.0], &data);
        assert_eq!(ll, 0.0);
        assert_eq!(grad, vec![0.0; 3]);
    }
}

//! Maximum-likelihood fitting for the activation-pattern multinomial model
//! and the per-coverage Bernoulli payment models.
//!
//! Both fits share the Newton maximizer in [`crate::opt`]. Likelihood
//! contributions are accumulated over fixed-size observation chunks that may
//! be evaluated in parallel and are always reduced in chunk order, so fits
//! are bit-reproducible for any worker count.

pub mod bernoulli;
pub mod multinomial;

pub use bernoulli::{fit_bernoulli, BernoulliDataset, FittedBernoulli};
pub use multinomial::{
    fit_multinomial, multinomial_probabilities, FittedMultinomial, MultinomialDataset,
};

use crate::error::{Error, Result};
use crate::opt::NewtonOptions;

/// Observation-chunk size for parallel likelihood accumulation. Fixed so the
/// reduction tree (and therefore every floating-point sum) is independent of
/// the number of worker threads.
pub(crate) const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Ridge penalty on non-intercept coefficients; 0 disables it. A small
    /// positive value (1e-6 is a reasonable scale) makes quasi-separated
    /// data fittable.
    pub ridge: f64,
    pub newton: NewtonOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ridge: 0.0, newton: NewtonOptions::default() }
    }
}

/// Restrict a probability vector to `allowed` indices and rescale to sum 1.
///
/// Entries outside `allowed` become 0; entries inside stay proportional to
/// the input. Errors when the allowed indices carry no probability mass.
pub fn renormalize(probs: &[f64], allowed: &[usize]) -> Result<Vec<f64>> {
    let mut keep = vec![false; probs.len()];
    for &idx in allowed {
        if idx >= probs.len() {
            return Err(Error::Config(format!(
                "allowed index {idx} out of range for {} patterns",
                probs.len()
            )));
        }
        keep[idx] = true;
    }
    let mass: f64 = probs
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateSupport);
    }
    Ok(probs
        .iter()
        .zip(&keep)
        .map(|(p, &k)| if k { p / mass } else { 0.0 })
        .collect())
}

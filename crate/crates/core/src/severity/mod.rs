//! Parametric severity models per (period bucket, coverage).
//!
//! The location parameter follows a log link on the covariates plus a
//! development-year effect, `location = exp(x'alpha + alpha_star * j)`; shape
//! parameters are constants stored on log scale. Five families are supported
//! and compared by AIC/BIC. Heavy-tail families (Pareto, GB2) are fitted
//! under a soft barrier keeping the mean finite, with a hard post-fit check.

mod families;

pub use families::{Dist, SeverityFamily};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::opt::{covariance_from_information, maximize, Convergence, NewtonOptions, Objective};
use crate::schema::CovariateVector;

use families::softplus;

const CHUNK: usize = 4096;

/// Margin by which fitted tail indices must clear the finite-mean boundary.
const TAIL_MARGIN: f64 = 0.05;

/// Minimum sample count for a severity fit.
pub const MIN_SEVERITY_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, Default)]
pub struct SeverityDataset {
    m: usize,
    x: Vec<f64>,
    dev_year: Vec<f64>,
    y: Vec<f64>,
    ln_y: Vec<f64>,
}

impl SeverityDataset {
    pub fn new(m: usize) -> Self {
        SeverityDataset { m, x: Vec::new(), dev_year: Vec::new(), y: Vec::new(), ln_y: Vec::new() }
    }

    /// Add one observed payment. Amounts must be strictly positive.
    pub fn push(&mut self, x: &CovariateVector, dev_year: u32, amount: f64) -> Result<()> {
        assert_eq!(x.len(), self.m, "covariate vector length mismatch");
        if !(amount > 0.0) || !amount.is_finite() {
            return Err(Error::Amount(format!(
                "severity amounts must be strictly positive, got {amount}"
            )));
        }
        self.x.extend_from_slice(x.as_slice());
        self.dev_year.push(dev_year as f64);
        self.y.push(amount);
        self.ln_y.push(amount.ln());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn has_dev_variation(&self) -> bool {
        self.dev_year
            .iter()
            .any(|&j| j != self.dev_year[0])
    }
}

/// Unpack a parameter vector into (alpha, alpha_star, shapes on natural scale).
struct Params<'a> {
    alpha: &'a [f64],
    alpha_star: f64,
    shapes: Vec<f64>,
}

fn unpack<'a>(
    theta: &'a [f64],
    m: usize,
    dev_effect: bool,
    family: SeverityFamily,
) -> Params<'a> {
    let shape_start = m + usize::from(dev_effect);
    Params {
        alpha: &theta[..m],
        alpha_star: if dev_effect { theta[m] } else { 0.0 },
        shapes: theta[shape_start..shape_start + family.shape_count()]
            .iter()
            .map(|v| v.exp())
            .collect(),
    }
}

/// Log-likelihood and gradient of the severity regression; exposed for
/// verification against finite differences. Empty data gives `(0, zeros)`.
///
/// Parameter layout: `[alpha_0..alpha_{m-1}, alpha_star?, log-shapes...]`.
pub fn loglik_and_gradient(
    theta: &[f64],
    data: &SeverityDataset,
    family: SeverityFamily,
    dev_effect: bool,
) -> (f64, Vec<f64>) {
    let m = data.m;
    let dim = m + usize::from(dev_effect) + family.shape_count();
    assert_eq!(theta.len(), dim, "parameter dimension mismatch");
    if data.is_empty() {
        return (0.0, vec![0.0; dim]);
    }
    let params = unpack(theta, m, dev_effect, family);
    // Shapes that under- or overflow the exp of their log-parameterization
    // poison the step; the line search backs off.
    if params
        .shapes
        .iter()
        .any(|s| !s.is_finite() || *s < 1e-12 || *s > 1e12)
    {
        return (f64::NEG_INFINITY, vec![0.0; dim]);
    }

    // Per-call constants shared by all observations.
    enum Consts {
        LogNormal { sigma: f64 },
        Gamma { k: f64, base: f64, dig: f64 },
        Pareto { t: f64 },
        Gb2 { a: f64, p: f64, q: f64, ln_b: f64, dig_p: f64, dig_q: f64, dig_pq: f64 },
        Weibull { k: f64 },
    }
    let consts = match family {
        SeverityFamily::LogNormal => Consts::LogNormal { sigma: params.shapes[0] },
        SeverityFamily::Gamma => {
            let k = params.shapes[0];
            Consts::Gamma { k, base: k * k.ln() - ln_gamma(k), dig: digamma(k) }
        }
        SeverityFamily::Pareto => Consts::Pareto { t: params.shapes[0] },
        SeverityFamily::GeneralizedBeta2 => {
            let (a, p, q) = (params.shapes[0], params.shapes[1], params.shapes[2]);
            Consts::Gb2 {
                a,
                p,
                q,
                ln_b: ln_beta(p, q),
                dig_p: digamma(p),
                dig_q: digamma(q),
                dig_pq: digamma(p + q),
            }
        }
        SeverityFamily::Weibull => Consts::Weibull { k: params.shapes[0] },
    };

    let n = data.len();
    let alpha = params.alpha;
    let alpha_star = params.alpha_star;

    let chunk_results: Vec<Option<(f64, Vec<f64>)>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ll = 0.0;
            let mut grad = vec![0.0; dim];
            for &i in chunk {
                let x = &data.x[i * m..(i + 1) * m];
                let j = data.dev_year[i];
                let mut eta = if dev_effect { alpha_star * j } else { 0.0 };
                for k in 0..m {
                    eta += alpha[k] * x[k];
                }
                let ln_y = data.ln_y[i];
                let u = ln_y - eta;

                // (per-observation log-density, d/d eta, d/d log-shape...)
                let (lf, d_eta, d_shapes): (f64, f64, [f64; 3]) = match consts {
                    Consts::LogNormal { sigma } => {
                        let z = u / sigma;
                        let lf = -ln_y - sigma.ln() - 0.5 * families::LN_2PI - 0.5 * z * z;
                        (lf, u / (sigma * sigma), [-1.0 + z * z, 0.0, 0.0])
                    }
                    Consts::Gamma { k, base, dig } => {
                        if u > 700.0 {
                            (f64::NEG_INFINITY, 0.0, [0.0; 3])
                        } else {
                            let r = u.exp();
                            let lf = base - k * eta + (k - 1.0) * ln_y - k * r;
                            let d_lk = k * (k.ln() + 1.0 - dig + u - r);
                            (lf, k * (r - 1.0), [d_lk, 0.0, 0.0])
                        }
                    }
                    Consts::Pareto { t } => {
                        let sp = softplus(u);
                        let s = sigmoid_local(u);
                        let lf = t.ln() - eta - (t + 1.0) * sp;
                        (lf, -1.0 + (t + 1.0) * s, [1.0 - t * sp, 0.0, 0.0])
                    }
                    Consts::Gb2 { a, p, q, ln_b, dig_p, dig_q, dig_pq } => {
                        let au = a * u;
                        let sp = softplus(au);
                        let s = sigmoid_local(au);
                        let lf = a.ln() + a * p * u - ln_y - ln_b - (p + q) * sp;
                        let d_eta = a * ((p + q) * s - p);
                        let d_la = 1.0 + au * (p - (p + q) * s);
                        let d_lp = p * (a * u - dig_p + dig_pq - sp);
                        let d_lq = q * (-dig_q + dig_pq - sp);
                        (lf, d_eta, [d_la, d_lp, d_lq])
                    }
                    Consts::Weibull { k } => {
                        let ku = k * u;
                        if ku > 700.0 {
                            (f64::NEG_INFINITY, 0.0, [0.0; 3])
                        } else {
                            let w = ku.exp();
                            let lf = k.ln() + (k - 1.0) * ln_y - k * eta - w;
                            (lf, k * (w - 1.0), [1.0 + ku * (1.0 - w), 0.0, 0.0])
                        }
                    }
                };

                if !lf.is_finite() {
                    return None;
                }
                ll += lf;
                for k in 0..m {
                    grad[k] += d_eta * x[k];
                }
                if dev_effect {
                    grad[m] += d_eta * j;
                }
                let shape_start = m + usize::from(dev_effect);
                for (s, d) in d_shapes.iter().take(family.shape_count()).enumerate() {
                    grad[shape_start + s] += d;
                }
            }
            Some((ll, grad))
        })
        .collect();

    let mut ll = 0.0;
    let mut grad = vec![0.0; dim];
    for entry in chunk_results {
        match entry {
            Some((l, g)) => {
                ll += l;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            None => return (f64::NEG_INFINITY, vec![0.0; dim]),
        }
    }
    (ll, grad)
}

#[inline]
fn sigmoid_local(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct SeverityObjective<'a> {
    data: &'a SeverityDataset,
    family: SeverityFamily,
    dev_effect: bool,
    /// Weight of the finite-mean barrier; scales with n.
    barrier_weight: f64,
}

impl SeverityObjective<'_> {
    fn dim_inner(&self) -> usize {
        self.data.m + usize::from(self.dev_effect) + self.family.shape_count()
    }

    /// Smooth penalty pushing the tail index away from the infinite-mean
    /// boundary: a squared softplus of `(TAIL_MARGIN - v)` where
    /// `v = theta - 1` (Pareto) or `v = a q - 1` (GB2). Exponentially small
    /// for healthy fits, smooth everywhere.
    fn barrier(&self, theta: &[f64], value: &mut f64, grad: &mut [f64]) {
        let m = self.data.m;
        let shape_start = m + usize::from(self.dev_effect);
        // pen(v) = w (s softplus((margin - v)/s))^2 with scale s = margin.
        let pen = |v: f64| -> (f64, f64) {
            let s = TAIL_MARGIN;
            let z = (TAIL_MARGIN - v) / s;
            let b = s * softplus(z);
            let db_dv = -sigmoid_local(z);
            (self.barrier_weight * b * b, 2.0 * self.barrier_weight * b * db_dv)
        };
        match self.family {
            SeverityFamily::Pareto => {
                let t = theta[shape_start].exp();
                let (p, dp_dv) = pen(t - 1.0);
                *value -= p;
                grad[shape_start] -= dp_dv * t;
            }
            SeverityFamily::GeneralizedBeta2 => {
                let a = theta[shape_start].exp();
                let q = theta[shape_start + 2].exp();
                let (p, dp_dv) = pen(a * q - 1.0);
                *value -= p;
                grad[shape_start] -= dp_dv * a * q;
                grad[shape_start + 2] -= dp_dv * a * q;
            }
            _ => {}
        }
    }
}

impl Objective for SeverityObjective<'_> {
    fn dim(&self) -> usize {
        self.dim_inner()
    }

    fn n_obs(&self) -> usize {
        self.data.len()
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (mut ll, mut grad) =
            loglik_and_gradient(theta, self.data, self.family, self.dev_effect);
        if ll.is_finite() {
            self.barrier(theta, &mut ll, &mut grad);
        }
        (ll, grad)
    }
}

/// A fitted severity regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedSeverity {
    pub family: SeverityFamily,
    pub period: String,
    pub coverage: usize,
    pub alpha: Vec<f64>,
    /// Development-year coefficient; `None` when all samples share one
    /// development year (the effect is collinear with the intercept there).
    pub alpha_star: Option<f64>,
    /// Family shape parameters on log scale.
    pub log_shapes: Vec<f64>,
    /// Largest development year seen during fitting; the development-year
    /// effect is never extrapolated past it when predicting or sampling.
    pub dev_year_cap: u32,
    pub log_likelihood: f64,
    pub n_used: usize,
    pub convergence: Convergence,
    /// Flattened covariance over `[alpha, alpha_star?, log-shapes]`.
    pub covariance: Vec<f64>,
}

impl FittedSeverity {
    pub fn linear_predictor(&self, x: &CovariateVector, dev_year: u32) -> f64 {
        assert_eq!(x.len(), self.alpha.len(), "covariate vector length mismatch");
        let mut eta: f64 = self.alpha.iter().zip(x.as_slice()).map(|(a, v)| a * v).sum();
        if let Some(star) = self.alpha_star {
            eta += star * dev_year.min(self.dev_year_cap.max(1)) as f64;
        }
        eta
    }

    /// Concrete distribution at covariates `x` and development year `j`.
    pub fn dist(&self, x: &CovariateVector, dev_year: u32) -> Dist {
        let location = self.linear_predictor(x, dev_year).exp();
        let s: Vec<f64> = self.log_shapes.iter().map(|v| v.exp()).collect();
        match self.family {
            SeverityFamily::LogNormal => Dist::LogNormal {
                mu: self.linear_predictor(x, dev_year),
                sigma: s[0],
            },
            SeverityFamily::Gamma => Dist::Gamma { shape: s[0], mean: location },
            SeverityFamily::Pareto => Dist::Pareto { scale: location, shape: s[0] },
            SeverityFamily::GeneralizedBeta2 => {
                Dist::Gb2 { a: s[0], b: location, p: s[1], q: s[2] }
            }
            SeverityFamily::Weibull => Dist::Weibull { shape: s[0], scale: location },
        }
    }

    pub fn mean(&self, x: &CovariateVector, dev_year: u32) -> Option<f64> {
        self.dist(x, dev_year).mean()
    }

    /// Free parameter count: location coefficients + dev-year effect + shapes.
    pub fn k_params(&self) -> usize {
        self.alpha.len() + usize::from(self.alpha_star.is_some()) + self.log_shapes.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        let dim = self.k_params();
        (0..dim).map(|k| self.covariance[k * dim + dim_idx(k, dim)].max(0.0).sqrt()).collect()
    }
}

#[inline]
fn dim_idx(k: usize, _dim: usize) -> usize {
    k
}

pub fn default_severity_newton() -> NewtonOptions {
    NewtonOptions { max_iterations: 500, ..NewtonOptions::default() }
}

/// Ordinary least squares of `ln y` on the location design, used as the
/// warm start for every family.
fn location_init(data: &SeverityDataset, dev_effect: bool) -> Vec<f64> {
    let m = data.m;
    let d = m + usize::from(dev_effect);
    let n = data.len();
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xtz = DVector::<f64>::zeros(d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        row[..m].copy_from_slice(&data.x[i * m..(i + 1) * m]);
        if dev_effect {
            row[m] = data.dev_year[i];
        }
        for r in 0..d {
            xtz[r] += row[r] * data.ln_y[i];
            for c in 0..d {
                xtx[(r, c)] += row[r] * row[c];
            }
        }
    }
    for i in 0..d {
        xtx[(i, i)] += 1e-9 * n as f64;
    }
    xtx.cholesky()
        .map(|ch| ch.solve(&xtz).as_slice().to_vec())
        .unwrap_or_else(|| vec![0.0; d])
}

fn residual_stats(data: &SeverityDataset, loc: &[f64], dev_effect: bool) -> (f64, f64, f64) {
    let m = data.m;
    let n = data.len() as f64;
    let mut sum_e = 0.0;
    let mut sum_e2 = 0.0;
    let mut sum_r = 0.0;
    let mut sum_r2 = 0.0;
    for i in 0..data.len() {
        let x = &data.x[i * m..(i + 1) * m];
        let mut eta = if dev_effect { loc[m] * data.dev_year[i] } else { 0.0 };
        for k in 0..m {
            eta += loc[k] * x[k];
        }
        let e = data.ln_y[i] - eta;
        sum_e += e;
        sum_e2 += e * e;
        let r = e.clamp(-30.0, 30.0).exp();
        sum_r += r;
        sum_r2 += r * r;
    }
    let mean_e = sum_e / n;
    let sd_e = ((sum_e2 / n - mean_e * mean_e).max(1e-6)).sqrt();
    let mean_r = sum_r / n;
    let var_r = (sum_r2 / n - mean_r * mean_r).max(1e-6);
    (sd_e, mean_r, var_r)
}

/// Fit one family by maximum likelihood.
///
/// The development-year effect is included only when the sample spans more
/// than one development year; with a single year it is collinear with the
/// intercept and is fixed at zero (and excluded from the parameter count).
pub fn fit_severity(
    data: &SeverityDataset,
    family: SeverityFamily,
    period: &str,
    coverage: usize,
    newton: &NewtonOptions,
) -> Result<FittedSeverity> {
    if data.len() < MIN_SEVERITY_SAMPLES {
        return Err(Error::Config(format!(
            "severity fit needs at least {MIN_SEVERITY_SAMPLES} samples, got {}",
            data.len()
        )));
    }
    let dev_effect = data.has_dev_variation();
    let m = data.m;
    let loc0 = location_init(data, dev_effect);
    let (sd_e, mean_r, var_r) = residual_stats(data, &loc0, dev_effect);

    let base_starts: Vec<Vec<f64>> = match family {
        SeverityFamily::LogNormal => vec![vec![sd_e.ln()]],
        SeverityFamily::Gamma => {
            let k0 = (1.0 / var_r).clamp(0.05, 50.0);
            vec![vec![k0.ln()]]
        }
        SeverityFamily::Pareto => {
            let t0 = (1.0 + 1.0 / mean_r.max(1e-3)).clamp(1.2, 50.0);
            vec![vec![t0.ln()]]
        }
        SeverityFamily::GeneralizedBeta2 => [0.8_f64, 1.6, 3.0]
            .iter()
            .map(|&a0| {
                let q0 = 1.5 / a0 + 1.0;
                vec![a0.ln(), 0.0, q0.ln()]
            })
            .collect(),
        SeverityFamily::Weibull => {
            let k0 = (std::f64::consts::PI / (sd_e * 6.0_f64.sqrt())).clamp(0.1, 20.0);
            vec![vec![k0.ln()]]
        }
    };

    let objective = SeverityObjective {
        data,
        family,
        dev_effect,
        barrier_weight: data.len() as f64,
    };

    let mut best: Option<crate::opt::Maximum> = None;
    let mut last_err: Option<Error> = None;
    for shapes0 in base_starts {
        let mut theta0 = loc0.clone();
        theta0.extend_from_slice(&shapes0);
        match maximize(&objective, theta0, newton) {
            Ok(max) => {
                if best
                    .as_ref()
                    .map(|b| max.convergence.log_likelihood > b.convergence.log_likelihood)
                    .unwrap_or(true)
                {
                    best = Some(max);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let maximum = match best {
        Some(b) => b,
        None => return Err(last_err.expect("at least one start attempted")),
    };

    let shape_start = m + usize::from(dev_effect);
    let theta = &maximum.theta;
    let log_shapes = theta[shape_start..].to_vec();

    // Hard finite-mean check, independent of the soft barrier.
    match family {
        SeverityFamily::Pareto => {
            let t = log_shapes[0].exp();
            if t <= 1.0 {
                return Err(Error::InfiniteMean(format!(
                    "pareto tail index {t:.4} <= 1"
                )));
            }
        }
        SeverityFamily::GeneralizedBeta2 => {
            let aq = log_shapes[0].exp() * log_shapes[2].exp();
            if aq <= 1.0 {
                return Err(Error::InfiniteMean(format!("GB2 a*q = {aq:.4} <= 1")));
            }
        }
        _ => {}
    }

    // Pure (unpenalized) log-likelihood at the optimum for AIC/BIC.
    let (ll, _) = loglik_and_gradient(theta, data, family, dev_effect);
    let covariance = covariance_from_information(&maximum.information);

    let dev_year_cap = data.dev_year.iter().fold(1.0_f64, |a, &b| a.max(b)) as u32;
    Ok(FittedSeverity {
        family,
        period: period.to_string(),
        coverage,
        alpha: theta[..m].to_vec(),
        alpha_star: dev_effect.then(|| theta[m]),
        log_shapes,
        dev_year_cap,
        log_likelihood: ll,
        n_used: data.len(),
        convergence: maximum.convergence,
        covariance: covariance.as_slice().to_vec(),
    })
}

/// `AIC = -2 ll + 2k`, `BIC = -2 ll + k ln n`.
pub fn information_criteria(fit: &FittedSeverity) -> (f64, f64) {
    let k = fit.k_params() as f64;
    let n = fit.n_used as f64;
    (-2.0 * fit.log_likelihood + 2.0 * k, -2.0 * fit.log_likelihood + k * n.ln())
}

/// Pick the family minimizing the criterion among converged fits. Ties break
/// to fewer parameters, then to the fixed family order.
pub fn select_family(fits: &[FittedSeverity], criterion: Criterion) -> Result<SeverityFamily> {
    if fits.is_empty() {
        return Err(Error::NoModel("no converged severity fits to select from".into()));
    }
    let score = |f: &FittedSeverity| -> f64 {
        let (aic, bic) = information_criteria(f);
        match criterion {
            Criterion::Aic => aic,
            Criterion::Bic => bic,
        }
    };
    let order = |fam: SeverityFamily| {
        SeverityFamily::ALL.iter().position(|f| *f == fam).expect("known family")
    };
    let mut best = &fits[0];
    for f in &fits[1..] {
        let (sf, sb) = (score(f), score(best));
        let better = sf < sb
            || (sf == sb
                && (f.k_params() < best.k_params()
                    || (f.k_params() == best.k_params()
                        && order(f.family) < order(best.family))));
        if better {
            best = f;
        }
    }
    Ok(best.family)
}

/// Draw one severity at covariates `x` and development year `j`.
pub fn sample_severity<R: Rng + ?Sized>(
    model: &FittedSeverity,
    x: &CovariateVector,
    dev_year: u32,
    rng: &mut R,
) -> f64 {
    model.dist(x, dev_year).sample(rng)
}

/// Draw the stabilized-claim final severity `max(paid_to_date, D)` where `D`
/// is a fresh draw at development year `j_ref`. The output never falls below
/// `paid_to_date`.
pub fn sample_conditional_max<R: Rng + ?Sized>(
    model: &FittedSeverity,
    x: &CovariateVector,
    paid_to_date: f64,
    j_ref: u32,
    rng: &mut R,
) -> f64 {
    assert!(paid_to_date >= 0.0, "paid_to_date must be nonnegative");
    let draw = sample_severity(model, x, j_ref, rng);
    let out = draw.max(paid_to_date);
    assert!(out >= paid_to_date);
    out
}

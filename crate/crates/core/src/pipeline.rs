//! End-to-end model fitting: datasets from a portfolio at an evaluation
//! date, maximum-likelihood fits per period bucket, severity family
//! selection, and bundle assembly.
//!
//! Observability convention: a development year contributes to fitting only
//! when its calendar year has fully elapsed at the evaluation date and lies
//! on/before the claim's settlement year. Years without a history entry are
//! "stay" observations (the pattern carried forward, no payments).

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::bundle::{ActivationModel, FittedModelBundle, PerPeriod};
use crate::domain::{enumerate_patterns, ClaimRecord, CoverageId};
use crate::error::{Error, Result};
use crate::glm::{
    fit_bernoulli, fit_multinomial, BernoulliDataset, FitOptions, FittedBernoulli,
    MultinomialDataset,
};
use crate::ingest::Portfolio;
use crate::opt::Convergence;
use crate::schema::{encode_covariates, CovariateSchema};
use crate::severity::{
    default_severity_newton, fit_severity, information_criteria, select_family, Criterion,
    FittedSeverity, SeverityDataset, SeverityFamily, MIN_SEVERITY_SAMPLES,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Development years `<= period_split` form the first bucket.
    pub period_split: u32,
    /// Stabilization year for RBNS+ treatment.
    pub j_star: u32,
    /// Simulation horizon stored on the bundle.
    pub horizon: u32,
    pub criterion: Criterion,
    /// Ridge penalty passed to the GLM fits (0 = plain MLE).
    pub ridge: f64,
    /// When set, skip family selection and fit only this family everywhere.
    pub force_family: Option<SeverityFamily>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            period_split: 1,
            j_star: 3,
            horizon: 10,
            criterion: Criterion::Aic,
            ridge: 0.0,
            force_family: None,
        }
    }
}

/// One row of the family-selection table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub period: String,
    pub coverage: String,
    pub family: SeverityFamily,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub model: String,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub selection: Vec<SelectionRow>,
    pub convergence: Vec<ConvergenceRow>,
    pub notes: Vec<String>,
}

impl FitReport {
    fn record(&mut self, model: &str, conv: &Convergence) {
        self.convergence.push(ConvergenceRow {
            model: model.to_string(),
            iterations: conv.iterations,
            final_gradient_norm: conv.final_gradient_norm,
            log_likelihood: conv.log_likelihood,
        });
    }
}

/// All fitting datasets extracted from a portfolio at an evaluation date.
pub struct FitDatasets {
    pub multinomial_first: MultinomialDataset,
    pub multinomial_later: MultinomialDataset,
    pub payment_first: Vec<BernoulliDataset>,
    pub payment_later: Vec<BernoulliDataset>,
    pub severity_first: Vec<SeverityDataset>,
    pub severity_later: Vec<SeverityDataset>,
    /// Year-1 activation flags per coverage (independence baseline).
    pub activation_first: Vec<BernoulliDataset>,
    /// New-activation flags per coverage among previously inactive
    /// claim-years (independence baseline).
    pub activation_later: Vec<BernoulliDataset>,
}

/// Last development year of `claim` that is fully observable at `eval_date`:
/// its calendar year has elapsed and does not postdate settlement.
fn last_complete_dev_year(claim: &ClaimRecord, eval_date: NaiveDate) -> i32 {
    let eval_year = eval_date.year();
    let mut last = claim.dev_year_of(eval_year - 1);
    if let Some(settled) = claim.settlement_date {
        last = last.min(claim.dev_year_of(settled.year()));
    }
    last
}

pub fn build_fit_datasets(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    eval_date: NaiveDate,
) -> Result<FitDatasets> {
    let c = schema.coverage_count();
    let m = schema.encoded_len();
    let mut out = FitDatasets {
        multinomial_first: MultinomialDataset::new(c, m)?,
        multinomial_later: MultinomialDataset::new(c, m)?,
        payment_first: (0..c).map(|_| BernoulliDataset::new(m)).collect(),
        payment_later: (0..c).map(|_| BernoulliDataset::new(m)).collect(),
        severity_first: (0..c).map(|_| SeverityDataset::new(m)).collect(),
        severity_later: (0..c).map(|_| SeverityDataset::new(m)).collect(),
        activation_first: (0..c).map(|_| BernoulliDataset::new(m)).collect(),
        activation_later: (0..c).map(|_| BernoulliDataset::new(m)).collect(),
    };

    for claim in &portfolio.claims {
        if claim.report_date > eval_date || claim.occurrence_date > eval_date {
            continue;
        }
        let last_dev = last_complete_dev_year(claim, eval_date);
        if last_dev < 1 {
            continue; // reporting year not yet complete
        }
        let x = encode_covariates(claim, schema)?;

        let mut prev = None;
        for dev in 1..=last_dev as u32 {
            let pattern = claim
                .pattern_through(dev)
                .ok_or_else(|| {
                    Error::DataIntegrity(format!(
                        "claim {} reported without an activation pattern",
                        claim.claim_id
                    ))
                })?;
            let entry = claim.history.iter().find(|h| h.dev_year == dev);

            if dev == 1 {
                out.multinomial_first.push(&x, pattern, None);
                for cov in 0..c {
                    out.activation_first[cov].push(&x, pattern.is_active(CoverageId(cov)));
                }
            } else {
                let prev_pattern = prev.expect("previous year processed");
                out.multinomial_later.push(&x, pattern, Some(prev_pattern));
                for cov in 0..c {
                    let id = CoverageId(cov);
                    if !prev_pattern.is_active(id) {
                        out.activation_later[cov].push(&x, pattern.is_active(id));
                    }
                }
            }

            let (payments, severities) = if dev == 1 {
                (&mut out.payment_first, &mut out.severity_first)
            } else {
                (&mut out.payment_later, &mut out.severity_later)
            };
            for cov in 0..c {
                let id = CoverageId(cov);
                if !pattern.is_active(id) {
                    continue;
                }
                let (paid, amount) = match entry {
                    Some(h) => (h.payments.is_paid(id), h.amounts[cov]),
                    None => (false, crate::money::Money::ZERO),
                };
                payments[cov].push(&x, paid);
                if paid && amount.is_positive() {
                    severities[cov].push(&x, dev, amount.to_dollars())?;
                }
            }
            prev = Some(pattern);
        }
    }
    Ok(out)
}

/// Intercept-only fallback when a payment or activation dataset is
/// degenerate (empty or single-valued): Laplace-smoothed empirical rate,
/// no optimization. Recorded in the fit report.
fn laplace_bernoulli(
    data: &BernoulliDataset,
    period: &str,
    coverage: usize,
    m: usize,
) -> FittedBernoulli {
    let n = data.len() as f64;
    let rate = (data.positives() as f64 + 0.5) / (n + 1.0);
    let mut gamma = vec![0.0; m];
    gamma[0] = (rate / (1.0 - rate)).ln();
    FittedBernoulli {
        period: period.to_string(),
        coverage,
        gamma,
        convergence: Convergence {
            iterations: 0,
            final_gradient_norm: 0.0,
            log_likelihood: 0.0,
            converged: true,
        },
        covariance: vec![0.0; m * m],
    }
}

fn fit_bernoulli_slot(
    data: &BernoulliDataset,
    period: &str,
    coverage: usize,
    coverage_name: &str,
    m: usize,
    options: &FitOptions,
    report: &mut FitReport,
) -> Result<FittedBernoulli> {
    let degenerate =
        data.is_empty() || data.positives() == 0 || data.positives() == data.len();
    if degenerate && options.ridge <= 0.0 {
        report.notes.push(format!(
            "payment model {period}/{coverage_name}: degenerate responses ({} of {}); \
             using a Laplace-smoothed constant rate",
            data.positives(),
            data.len()
        ));
        return Ok(laplace_bernoulli(data, period, coverage, m));
    }
    let fit = fit_bernoulli(data, period, coverage, options)?;
    report.record(&format!("payment {period}/{coverage_name}"), &fit.convergence);
    Ok(fit)
}

fn fit_severity_slot(
    data: &SeverityDataset,
    period: &str,
    coverage: usize,
    coverage_name: &str,
    config: &FitConfig,
    report: &mut FitReport,
) -> Result<Option<FittedSeverity>> {
    if data.len() < MIN_SEVERITY_SAMPLES {
        report.notes.push(format!(
            "severity {period}/{coverage_name}: only {} payments, below the fitting minimum",
            data.len()
        ));
        return Ok(None);
    }
    let newton = default_severity_newton();
    let families: Vec<SeverityFamily> = match config.force_family {
        Some(f) => vec![f],
        None => SeverityFamily::ALL.to_vec(),
    };
    let mut fits = Vec::new();
    for family in families {
        match fit_severity(data, family, period, coverage, &newton) {
            Ok(fit) => fits.push(fit),
            Err(e) => report.notes.push(format!(
                "severity {period}/{coverage_name}: {} fit failed: {e}",
                family.name()
            )),
        }
    }
    if fits.is_empty() {
        return Err(Error::NoModel(format!(
            "severity {period}/{coverage_name}: no family converged"
        )));
    }
    let winner = select_family(&fits, config.criterion)?;
    for fit in &fits {
        let (aic, bic) = information_criteria(fit);
        report.selection.push(SelectionRow {
            period: period.to_string(),
            coverage: coverage_name.to_string(),
            family: fit.family,
            aic,
            bic,
            n: fit.n_used,
            selected: fit.family == winner,
        });
    }
    let chosen = fits.into_iter().find(|f| f.family == winner).expect("winner is in fits");
    report.record(
        &format!("severity {period}/{coverage_name} ({})", chosen.family.name()),
        &chosen.convergence,
    );
    Ok(Some(chosen))
}

fn resolve_severity_pair(
    first: Option<FittedSeverity>,
    later: Option<FittedSeverity>,
    coverage_name: &str,
    report: &mut FitReport,
) -> Result<(FittedSeverity, FittedSeverity)> {
    match (first, later) {
        (Some(f), Some(l)) => Ok((f, l)),
        (Some(f), None) => {
            report.notes.push(format!(
                "severity j=2+/{coverage_name}: reusing the j=1 model (insufficient later-year payments)"
            ));
            let mut l = f.clone();
            l.period = "j=2+".into();
            Ok((f, l))
        }
        (None, Some(l)) => {
            report.notes.push(format!(
                "severity j=1/{coverage_name}: reusing the j=2+ model (insufficient first-year payments)"
            ));
            let mut f = l.clone();
            f.period = "j=1".into();
            Ok((f, l))
        }
        (None, None) => Err(Error::NoModel(format!(
            "coverage {coverage_name}: no severity data in either period"
        ))),
    }
}

fn assemble_bundle(
    schema: &CovariateSchema,
    config: &FitConfig,
    activation: ActivationModel,
    payment: PerPeriod<Vec<FittedBernoulli>>,
    severity: PerPeriod<Vec<FittedSeverity>>,
) -> Result<FittedModelBundle> {
    let bundle = FittedModelBundle {
        schema_fingerprint: schema.fingerprint(),
        coverage_names: schema.coverages.clone(),
        pattern_order: enumerate_patterns(schema.coverage_count())?
            .iter()
            .map(|p| p.mask())
            .collect(),
        period_split: config.period_split,
        j_star: config.j_star,
        horizon: config.horizon,
        activation,
        payment,
        severity,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn fit_shared_parts(
    datasets: &FitDatasets,
    schema: &CovariateSchema,
    config: &FitConfig,
    report: &mut FitReport,
) -> Result<(PerPeriod<Vec<FittedBernoulli>>, PerPeriod<Vec<FittedSeverity>>)> {
    let c = schema.coverage_count();
    let m = schema.encoded_len();
    let glm_options = FitOptions { ridge: config.ridge, ..Default::default() };

    let mut payment_first = Vec::with_capacity(c);
    let mut payment_later = Vec::with_capacity(c);
    let mut severity_first = Vec::with_capacity(c);
    let mut severity_later = Vec::with_capacity(c);
    for cov in 0..c {
        let name = &schema.coverages[cov];
        payment_first.push(fit_bernoulli_slot(
            &datasets.payment_first[cov],
            "j=1",
            cov,
            name,
            m,
            &glm_options,
            report,
        )?);
        payment_later.push(fit_bernoulli_slot(
            &datasets.payment_later[cov],
            "j=2+",
            cov,
            name,
            m,
            &glm_options,
            report,
        )?);
        let first = fit_severity_slot(&datasets.severity_first[cov], "j=1", cov, name, config, report)?;
        let later =
            fit_severity_slot(&datasets.severity_later[cov], "j=2+", cov, name, config, report)?;
        let (f, l) = resolve_severity_pair(first, later, name, report)?;
        severity_first.push(f);
        severity_later.push(l);
    }
    Ok((
        PerPeriod { first: payment_first, later: payment_later },
        PerPeriod { first: severity_first, later: severity_later },
    ))
}

/// Fit the activation-pattern model bundle on a portfolio.
pub fn fit_bundle(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    eval_date: NaiveDate,
    config: &FitConfig,
) -> Result<(FittedModelBundle, FitReport)> {
    schema.validate()?;
    let datasets = build_fit_datasets(portfolio, schema, eval_date)?;
    let mut report = FitReport::default();
    let c = schema.coverage_count();
    let glm_options = FitOptions { ridge: config.ridge, ..Default::default() };

    let multinomial_first =
        fit_multinomial(&datasets.multinomial_first, "j=1", c, &glm_options)?;
    report.record("activation multinomial j=1", &multinomial_first.convergence);
    let multinomial_later =
        fit_multinomial(&datasets.multinomial_later, "j=2+", c, &glm_options)?;
    report.record("activation multinomial j=2+", &multinomial_later.convergence);

    let (payment, severity) = fit_shared_parts(&datasets, schema, config, &mut report)?;
    let bundle = assemble_bundle(
        schema,
        config,
        ActivationModel::Pattern {
            multinomial: PerPeriod { first: multinomial_first, later: multinomial_later },
        },
        payment,
        severity,
    )?;
    Ok((bundle, report))
}

/// Fit the independence-baseline bundle: per-coverage activation Bernoullis,
/// with payment and severity models shared with the pattern pipeline.
pub fn fit_independence_bundle(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    eval_date: NaiveDate,
    config: &FitConfig,
) -> Result<(FittedModelBundle, FitReport)> {
    schema.validate()?;
    let datasets = build_fit_datasets(portfolio, schema, eval_date)?;
    let mut report = FitReport::default();
    let c = schema.coverage_count();
    let m = schema.encoded_len();
    let glm_options = FitOptions { ridge: config.ridge, ..Default::default() };

    let mut first = Vec::with_capacity(c);
    let mut later = Vec::with_capacity(c);
    for cov in 0..c {
        let name = format!("activation:{}", schema.coverages[cov]);
        first.push(fit_bernoulli_slot(
            &datasets.activation_first[cov],
            "j=1",
            cov,
            &name,
            m,
            &glm_options,
            &mut report,
        )?);
        later.push(fit_bernoulli_slot(
            &datasets.activation_later[cov],
            "j=2+",
            cov,
            &name,
            m,
            &glm_options,
            &mut report,
        )?);
    }

    let (payment, severity) = fit_shared_parts(&datasets, schema, config, &mut report)?;
    let bundle = assemble_bundle(
        schema,
        config,
        ActivationModel::Independent {
            activation: PerPeriod { first, later },
        },
        payment,
        severity,
    )?;
    Ok((bundle, report))
}

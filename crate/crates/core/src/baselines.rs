//! Comparison models: the overdispersed-Poisson chain ladder with a
//! Pearson-residual bootstrap, and the independence variant of the
//! activation-pattern model.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::bundle::{ActivationModel, FittedModelBundle};
use crate::error::{Error, Result};
use crate::ingest::Portfolio;
use crate::rng::{Purpose, StreamFactory};
use crate::schema::CovariateSchema;
use crate::sim::{run_reserving, ReservePredictiveDistribution, SimulationConfig};
use crate::triangle::LossTriangle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainLadderResult {
    /// Volume-weighted development factors between successive columns.
    pub development_factors: Vec<f64>,
    /// Pearson dispersion estimate (populated by the bootstrap).
    pub dispersion: Option<f64>,
    pub point_reserve_by_origin: Vec<f64>,
    pub point_reserve_total: f64,
    /// Per-bootstrap-replication total reserves (empty for the point model).
    pub bootstrap_reserves: Vec<f64>,
    /// Per-bootstrap-replication per-origin reserves.
    pub bootstrap_by_origin: Vec<Vec<f64>>,
}

/// Observed cumulative rows (ragged: row `o` has `len[o]` observed columns).
struct CumTriangle {
    rows: Vec<Vec<f64>>,
    /// Development span to project to (max observed row length).
    span: usize,
}

fn cumulative_rows(triangle: &LossTriangle) -> Result<CumTriangle> {
    let mut rows = Vec::with_capacity(triangle.origin_count());
    for o in 0..triangle.origin_count() {
        let len = triangle.observed_len(o);
        let mut row = Vec::with_capacity(len);
        let mut acc = 0.0;
        for d in 0..len {
            debug_assert!(triangle.observed[o][d]);
            acc += triangle.cells[o][d].to_dollars();
            row.push(acc);
        }
        rows.push(row);
    }
    let span = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    if rows.len() < 2 || span < 2 {
        return Err(Error::EmptyTriangle(
            "chain ladder needs at least 2 origin years and 2 observed development years".into(),
        ));
    }
    Ok(CumTriangle { rows, span })
}

/// Volume-weighted factors `f_d = sum C_{o,d+1} / sum C_{o,d}` over rows
/// observing both columns.
fn development_factors(cum: &CumTriangle) -> Result<Vec<f64>> {
    let mut factors = Vec::with_capacity(cum.span - 1);
    for d in 0..cum.span - 1 {
        let mut num = 0.0;
        let mut den = 0.0;
        for row in &cum.rows {
            if row.len() >= d + 2 {
                num += row[d + 1];
                den += row[d];
            }
        }
        if den == 0.0 {
            return Err(Error::UndefinedFactor(d + 1));
        }
        factors.push(num / den);
    }
    Ok(factors)
}

fn project_reserves(cum: &CumTriangle, factors: &[f64]) -> Vec<f64> {
    cum.rows
        .iter()
        .map(|row| {
            let latest = *row.last().expect("observed rows are nonempty");
            let mut ultimate = latest;
            for factor in factors.iter().take(cum.span - 1).skip(row.len() - 1) {
                ultimate *= factor;
            }
            ultimate - latest
        })
        .collect()
}

/// Deterministic chain ladder: factors, ultimates and reserves.
pub fn chain_ladder_point(triangle: &LossTriangle) -> Result<ChainLadderResult> {
    let cum = cumulative_rows(triangle)?;
    let factors = development_factors(&cum)?;
    let by_origin = project_reserves(&cum, &factors);
    let total = by_origin.iter().sum();
    Ok(ChainLadderResult {
        development_factors: factors,
        dispersion: None,
        point_reserve_by_origin: by_origin,
        point_reserve_total: total,
        bootstrap_reserves: Vec::new(),
        bootstrap_by_origin: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OdpBootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
    /// Sample future increments from the overdispersed-Poisson-approximating
    /// Gamma; when false, future increments stay at their fitted means
    /// (estimation error only).
    pub process_error: bool,
    /// Diagnostic switch: skip residual resampling (all residuals zero).
    /// With process error also off, every replication reproduces the point
    /// reserve.
    pub zero_residuals: bool,
}

impl OdpBootstrapConfig {
    pub fn new(n_boot: usize, seed: u64) -> Self {
        OdpBootstrapConfig { n_boot, seed, process_error: true, zero_residuals: false }
    }
}

/// Fitted incremental means from the chain-ladder structure: the latest
/// cumulative is carried backwards through the factors and differenced.
fn fitted_increments(cum: &CumTriangle, factors: &[f64]) -> Vec<Vec<f64>> {
    cum.rows
        .iter()
        .map(|row| {
            let len = row.len();
            let mut fitted_cum = vec![0.0; len];
            fitted_cum[len - 1] = row[len - 1];
            for d in (0..len - 1).rev() {
                fitted_cum[d] = fitted_cum[d + 1] / factors[d];
            }
            let mut incr = Vec::with_capacity(len);
            incr.push(fitted_cum[0]);
            for d in 1..len {
                incr.push(fitted_cum[d] - fitted_cum[d - 1]);
            }
            incr
        })
        .collect()
}

/// England–Verrall-style ODP bootstrap on Pearson residuals.
pub fn chain_ladder_odp_bootstrap(
    triangle: &LossTriangle,
    config: &OdpBootstrapConfig,
) -> Result<ChainLadderResult> {
    if config.n_boot == 0 {
        return Err(Error::Config("n_boot must be >= 1".into()));
    }
    let cum = cumulative_rows(triangle)?;
    let factors = development_factors(&cum)?;
    let point_by_origin = project_reserves(&cum, &factors);
    let point_total: f64 = point_by_origin.iter().sum();

    let fitted = fitted_increments(&cum, &factors);
    let mut residuals = Vec::new();
    let mut n_cells = 0usize;
    let mut pearson_sq = 0.0;
    for (o, row) in cum.rows.iter().enumerate() {
        for d in 0..row.len() {
            let incr = if d == 0 { row[0] } else { row[d] - row[d - 1] };
            let m = fitted[o][d];
            n_cells += 1;
            if m > 0.0 {
                let r = (incr - m) / m.sqrt();
                if r.is_finite() {
                    residuals.push(r);
                    pearson_sq += r * r;
                }
            }
        }
    }
    let p_params = cum.rows.len() + cum.span - 1;
    if n_cells <= p_params {
        return Err(Error::DegenerateDispersion(0.0));
    }
    let dof = (n_cells - p_params) as f64;
    let dispersion = pearson_sq / dof;
    if dispersion <= 0.0 {
        return Err(Error::DegenerateDispersion(dispersion));
    }
    let dof_adjust = (n_cells as f64 / dof).sqrt();
    let adjusted: Vec<f64> = residuals.iter().map(|r| r * dof_adjust).collect();

    let factory = StreamFactory::new(config.seed);
    let mut bootstrap_reserves = Vec::with_capacity(config.n_boot);
    let mut bootstrap_by_origin = Vec::with_capacity(config.n_boot);

    for rep in 0..config.n_boot as u64 {
        let mut residual_rng = factory.stream(rep, 0, Purpose::Residual);
        let mut process_rng = factory.stream(rep, 0, Purpose::Process);

        // Pseudo-triangle from resampled residuals around the fitted means.
        let mut pseudo_rows: Vec<Vec<f64>> = Vec::with_capacity(cum.rows.len());
        for fitted_row in &fitted {
            let mut acc = 0.0;
            let mut row = Vec::with_capacity(fitted_row.len());
            for &m in fitted_row {
                let r = if config.zero_residuals || adjusted.is_empty() {
                    0.0
                } else {
                    adjusted[residual_rng.gen_range(0..adjusted.len())]
                };
                let incr = (m + r * m.max(0.0).sqrt()).max(0.0);
                acc += incr;
                row.push(acc);
            }
            pseudo_rows.push(row);
        }
        let pseudo = CumTriangle { rows: pseudo_rows, span: cum.span };
        let pseudo_factors = development_factors(&pseudo)?;

        // Project future increments and add process error.
        let mut by_origin = Vec::with_capacity(pseudo.rows.len());
        for row in &pseudo.rows {
            let mut reserve = 0.0;
            let mut cum_value = *row.last().expect("nonempty row");
            for factor in pseudo_factors.iter().take(cum.span - 1).skip(row.len() - 1) {
                let next = cum_value * factor;
                let mean_incr = next - cum_value;
                let draw = if !config.process_error || mean_incr <= 0.0 {
                    mean_incr.max(0.0)
                } else {
                    let gamma = rand_distr::Gamma::new(mean_incr / dispersion, dispersion)
                        .map_err(|e| Error::Config(format!("process gamma: {e}")))?;
                    gamma.sample(&mut process_rng)
                };
                reserve += draw;
                cum_value = next;
            }
            by_origin.push(reserve);
        }
        bootstrap_reserves.push(by_origin.iter().sum());
        bootstrap_by_origin.push(by_origin);
    }

    Ok(ChainLadderResult {
        development_factors: factors,
        dispersion: Some(dispersion),
        point_reserve_by_origin: point_by_origin,
        point_reserve_total: point_total,
        bootstrap_reserves,
        bootstrap_by_origin,
    })
}

/// The independence baseline: identical simulation pipeline, with activation
/// drawn from per-coverage Bernoulli models instead of the pattern model.
pub fn independence_reserving(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    bundle: &FittedModelBundle,
    config: &SimulationConfig,
) -> Result<ReservePredictiveDistribution> {
    match bundle.activation {
        ActivationModel::Independent { .. } => run_reserving(portfolio, schema, bundle, config),
        _ => Err(Error::Config(
            "independence_reserving requires a bundle with independent activation models".into(),
        )),
    }
}

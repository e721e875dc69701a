//! Simulation routines for IBNR, RBNS and stabilized (RBNS+) claims, and the
//! Monte Carlo predictive reserve distribution.
//!
//! Draw discipline: every claim in every replication owns three independent
//! streams (activation, payment, severity) keyed by `(master seed,
//! replication, claim ordinal)`. Within a stream, draws occur in fixed
//! (development year, coverage) order, and structural zeros consume no draws.
//! Replications are independent work units; running them on 1 or N worker
//! threads yields bit-identical output.

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::bundle::{ActivationModel, FittedModelBundle};
use crate::domain::{
    classify_claim_status, reachable_patterns, ActivationPattern, ClaimRecord, ClaimStatus,
    CoverageId, PaymentVector,
};
use crate::error::{Error, Result};
use crate::ingest::Portfolio;
use crate::money::Money;
use crate::rng::{DrawStreams, Purpose, StreamFactory};
use crate::schema::{encode_covariates, CovariateSchema, CovariateVector};
use crate::severity::{sample_conditional_max, sample_severity};

/// How many synthetic IBNR claims to instantiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IbnrSpec {
    /// Explicit counts per occurrence year.
    Explicit(Vec<(i32, usize)>),
    /// Estimate per occurrence year from the empirical reporting-delay
    /// distribution: unreported-to-reported ratio times the reported count.
    DelayEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_replications: usize,
    pub master_seed: u64,
    pub evaluation_date: NaiveDate,
    /// Overrides the bundle's simulation horizon when set.
    pub horizon: Option<u32>,
    pub ibnr: IbnrSpec,
}

impl SimulationConfig {
    pub fn new(evaluation_date: NaiveDate, master_seed: u64) -> Self {
        SimulationConfig {
            n_replications: 5_000,
            master_seed,
            evaluation_date,
            horizon: None,
            ibnr: IbnrSpec::DelayEstimate,
        }
    }
}

/// Claim classes tracked in the predictive distribution: synthetic
/// not-yet-reported claims versus reported open claims (RBNP, RBNS, RBNS+).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimClass {
    Ibnr,
    Reported,
}

/// One simulated development year of one claim.
#[derive(Debug, Clone)]
pub struct YearCashflow {
    pub dev_year: u32,
    pub pattern: ActivationPattern,
    pub payments: PaymentVector,
    pub amounts: Vec<Money>,
}

impl YearCashflow {
    fn assert_structural_zeros(&self) {
        assert!(
            self.payments.is_subset_of(self.pattern),
            "payment mask must be a subset of the activation mask"
        );
        for (c, amt) in self.amounts.iter().enumerate() {
            assert!(
                !amt.is_positive() || self.payments.is_paid(CoverageId(c)),
                "positive amount requires a payment flag"
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub total: Money,
    pub by_coverage: Vec<Money>,
    /// Indexed by [`ClaimClass`]: `[ibnr, reported]`.
    pub by_class: [Money; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservePredictiveDistribution {
    pub coverage_count: usize,
    pub master_seed: u64,
    pub replications: Vec<ReplicationOutcome>,
    /// Set when there was nothing to simulate (no open claims, no IBNR).
    pub empty_warning: bool,
}

fn draw_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(0.0..1.0)
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = draw_uniform(rng);
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = idx;
            if u < cum {
                return idx;
            }
        }
    }
    last_positive
}

/// Draw the activation pattern for one development year.
fn draw_pattern<R: Rng + ?Sized>(
    bundle: &FittedModelBundle,
    x: &CovariateVector,
    dev_year: u32,
    prev: Option<ActivationPattern>,
    rng: &mut R,
) -> Result<ActivationPattern> {
    let c = bundle.coverage_count();
    match &bundle.activation {
        ActivationModel::Pattern { multinomial } => {
            let model = multinomial.get(dev_year, bundle.period_split);
            let probs = model.probabilities_restricted(x, prev);
            let idx = sample_categorical(&probs, rng);
            let pattern = ActivationPattern::from_index(idx, c)?;
            if let Some(p) = prev {
                assert!(pattern.is_superset_of(p), "transition must keep active coverages");
            }
            Ok(pattern)
        }
        ActivationModel::Independent { activation } => {
            let models = activation.get(dev_year, bundle.period_split);
            match prev {
                // First year: independent flags, redrawn until at least one
                // coverage activates.
                None => loop {
                    let mut mask = 0u16;
                    for (cov, model) in models.iter().enumerate() {
                        if draw_uniform(rng) < model.probability(x) {
                            mask |= 1 << cov;
                        }
                    }
                    if mask != 0 {
                        return ActivationPattern::from_mask(mask);
                    }
                },
                // Later years: active coverages stay active; inactive ones
                // activate independently.
                Some(p) => {
                    let mut mask = p.mask();
                    for (cov, model) in models.iter().enumerate() {
                        if mask & (1 << cov) == 0 && draw_uniform(rng) < model.probability(x) {
                            mask |= 1 << cov;
                        }
                    }
                    ActivationPattern::from_mask(mask)
                }
            }
        }
        ActivationModel::Scripted { patterns } => {
            let idx = (dev_year as usize - 1).min(patterns.len() - 1);
            let pattern = patterns[idx];
            if let Some(p) = prev {
                assert!(
                    pattern.is_superset_of(p),
                    "scripted path must respect absorbing activation"
                );
            }
            Ok(pattern)
        }
    }
}

/// Draw payments and severities for the active coverages of one year.
fn draw_payments(
    bundle: &FittedModelBundle,
    x: &CovariateVector,
    dev_year: u32,
    pattern: ActivationPattern,
    streams: &mut DrawStreams,
) -> YearCashflow {
    let c = bundle.coverage_count();
    let payment_models = bundle.payment.get(dev_year, bundle.period_split);
    let severity_models = bundle.severity.get(dev_year, bundle.period_split);
    let mut payments = PaymentVector::empty();
    let mut amounts = vec![Money::ZERO; c];
    for cov in 0..c {
        if !pattern.is_active(CoverageId(cov)) {
            continue; // structural zero: no payment, no severity, no draw
        }
        let paid = draw_uniform(&mut streams.payment) < payment_models[cov].probability(x);
        if paid {
            payments.set(CoverageId(cov));
            let dollars =
                sample_severity(&severity_models[cov], x, dev_year, &mut streams.severity);
            amounts[cov] = Money::from_dollars(dollars).max(Money::from_cents(1));
        }
    }
    let flow = YearCashflow { dev_year, pattern, payments, amounts };
    flow.assert_structural_zeros();
    flow
}

/// Simulate a newly instantiated (IBNR) claim over development years
/// `1..=horizon`: first-year pattern from the unrestricted model, later years
/// restricted to reachable patterns and renormalized.
pub fn simulate_claim_ibnr(
    x: &CovariateVector,
    bundle: &FittedModelBundle,
    streams: &mut DrawStreams,
) -> Result<Vec<YearCashflow>> {
    let horizon = bundle.horizon;
    let mut flows = Vec::with_capacity(horizon as usize);
    let mut state: Option<ActivationPattern> = None;
    for dev_year in 1..=horizon {
        let pattern = draw_pattern(bundle, x, dev_year, state, &mut streams.activation)?;
        if let Some(prev) = state {
            debug_assert!(
                reachable_patterns(prev, bundle.coverage_count())?.contains(&pattern)
            );
        }
        flows.push(draw_payments(bundle, x, dev_year, pattern, streams));
        state = Some(pattern);
    }
    Ok(flows)
}

/// Precomputed per-claim state for the reported-claim routines.
#[derive(Debug, Clone)]
struct OpenClaimState {
    status: ClaimStatus,
    dev_now: u32,
    pattern: ActivationPattern,
    paid_to_date: Vec<Money>,
}

fn open_claim_state(
    claim: &ClaimRecord,
    eval_date: NaiveDate,
    bundle: &FittedModelBundle,
) -> Result<OpenClaimState> {
    let status = classify_claim_status(claim, eval_date, bundle.j_star)
        .ok_or_else(|| Error::InvalidStatus(format!("claim {} not yet occurred", claim.claim_id)))?;
    match status {
        ClaimStatus::Rbnp | ClaimStatus::Rbns | ClaimStatus::RbnsPlus => {}
        other => {
            return Err(Error::InvalidStatus(format!(
                "claim {} has status {other:?}; only open reported claims can be simulated",
                claim.claim_id
            )))
        }
    }
    let dev_now = claim.dev_year_of(eval_date.year()).max(1) as u32;
    let pattern = claim.pattern_through(dev_now).ok_or_else(|| {
        Error::InvalidStatus(format!("claim {} has no observed activation", claim.claim_id))
    })?;
    Ok(OpenClaimState {
        status,
        dev_now,
        pattern,
        paid_to_date: claim.paid_before_year(eval_date.year(), bundle.coverage_count()),
    })
}

fn simulate_open_inner(
    state: &OpenClaimState,
    x: &CovariateVector,
    bundle: &FittedModelBundle,
    streams: &mut DrawStreams,
) -> Result<Vec<YearCashflow>> {
    let horizon = bundle.horizon;
    let mut flows = Vec::new();
    let mut pattern = state.pattern;
    let mut dev = state.dev_now;

    // A still-unpaid claim in its reporting year first completes that year's
    // payments and severities under the observed pattern; transitions start
    // the following year.
    if state.status == ClaimStatus::Rbnp && state.dev_now == 1 {
        flows.push(draw_payments(bundle, x, 1, pattern, streams));
        dev = 2;
    }
    while dev <= horizon {
        let next = draw_pattern(bundle, x, dev, Some(pattern), &mut streams.activation)?;
        flows.push(draw_payments(bundle, x, dev, next, streams));
        pattern = next;
        dev += 1;
    }
    Ok(flows)
}

/// Simulate the future development of a reported open claim (RBNP or RBNS)
/// from its current development year to the horizon, using the observed
/// pattern as the Markov state.
pub fn simulate_claim_rbns(
    claim: &ClaimRecord,
    x: &CovariateVector,
    bundle: &FittedModelBundle,
    eval_date: NaiveDate,
    streams: &mut DrawStreams,
) -> Result<Vec<YearCashflow>> {
    let state = open_claim_state(claim, eval_date, bundle)?;
    if state.status == ClaimStatus::RbnsPlus {
        return Err(Error::InvalidStatus(format!(
            "claim {} is stabilized (RBNS+); use the conditional-max routine",
            claim.claim_id
        )));
    }
    simulate_open_inner(&state, x, bundle, streams)
}

/// Simulate the remaining severity of a stabilized claim: the pattern is
/// frozen and each active coverage receives `max(paid to date, fresh draw)`;
/// the function returns the per-coverage reserve contribution (final minus
/// paid to date), which is nonnegative by construction.
pub fn simulate_claim_rbns_plus(
    claim: &ClaimRecord,
    x: &CovariateVector,
    bundle: &FittedModelBundle,
    eval_date: NaiveDate,
    streams: &mut DrawStreams,
) -> Result<Vec<Money>> {
    let state = open_claim_state(claim, eval_date, bundle)?;
    if state.status != ClaimStatus::RbnsPlus {
        return Err(Error::InvalidStatus(format!(
            "claim {} is not stabilized; status {:?}",
            claim.claim_id, state.status
        )));
    }
    Ok(rbns_plus_contribution(&state, x, bundle, streams))
}

fn rbns_plus_contribution(
    state: &OpenClaimState,
    x: &CovariateVector,
    bundle: &FittedModelBundle,
    streams: &mut DrawStreams,
) -> Vec<Money> {
    let c = bundle.coverage_count();
    let severity_models = &bundle.severity.later;
    let mut contributions = vec![Money::ZERO; c];
    for cov in 0..c {
        if !state.pattern.is_active(CoverageId(cov)) {
            continue;
        }
        let paid = state.paid_to_date[cov].max(Money::ZERO);
        let final_cumulative = sample_conditional_max(
            &severity_models[cov],
            x,
            paid.to_dollars(),
            state.dev_now,
            &mut streams.severity,
        );
        let contribution = (Money::from_dollars(final_cumulative) - paid).max(Money::ZERO);
        assert!(!contribution.is_negative());
        contributions[cov] = contribution;
    }
    contributions
}

/// Estimate IBNR claim counts per occurrence year from the empirical
/// reporting-delay distribution of the reported claims.
fn delay_based_ibnr_counts(
    portfolio: &Portfolio,
    eval_date: NaiveDate,
) -> Vec<(i32, usize)> {
    let eval_year = eval_date.year();
    let reported: Vec<&ClaimRecord> = portfolio
        .claims
        .iter()
        .filter(|c| c.report_date <= eval_date && c.occurrence_date <= eval_date)
        .collect();
    if reported.is_empty() {
        return Vec::new();
    }
    let delay_of = |c: &ClaimRecord| (c.report_date.year() - c.occurrence_date.year()).max(0);
    let max_delay = reported.iter().map(|c| delay_of(c)).max().unwrap_or(0);

    // Delay pmf from occurrence years whose full delay window has elapsed;
    // fall back to all reported claims when the history is too short.
    let complete_cutoff = eval_year - 1 - max_delay;
    let mut pool: Vec<i32> = reported
        .iter()
        .filter(|c| c.occurrence_date.year() <= complete_cutoff)
        .map(|c| delay_of(c))
        .collect();
    if pool.is_empty() {
        pool = reported.iter().map(|c| delay_of(c)).collect();
    }
    let mut pmf = vec![0.0; max_delay as usize + 1];
    for d in &pool {
        pmf[*d as usize] += 1.0;
    }
    let total = pool.len() as f64;
    for p in pmf.iter_mut() {
        *p /= total;
    }

    let mut reported_per_year: BTreeMap<i32, usize> = BTreeMap::new();
    for c in &reported {
        *reported_per_year.entry(c.occurrence_date.year()).or_insert(0) += 1;
    }

    let mut counts = Vec::new();
    for (&occ_year, &n_reported) in &reported_per_year {
        // Claims of this occurrence year are visible only up to this delay.
        let kappa = eval_year - 1 - occ_year;
        if kappa >= max_delay {
            continue; // window fully elapsed: nothing unreported
        }
        if kappa < 0 {
            continue; // occurrence year not yet complete at a year-end view
        }
        let reported_fraction: f64 = pmf.iter().take(kappa as usize + 1).sum();
        if reported_fraction < 0.05 {
            continue;
        }
        let expected_unreported =
            n_reported as f64 * (1.0 - reported_fraction) / reported_fraction;
        let count = expected_unreported.round() as usize;
        if count > 0 {
            counts.push((occ_year, count));
        }
    }
    counts
}

struct SimClaim {
    x: CovariateVector,
    state: OpenClaimState,
}

/// Run the full Monte Carlo reserving exercise.
///
/// Claims are classified at the evaluation date; open reported claims are
/// simulated per their status, and synthetic IBNR claims are instantiated
/// per the count specification with covariates bootstrap-resampled from
/// reported claims of the same occurrence year. Output is fully determined
/// by `(portfolio, bundle, config)` regardless of worker count.
pub fn run_reserving(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    bundle: &FittedModelBundle,
    config: &SimulationConfig,
) -> Result<ReservePredictiveDistribution> {
    if config.n_replications == 0 {
        return Err(Error::Config("n_replications must be >= 1".into()));
    }
    bundle.validate()?;
    if bundle.schema_fingerprint != schema.fingerprint() {
        return Err(Error::Config(
            "bundle was fitted against a different covariate schema".into(),
        ));
    }
    let mut bundle = bundle.clone();
    if let Some(h) = config.horizon {
        if h == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        bundle.horizon = h;
    }
    let bundle = &bundle;
    let c = bundle.coverage_count();
    let eval = config.evaluation_date;

    // Classify and encode once; replications reuse this state.
    let mut open_claims: Vec<SimClaim> = Vec::new();
    for claim in &portfolio.claims {
        match classify_claim_status(claim, eval, bundle.j_star) {
            Some(ClaimStatus::Rbnp) | Some(ClaimStatus::Rbns) | Some(ClaimStatus::RbnsPlus) => {
                open_claims.push(SimClaim {
                    x: encode_covariates(claim, schema)?,
                    state: open_claim_state(claim, eval, bundle)?,
                });
            }
            // Settled claims contribute nothing; unreported claims are
            // represented through the IBNR count specification.
            _ => {}
        }
    }

    let ibnr_counts: Vec<(i32, usize)> = match &config.ibnr {
        IbnrSpec::Explicit(counts) => counts.clone(),
        IbnrSpec::DelayEstimate => delay_based_ibnr_counts(portfolio, eval),
    };

    // Covariate pools for IBNR bootstrap, keyed by occurrence year.
    let mut pools: BTreeMap<i32, Vec<CovariateVector>> = BTreeMap::new();
    let mut all_reported: Vec<CovariateVector> = Vec::new();
    for claim in &portfolio.claims {
        if claim.report_date <= eval && claim.occurrence_date <= eval {
            let x = encode_covariates(claim, schema)?;
            pools.entry(claim.occurrence_date.year()).or_default().push(x.clone());
            all_reported.push(x);
        }
    }
    // Flattened IBNR slots: (occurrence year, slot index) with a pool each.
    let mut ibnr_slots: Vec<&Vec<CovariateVector>> = Vec::new();
    for &(occ_year, count) in &ibnr_counts {
        let pool = pools.get(&occ_year).filter(|p| !p.is_empty()).unwrap_or(&all_reported);
        if pool.is_empty() {
            continue;
        }
        for _ in 0..count {
            ibnr_slots.push(pool);
        }
    }

    let empty_warning = open_claims.is_empty() && ibnr_slots.is_empty();
    let factory = StreamFactory::new(config.master_seed);
    let n_open = open_claims.len() as u64;

    let replications: Vec<ReplicationOutcome> = (0..config.n_replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut by_coverage = vec![Money::ZERO; c];
            let mut by_class = [Money::ZERO; 2];

            for (ordinal, sim) in open_claims.iter().enumerate() {
                let mut streams = DrawStreams::for_claim(&factory, rep, ordinal as u64);
                match sim.state.status {
                    ClaimStatus::RbnsPlus => {
                        let contributions =
                            rbns_plus_contribution(&sim.state, &sim.x, bundle, &mut streams);
                        for (cov, amt) in contributions.iter().enumerate() {
                            by_coverage[cov] += *amt;
                            by_class[1] += *amt;
                        }
                    }
                    _ => {
                        let flows = simulate_open_inner(&sim.state, &sim.x, bundle, &mut streams)
                            .expect("open-claim simulation is total on a valid bundle");
                        for flow in &flows {
                            for (cov, amt) in flow.amounts.iter().enumerate() {
                                by_coverage[cov] += *amt;
                                by_class[1] += *amt;
                            }
                        }
                    }
                }
            }

            for (slot, pool) in ibnr_slots.iter().enumerate() {
                let ordinal = n_open + slot as u64;
                let mut cov_stream = factory.stream(rep, ordinal, Purpose::Covariate);
                let x = &pool[cov_stream.gen_range(0..pool.len())];
                let mut streams = DrawStreams::for_claim(&factory, rep, ordinal);
                let flows = simulate_claim_ibnr(x, bundle, &mut streams)
                    .expect("IBNR simulation is total on a valid bundle");
                for flow in &flows {
                    for (cov, amt) in flow.amounts.iter().enumerate() {
                        by_coverage[cov] += *amt;
                        by_class[0] += *amt;
                    }
                }
            }

            let total: Money = by_coverage.iter().copied().sum();
            debug_assert_eq!(total, by_class[0] + by_class[1]);
            ReplicationOutcome { total, by_coverage, by_class }
        })
        .collect();

    Ok(ReservePredictiveDistribution {
        coverage_count: c,
        master_seed: config.master_seed,
        replications,
        empty_warning,
    })
}

/// Mean and empirical `q`-quantile of a series of Money outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryStat {
    /// Arithmetic average, in dollars.
    pub mean: f64,
    /// Order statistic at rank `ceil(q n)` of the ascending sort.
    pub var: Money,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryReport {
    pub q: f64,
    pub n_replications: usize,
    pub total: SummaryStat,
    pub by_coverage: Vec<SummaryStat>,
    /// `[ibnr, reported]`.
    pub by_class: [SummaryStat; 2],
}

/// Rank `ceil(q n)` computed robustly against floating-point products that
/// land epsilon above an integer (e.g. `0.95 * 100`).
pub fn quantile_rank(q: f64, n: usize) -> usize {
    let scaled = q * n as f64;
    let rank = (scaled - 1e-9).ceil() as usize;
    rank.clamp(1, n)
}

fn summarize_series(values: &mut [Money], q: f64) -> SummaryStat {
    let n = values.len();
    values.sort_unstable();
    let mean = values.iter().map(|m| m.to_dollars()).sum::<f64>() / n as f64;
    let var = values[quantile_rank(q, n) - 1];
    SummaryStat { mean, var }
}

/// Summarize a predictive distribution at quantile level `q`.
pub fn summarize(dist: &ReservePredictiveDistribution, q: f64) -> Result<SummaryReport> {
    if dist.replications.is_empty() {
        return Err(Error::Config("cannot summarize an empty distribution".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config("quantile level must be in (0, 1)".into()));
    }
    let mut totals: Vec<Money> = dist.replications.iter().map(|r| r.total).collect();
    let total = summarize_series(&mut totals, q);
    let by_coverage = (0..dist.coverage_count)
        .map(|cov| {
            let mut series: Vec<Money> =
                dist.replications.iter().map(|r| r.by_coverage[cov]).collect();
            summarize_series(&mut series, q)
        })
        .collect();
    let by_class = [0, 1].map(|k| {
        let mut series: Vec<Money> = dist.replications.iter().map(|r| r.by_class[k]).collect();
        summarize_series(&mut series, q)
    });
    Ok(SummaryReport {
        q,
        n_replications: dist.replications.len(),
        total,
        by_coverage,
        by_class,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub n_replications: usize,
    pub var_total: Money,
    /// Relative change against the previous checkpoint.
    pub rel_change: Option<f64>,
}

/// 95% VaR of the total reserve on growing prefixes of a single replication
/// stream, with the relative change between successive checkpoints.
pub fn stability_curve(
    portfolio: &Portfolio,
    schema: &CovariateSchema,
    bundle: &FittedModelBundle,
    config: &SimulationConfig,
    checkpoints: &[usize],
) -> Result<Vec<StabilityPoint>> {
    if checkpoints.is_empty() {
        return Err(Error::Config("at least one checkpoint required".into()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] == 0 {
        return Err(Error::Config("checkpoints must be positive and ascending".into()));
    }
    let mut full = config.clone();
    full.n_replications = *checkpoints.last().expect("nonempty");
    let dist = run_reserving(portfolio, schema, bundle, &full)?;

    let mut points = Vec::with_capacity(checkpoints.len());
    let mut prev_var: Option<Money> = None;
    for &n in checkpoints {
        let mut prefix: Vec<Money> = dist.replications[..n].iter().map(|r| r.total).collect();
        prefix.sort_unstable();
        let var = prefix[quantile_rank(0.95, n) - 1];
        let rel_change = prev_var.map(|p| {
            if p.cents() == 0 {
                if var.cents() == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((var - p).to_dollars() / p.to_dollars()).abs()
            }
        });
        points.push(StabilityPoint { n_replications: n, var_total: var, rel_change });
        prev_var = Some(var);
    }
    Ok(points)
}

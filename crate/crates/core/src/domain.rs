//! Core data model: coverages, activation patterns, claims and their status
//! at an evaluation date.
//!
//! A claim activates a nonempty subset of the `C` coverages; the subset can
//! only grow over development years (absorbing activation) until settlement.
//! Patterns are C-bit masks with bit `c` set when coverage `c` is active;
//! the canonical pattern order is ascending mask value, so the pattern with
//! mask `m` has index `m - 1` among the `V = 2^C - 1` nonzero masks.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::money::Money;

/// Maximum supported coverage count (patterns are held in a `u16` mask).
pub const MAX_COVERAGES: usize = 12;

/// Index of one coverage, dense in `[0, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageId(pub usize);

/// A nonzero C-bit activation mask; bit `c` set means coverage `c` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationPattern {
    mask: u16,
}

impl ActivationPattern {
    pub fn from_mask(mask: u16) -> Result<Self> {
        if mask == 0 {
            return Err(Error::Config("activation pattern mask must be nonzero".into()));
        }
        Ok(ActivationPattern { mask })
    }

    /// Build from per-coverage flags; at least one must be set.
    pub fn from_flags(flags: &[bool]) -> Result<Self> {
        let mut mask = 0u16;
        for (c, &on) in flags.iter().enumerate() {
            if on {
                mask |= 1 << c;
            }
        }
        Self::from_mask(mask)
    }

    pub fn mask(self) -> u16 {
        self.mask
    }

    pub fn is_active(self, coverage: CoverageId) -> bool {
        self.mask & (1 << coverage.0) != 0
    }

    /// Union with another pattern (absorbing-activation OR-forward).
    pub fn union(self, other: ActivationPattern) -> ActivationPattern {
        ActivationPattern { mask: self.mask | other.mask }
    }

    /// True when `self` activates every coverage `other` does.
    pub fn is_superset_of(self, other: ActivationPattern) -> bool {
        self.mask & other.mask == other.mask
    }

    /// Zero-based index of this pattern in the canonical ascending-mask order.
    pub fn index(self) -> usize {
        self.mask as usize - 1
    }

    /// Inverse of [`ActivationPattern::index`].
    pub fn from_index(index: usize, coverage_count: usize) -> Result<Self> {
        let v = pattern_count(coverage_count)?;
        if index >= v {
            return Err(Error::Config(format!(
                "pattern index {index} out of range for C={coverage_count} (V={v})"
            )));
        }
        Ok(ActivationPattern { mask: (index + 1) as u16 })
    }

    pub fn active_coverages(self, coverage_count: usize) -> impl Iterator<Item = CoverageId> {
        let mask = self.mask;
        (0..coverage_count).filter_map(move |c| (mask & (1 << c) != 0).then_some(CoverageId(c)))
    }
}

/// C-bit payment indicator mask; always a subset of the same-period activation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PaymentVector {
    mask: u16,
}

impl PaymentVector {
    pub fn empty() -> Self {
        PaymentVector { mask: 0 }
    }

    pub fn mask(self) -> u16 {
        self.mask
    }

    pub fn set(&mut self, coverage: CoverageId) {
        self.mask |= 1 << coverage.0;
    }

    pub fn is_paid(self, coverage: CoverageId) -> bool {
        self.mask & (1 << coverage.0) != 0
    }

    pub fn is_subset_of(self, pattern: ActivationPattern) -> bool {
        self.mask & pattern.mask() == self.mask
    }
}

/// Number of nonzero activation patterns, `V = 2^C - 1`.
pub fn pattern_count(coverage_count: usize) -> Result<usize> {
    if coverage_count == 0 {
        return Err(Error::Config("coverage count must be at least 1".into()));
    }
    if coverage_count > MAX_COVERAGES {
        return Err(Error::Config(format!(
            "coverage count {coverage_count} exceeds supported maximum {MAX_COVERAGES}"
        )));
    }
    Ok((1usize << coverage_count) - 1)
}

/// All `2^C - 1` nonzero patterns in ascending mask order; the position of a
/// pattern in this list is its index `v`.
pub fn enumerate_patterns(coverage_count: usize) -> Result<Vec<ActivationPattern>> {
    let v = pattern_count(coverage_count)?;
    Ok((1..=v as u16).map(|mask| ActivationPattern { mask }).collect())
}

/// Patterns reachable from `prev` in one transition: exactly the (non-strict)
/// supersets of `prev`, since active coverages stay active.
pub fn reachable_patterns(
    prev: ActivationPattern,
    coverage_count: usize,
) -> Result<Vec<ActivationPattern>> {
    let all = enumerate_patterns(coverage_count)?;
    if prev.mask() >= (1 << coverage_count) {
        return Err(Error::Config(format!(
            "pattern mask {:#b} out of range for C={coverage_count}",
            prev.mask()
        )));
    }
    Ok(all.into_iter().filter(|p| p.is_superset_of(prev)).collect())
}

/// One development year of a claim's history.
///
/// Development year `j = 1` is the calendar year containing the report date;
/// each later calendar year increments `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevYearObservation {
    pub dev_year: u32,
    pub activation: ActivationPattern,
    pub payments: PaymentVector,
    /// Per-coverage paid amounts for this development year.
    pub amounts: Vec<Money>,
}

impl DevYearObservation {
    pub fn validate(&self, coverage_count: usize) -> Result<()> {
        if self.dev_year == 0 {
            return Err(Error::DataIntegrity("development year must be >= 1".into()));
        }
        if self.amounts.len() != coverage_count {
            return Err(Error::DataIntegrity(format!(
                "amounts vector has length {}, expected {coverage_count}",
                self.amounts.len()
            )));
        }
        if !self.payments.is_subset_of(self.activation) {
            return Err(Error::DataIntegrity(
                "payment mask is not a subset of the activation mask".into(),
            ));
        }
        for (c, amt) in self.amounts.iter().enumerate() {
            if amt.is_positive() && !self.payments.is_paid(CoverageId(c)) {
                return Err(Error::DataIntegrity(format!(
                    "positive amount on coverage {c} without a payment flag"
                )));
            }
        }
        Ok(())
    }
}

/// One claim: identity, dates, raw covariates and the per-development-year
/// activation/payment history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub occurrence_date: NaiveDate,
    pub report_date: NaiveDate,
    /// Raw attribute values keyed by factor name (e.g. "gender" -> "M").
    pub covariates: BTreeMap<String, String>,
    /// Sorted by development year, masks OR-forwarded (absorbing activation).
    pub history: Vec<DevYearObservation>,
    pub settlement_date: Option<NaiveDate>,
}

impl ClaimRecord {
    pub fn is_settled(&self) -> bool {
        self.settlement_date.is_some()
    }

    /// Development year that calendar `year` falls in, `j = year - report_year + 1`.
    pub fn dev_year_of(&self, year: i32) -> i32 {
        year - self.report_date.year() + 1
    }

    /// Calendar year of development year `j`.
    pub fn calendar_year_of(&self, dev_year: u32) -> i32 {
        self.report_date.year() + dev_year as i32 - 1
    }

    /// Latest activation pattern among history entries with development year
    /// `<= max_dev_year` (masks are already OR-forwarded, so this is the
    /// cumulative pattern).
    pub fn pattern_through(&self, max_dev_year: u32) -> Option<ActivationPattern> {
        self.history
            .iter()
            .filter(|h| h.dev_year <= max_dev_year)
            .last()
            .map(|h| h.activation)
    }

    /// Cumulative paid amounts per coverage over development years whose
    /// calendar year is strictly before `before_year`.
    pub fn paid_before_year(&self, before_year: i32, coverage_count: usize) -> Vec<Money> {
        let mut paid = vec![Money::ZERO; coverage_count];
        for h in &self.history {
            if self.calendar_year_of(h.dev_year) < before_year {
                for c in 0..coverage_count {
                    paid[c] += h.amounts[c];
                }
            }
        }
        paid
    }

    /// Enforce structural invariants: dates ordered, history sorted and
    /// absorbing, payment masks within activation masks.
    pub fn validate(&self, coverage_count: usize) -> Result<()> {
        if self.report_date < self.occurrence_date {
            return Err(Error::DataIntegrity(format!(
                "claim {}: report date precedes occurrence date",
                self.claim_id
            )));
        }
        let mut prev: Option<&DevYearObservation> = None;
        for h in &self.history {
            h.validate(coverage_count)?;
            if let Some(p) = prev {
                if h.dev_year <= p.dev_year {
                    return Err(Error::DataIntegrity(format!(
                        "claim {}: history not strictly sorted by development year",
                        self.claim_id
                    )));
                }
                if !h.activation.is_superset_of(p.activation) {
                    return Err(Error::DataIntegrity(format!(
                        "claim {}: activation not absorbing between dev years {} and {}",
                        self.claim_id, p.dev_year, h.dev_year
                    )));
                }
            }
            prev = Some(h);
        }
        Ok(())
    }
}

/// Status of a claim at an evaluation date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClaimStatus {
    /// Occurred on/before the evaluation date, reported after it.
    Ibnr,
    /// Reported, no payment recorded in a completed calendar year.
    Rbnp,
    /// Reported, paid, still open.
    Rbns,
    /// Open claim whose development year at evaluation is >= `j_star`;
    /// its pattern is treated as stabilized.
    RbnsPlus,
    Settled,
}

/// Classify a claim at `eval_date`.
///
/// Returns `None` when the claim occurred after the evaluation date (out of
/// scope rather than an error, since portfolios used for holdout testing
/// contain future records). Payments are recognized per calendar-year bucket:
/// a payment counts as recorded only when its development year's calendar
/// year has fully elapsed at `eval_date`.
pub fn classify_claim_status(
    claim: &ClaimRecord,
    eval_date: NaiveDate,
    j_star: u32,
) -> Option<ClaimStatus> {
    if claim.occurrence_date > eval_date {
        return None;
    }
    if claim.report_date > eval_date {
        return Some(ClaimStatus::Ibnr);
    }
    if let Some(settled) = claim.settlement_date {
        if settled <= eval_date {
            return Some(ClaimStatus::Settled);
        }
    }
    let eval_year = eval_date.year();
    let any_paid = claim
        .history
        .iter()
        .any(|h| claim.calendar_year_of(h.dev_year) < eval_year && h.payments.mask() != 0);
    if !any_paid {
        return Some(ClaimStatus::Rbnp);
    }
    let dev_now = claim.dev_year_of(eval_year);
    if dev_now >= j_star as i32 {
        Some(ClaimStatus::RbnsPlus)
    } else {
        Some(ClaimStatus::Rbns)
    }
}

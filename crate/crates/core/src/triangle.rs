//! Run-off triangles of incremental paid amounts.
//!
//! Triangle origin is the occurrence year (standard chain-ladder convention);
//! the development index is measured from the occurrence year, so the
//! reporting delay is absorbed into the development lag. A cell is observed
//! once its calendar year has fully elapsed at the evaluation date.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::domain::CoverageId;
use crate::error::{Error, Result};
use crate::ingest::Portfolio;
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTriangle {
    /// Origin (occurrence) years, ascending and contiguous.
    pub origin_years: Vec<i32>,
    /// Number of development years (columns), `1..=dev_years`.
    pub dev_years: usize,
    /// `cells[o][d]` = incremental paid in development year `d+1` of origin
    /// `origin_years[o]`.
    pub cells: Vec<Vec<Money>>,
    /// Mirror of `cells`: true when the cell's calendar year had fully
    /// elapsed at the evaluation date.
    pub observed: Vec<Vec<bool>>,
}

impl LossTriangle {
    pub fn origin_count(&self) -> usize {
        self.origin_years.len()
    }

    /// Sum of all observed cells.
    pub fn observed_total(&self) -> Money {
        let mut total = Money::ZERO;
        for (row, obs) in self.cells.iter().zip(&self.observed) {
            for (cell, &seen) in row.iter().zip(obs) {
                if seen {
                    total += *cell;
                }
            }
        }
        total
    }

    /// Number of observed development years in an origin row.
    pub fn observed_len(&self, origin: usize) -> usize {
        self.observed[origin].iter().filter(|&&b| b).count()
    }
}

/// Calendar year of cell `(origin, dev)` with 1-based `dev`.
fn cell_year(origin_year: i32, dev: usize) -> i32 {
    origin_year + dev as i32 - 1
}

/// True when the calendar year `y` has fully elapsed at `eval_date`.
fn year_elapsed(y: i32, eval_date: NaiveDate) -> bool {
    match NaiveDate::from_ymd_opt(y, 12, 31) {
        Some(end) => end <= eval_date,
        None => false,
    }
}

/// Aggregate a portfolio into a loss triangle at `eval_date`, optionally
/// restricted to one coverage.
pub fn build_triangle(
    portfolio: &Portfolio,
    eval_date: NaiveDate,
    coverage: Option<CoverageId>,
) -> Result<LossTriangle> {
    if portfolio.is_empty() {
        return Err(Error::EmptyTriangle("portfolio contains no claims".into()));
    }
    let eval_year = eval_date.year();
    let origins: Vec<i32> = {
        let min = portfolio
            .claims
            .iter()
            .map(|c| c.occurrence_date.year())
            .min()
            .expect("nonempty");
        if min >= eval_year && !year_elapsed(min, eval_date) {
            return Err(Error::EmptyTriangle(format!(
                "evaluation date {eval_date} precedes every completed occurrence year"
            )));
        }
        let max = portfolio
            .claims
            .iter()
            .map(|c| c.occurrence_date.year())
            .max()
            .expect("nonempty")
            .min(eval_year);
        (min..=max).collect()
    };

    // Development span: widest (payment year - occurrence year) observed,
    // at least the observable span of the oldest origin.
    let mut dev_years = eval_year - origins[0] + if year_elapsed(eval_year, eval_date) { 1 } else { 0 };
    for claim in &portfolio.claims {
        let occ = claim.occurrence_date.year();
        for h in &claim.history {
            let d = claim.calendar_year_of(h.dev_year) - occ + 1;
            dev_years = dev_years.max(d);
        }
    }
    let dev_years = dev_years.max(1) as usize;

    let mut cells = vec![vec![Money::ZERO; dev_years]; origins.len()];
    for claim in &portfolio.claims {
        let occ = claim.occurrence_date.year();
        let Some(row) = origins.iter().position(|&o| o == occ) else {
            continue; // occurrence after the evaluation year
        };
        for h in &claim.history {
            let year = claim.calendar_year_of(h.dev_year);
            if !year_elapsed(year, eval_date) {
                continue;
            }
            let d = (year - occ) as usize; // zero-based development index
            let amount = match coverage {
                Some(CoverageId(c)) => h.amounts[c],
                None => h.amounts.iter().copied().sum(),
            };
            cells[row][d] += amount;
        }
    }

    let observed = origins
        .iter()
        .map(|&o| {
            (1..=dev_years)
                .map(|d| year_elapsed(cell_year(o, d), eval_date))
                .collect()
        })
        .collect();

    Ok(LossTriangle { origin_years: origins, dev_years, cells, observed })
}

//! Claim transaction file parsing and canonical serialization.
//!
//! The transaction format is a UTF-8 CSV with header
//! `claim_id,occurrence_date,report_date,settlement_date,coverage,dev_year,activated,paid_amount,gender,yob,vu,am,prov,fr`
//! and one row per (claim, development year, coverage) event. Dates are
//! ISO-8601, `activated` is 0/1 and an empty `settlement_date` marks an open
//! claim. Rows may arrive in any order; parsing groups them per claim, sorts
//! by development year, sums duplicate payment rows and OR-forwards the
//! activation masks so the absorbing invariant holds by construction.

use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::domain::{
    ActivationPattern, ClaimRecord, CoverageId, DevYearObservation, PaymentVector,
};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::schema::CovariateSchema;

pub const CSV_HEADER: [&str; 14] = [
    "claim_id",
    "occurrence_date",
    "report_date",
    "settlement_date",
    "coverage",
    "dev_year",
    "activated",
    "paid_amount",
    "gender",
    "yob",
    "vu",
    "am",
    "prov",
    "fr",
];

/// Covariate columns carried on every row.
pub const COVARIATE_COLUMNS: [&str; 6] = ["gender", "yob", "vu", "am", "prov", "fr"];

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Accept negative paid amounts (recoveries). They flow through to
    /// triangles but never set a payment flag, since the severity families
    /// have positive support.
    pub allow_negative_amounts: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { allow_negative_amounts: false }
    }
}

/// A set of claims sharing one coverage universe, sorted by claim id.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Portfolio {
    pub coverage_count: usize,
    pub claims: Vec<ClaimRecord>,
}

impl Portfolio {
    pub fn new(coverage_count: usize, mut claims: Vec<ClaimRecord>) -> Self {
        claims.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        Portfolio { coverage_count, claims }
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Total paid per coverage over development years whose calendar year is
    /// strictly before `before_year`.
    pub fn paid_before_year(&self, before_year: i32) -> Vec<Money> {
        let mut total = vec![Money::ZERO; self.coverage_count];
        for claim in &self.claims {
            let paid = claim.paid_before_year(before_year, self.coverage_count);
            for c in 0..self.coverage_count {
                total[c] += paid[c];
            }
        }
        total
    }
}

struct RawRow {
    coverage: usize,
    dev_year: u32,
    activated: bool,
    amount: Money,
}

struct ClaimAccumulator {
    occurrence_date: NaiveDate,
    report_date: NaiveDate,
    settlement_date: Option<NaiveDate>,
    covariates: BTreeMap<String, String>,
    rows: Vec<RawRow>,
}

/// Parse a claim transaction stream into a [`Portfolio`].
pub fn parse_claims<R: Read>(
    reader: R,
    schema: &CovariateSchema,
    options: ParseOptions,
) -> Result<Portfolio> {
    let coverage_count = schema.coverage_count();
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);

    {
        let headers = csv_reader.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {got:?}"),
            });
        }
    }

    let mut accumulators: BTreeMap<String, ClaimAccumulator> = BTreeMap::new();

    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx as u64 + 2; // header is line 1
        let record = record?;
        let field = |i: usize| -> &str { record.get(i).unwrap_or("") };
        let parse_date = |i: usize| -> Result<NaiveDate> {
            NaiveDate::parse_from_str(field(i).trim(), "%Y-%m-%d").map_err(|_| Error::Parse {
                line,
                msg: format!("invalid date {:?} in column {:?}", field(i), CSV_HEADER[i]),
            })
        };

        let claim_id = field(0).trim().to_string();
        if claim_id.is_empty() {
            return Err(Error::Parse { line, msg: "empty claim_id".into() });
        }
        let occurrence_date = parse_date(1)?;
        let report_date = parse_date(2)?;
        let settlement_date = if field(3).trim().is_empty() {
            None
        } else {
            Some(parse_date(3)?)
        };
        let coverage_name = field(4).trim();
        let coverage = schema.coverage_index(coverage_name).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown coverage {coverage_name:?}"),
        })?;
        let dev_year: u32 = field(5).trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid dev_year {:?}", field(5)),
        })?;
        if dev_year == 0 {
            return Err(Error::Parse { line, msg: "dev_year must be >= 1".into() });
        }
        let activated = match field(6).trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("activated must be 0 or 1, got {other:?}"),
                })
            }
        };
        let amount_field = field(7).trim();
        let amount = if amount_field.is_empty() {
            Money::ZERO
        } else {
            Money::parse(amount_field).map_err(|e| Error::Parse { line, msg: e.to_string() })?
        };
        if amount.is_negative() && !options.allow_negative_amounts {
            return Err(Error::Parse {
                line,
                msg: format!("negative paid_amount {amount} (enable the negative-amount option to accept recoveries)"),
            });
        }

        let acc = accumulators.entry(claim_id.clone()).or_insert_with(|| ClaimAccumulator {
            occurrence_date,
            report_date,
            settlement_date,
            covariates: COVARIATE_COLUMNS
                .iter()
                .enumerate()
                .map(|(k, name)| (name.to_string(), field(8 + k).trim().to_string()))
                .collect(),
            rows: Vec::new(),
        });
        acc.rows.push(RawRow { coverage, dev_year, activated, amount });
    }

    let mut claims = Vec::with_capacity(accumulators.len());
    for (claim_id, acc) in accumulators {
        claims.push(assemble_claim(claim_id, acc, coverage_count)?);
    }
    Ok(Portfolio::new(coverage_count, claims))
}

fn assemble_claim(
    claim_id: String,
    acc: ClaimAccumulator,
    coverage_count: usize,
) -> Result<ClaimRecord> {
    // Group rows per dev year: activation bits and summed amounts.
    let mut years: BTreeMap<u32, (u16, Vec<Money>)> = BTreeMap::new();
    for row in &acc.rows {
        let entry = years
            .entry(row.dev_year)
            .or_insert_with(|| (0u16, vec![Money::ZERO; coverage_count]));
        if row.activated {
            entry.0 |= 1 << row.coverage;
        }
        entry.1[row.coverage] += row.amount;
    }

    let mut history = Vec::with_capacity(years.len());
    let mut carried_mask: u16 = 0;
    for (dev_year, (mask, amounts)) in years {
        carried_mask |= mask;
        if carried_mask == 0 {
            return Err(Error::DataIntegrity(format!(
                "claim {claim_id}: no coverage activated by development year {dev_year}"
            )));
        }
        let activation = ActivationPattern::from_mask(carried_mask)?;
        let mut payments = PaymentVector::empty();
        for (c, amt) in amounts.iter().enumerate() {
            if amt.cents() != 0 {
                if !activation.is_active(CoverageId(c)) {
                    return Err(Error::DataIntegrity(format!(
                        "claim {claim_id}: payment on never-activated coverage {c} in development year {dev_year}"
                    )));
                }
                if amt.is_positive() {
                    payments.set(CoverageId(c));
                }
            }
        }
        history.push(DevYearObservation { dev_year, activation, payments, amounts });
    }

    let claim = ClaimRecord {
        claim_id,
        occurrence_date: acc.occurrence_date,
        report_date: acc.report_date,
        covariates: acc.covariates,
        history,
        settlement_date: acc.settlement_date,
    };
    claim.validate(coverage_count)?;
    Ok(claim)
}

/// Write a portfolio in canonical transaction form: rows sorted by
/// (claim id, development year, coverage), one row per active coverage.
pub fn write_claims<W: Write>(
    writer: W,
    portfolio: &Portfolio,
    schema: &CovariateSchema,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for claim in &portfolio.claims {
        let settlement = claim
            .settlement_date
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default();
        for h in &claim.history {
            for cov in h.activation.active_coverages(portfolio.coverage_count) {
                let mut record = vec![
                    claim.claim_id.clone(),
                    claim.occurrence_date.format("%Y-%m-%d").to_string(),
                    claim.report_date.format("%Y-%m-%d").to_string(),
                    settlement.clone(),
                    schema.coverages[cov.0].clone(),
                    h.dev_year.to_string(),
                    "1".to_string(),
                    h.amounts[cov.0].to_string(),
                ];
                for col in COVARIATE_COLUMNS {
                    record.push(claim.covariates.get(col).cloned().unwrap_or_default());
                }
                out.write_record(&record)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

//! The fitted model bundle: everything the simulation needs, serializable so
//! reserving runs can reuse a fit without re-estimating.

use serde::{Deserialize, Serialize};

use crate::domain::{enumerate_patterns, ActivationPattern};
use crate::error::{Error, Result};
use crate::glm::{FittedBernoulli, FittedMultinomial};
use crate::severity::FittedSeverity;

/// One value per period bucket: development year `j <= split` uses `first`,
/// later years use `later`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerPeriod<T> {
    pub first: T,
    pub later: T,
}

impl<T> PerPeriod<T> {
    pub fn get(&self, dev_year: u32, split: u32) -> &T {
        if dev_year <= split {
            &self.first
        } else {
            &self.later
        }
    }
}

/// How activation is drawn.
///
/// `Pattern` is the multinomial activation-pattern model; `Independent` is
/// the baseline that draws each coverage from its own Bernoulli regression;
/// `Scripted` forces a fixed pattern path (diagnostics and scenario checks).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationModel {
    Pattern { multinomial: PerPeriod<FittedMultinomial> },
    Independent { activation: PerPeriod<Vec<FittedBernoulli>> },
    Scripted { patterns: Vec<ActivationPattern> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModelBundle {
    pub schema_fingerprint: String,
    pub coverage_names: Vec<String>,
    /// Canonical pattern order (masks); recorded explicitly so serialized
    /// coefficients are unambiguous.
    pub pattern_order: Vec<u16>,
    /// Development years `<= period_split` use the first-period models.
    pub period_split: u32,
    /// Stabilization year: open claims at development year `>= j_star` keep a
    /// frozen pattern and use the conditional-max severity.
    pub j_star: u32,
    /// Simulation horizon J (development years).
    pub horizon: u32,
    pub activation: ActivationModel,
    /// Payment models per coverage, per period bucket.
    pub payment: PerPeriod<Vec<FittedBernoulli>>,
    /// Severity models per coverage, per period bucket.
    pub severity: PerPeriod<Vec<FittedSeverity>>,
}

impl FittedModelBundle {
    pub fn coverage_count(&self) -> usize {
        self.coverage_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.coverage_count();
        if c == 0 {
            return Err(Error::Config("bundle lists no coverages".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("simulation horizon must be >= 1".into()));
        }
        if self.j_star == 0 {
            return Err(Error::Config("stabilization year must be >= 1".into()));
        }
        let expected: Vec<u16> =
            enumerate_patterns(c)?.iter().map(|p| p.mask()).collect();
        if self.pattern_order != expected {
            return Err(Error::Config("bundle pattern order is not canonical".into()));
        }
        for models in [&self.payment.first, &self.payment.later] {
            if models.len() != c {
                return Err(Error::Config(format!(
                    "payment model count {} does not match {c} coverages",
                    models.len()
                )));
            }
        }
        for models in [&self.severity.first, &self.severity.later] {
            if models.len() != c {
                return Err(Error::Config(format!(
                    "severity model count {} does not match {c} coverages",
                    models.len()
                )));
            }
        }
        // One design-vector length everywhere.
        let mut ms: Vec<usize> = Vec::new();
        match &self.activation {
            ActivationModel::Pattern { multinomial } => {
                ms.push(multinomial.first.m);
                ms.push(multinomial.later.m);
            }
            ActivationModel::Independent { activation } => {
                for models in [&activation.first, &activation.later] {
                    if models.len() != c {
                        return Err(Error::Config(
                            "independent activation model count mismatch".into(),
                        ));
                    }
                    ms.extend(models.iter().map(|b| b.gamma.len()));
                }
            }
            ActivationModel::Scripted { patterns } => {
                if patterns.is_empty() {
                    return Err(Error::Config("scripted activation path is empty".into()));
                }
                for pair in patterns.windows(2) {
                    if !pair[1].is_superset_of(pair[0]) {
                        return Err(Error::Config(
                            "scripted activation path violates absorbing activation".into(),
                        ));
                    }
                }
            }
        }
        ms.extend(self.payment.first.iter().map(|b| b.gamma.len()));
        ms.extend(self.payment.later.iter().map(|b| b.gamma.len()));
        ms.extend(self.severity.first.iter().map(|s| s.alpha.len()));
        ms.extend(self.severity.later.iter().map(|s| s.alpha.len()));
        if let Some(&first) = ms.first() {
            if ms.iter().any(|&m| m != first) {
                return Err(Error::Config(
                    "sub-models disagree on the design-vector length".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bundle: FittedModelBundle = serde_json::from_str(s)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

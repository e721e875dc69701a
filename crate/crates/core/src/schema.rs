//! Covariate schema and design-vector encoding.
//!
//! A schema lists the risk factors (categorical with an explicit reference
//! level, or continuous with fixed standardization constants), plus the
//! coverage names in index order. Encoding a claim produces the design vector
//! `x` with an intercept in slot 0, reference-coded dummies for categoricals
//! and standardized values for continuous factors.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::ClaimRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorKind {
    Categorical {
        /// Ordered level list; dummies are emitted for every non-reference
        /// level in this order.
        levels: Vec<String>,
        reference: String,
    },
    Continuous {
        mean: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    #[serde(flatten)]
    pub kind: FactorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    /// Coverage names in coverage-index order.
    pub coverages: Vec<String>,
    pub factors: Vec<Factor>,
}

/// Length-m design vector; entry 0 is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl CovariateSchema {
    pub fn validate(&self) -> Result<()> {
        if self.coverages.is_empty() {
            return Err(Error::Config("schema lists no coverages".into()));
        }
        for f in &self.factors {
            match &f.kind {
                FactorKind::Categorical { levels, reference } => {
                    if levels.len() < 2 {
                        return Err(Error::Config(format!(
                            "categorical factor {:?} needs at least 2 levels",
                            f.name
                        )));
                    }
                    if !levels.contains(reference) {
                        return Err(Error::Config(format!(
                            "reference level {:?} of factor {:?} is not in its level list",
                            reference, f.name
                        )));
                    }
                }
                FactorKind::Continuous { sd, .. } => {
                    if !sd.is_finite() || *sd <= 0.0 {
                        return Err(Error::Config(format!(
                            "continuous factor {:?} needs a positive standard deviation",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn coverage_count(&self) -> usize {
        self.coverages.len()
    }

    pub fn coverage_index(&self, name: &str) -> Option<usize> {
        self.coverages.iter().position(|c| c == name)
    }

    /// Encoded design-vector length, `m = 1 + sum(levels - 1) + #continuous`.
    pub fn encoded_len(&self) -> usize {
        1 + self
            .factors
            .iter()
            .map(|f| match &f.kind {
                FactorKind::Categorical { levels, .. } => levels.len() - 1,
                FactorKind::Continuous { .. } => 1,
            })
            .sum::<usize>()
    }

    /// Stable fingerprint of coverage order, factor definitions and
    /// standardization constants; fitted models carry it so that a bundle is
    /// never applied to incompatibly encoded data.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.coverages {
            hasher.update(c.as_bytes());
            hasher.update([0u8]);
        }
        for f in &self.factors {
            hasher.update(f.name.as_bytes());
            hasher.update([1u8]);
            match &f.kind {
                FactorKind::Categorical { levels, reference } => {
                    for l in levels {
                        hasher.update(l.as_bytes());
                        hasher.update([2u8]);
                    }
                    hasher.update(reference.as_bytes());
                    hasher.update([3u8]);
                }
                FactorKind::Continuous { mean, sd } => {
                    hasher.update(mean.to_le_bytes());
                    hasher.update(sd.to_le_bytes());
                    hasher.update([4u8]);
                }
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let schema: CovariateSchema = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }
}

/// Encode a claim's raw attributes against `schema`.
///
/// Unseen categorical levels are an error, never silently bucketed; missing
/// attributes are an error.
pub fn encode_covariates(claim: &ClaimRecord, schema: &CovariateSchema) -> Result<CovariateVector> {
    let mut x = Vec::with_capacity(schema.encoded_len());
    x.push(1.0);
    for f in &schema.factors {
        let raw = claim
            .covariates
            .get(&f.name)
            .ok_or_else(|| Error::MissingCovariate(f.name.clone()))?;
        match &f.kind {
            FactorKind::Categorical { levels, reference } => {
                if !levels.contains(raw) {
                    return Err(Error::UnknownLevel {
                        factor: f.name.clone(),
                        level: raw.clone(),
                    });
                }
                for level in levels.iter().filter(|l| *l != reference) {
                    x.push(if raw == level { 1.0 } else { 0.0 });
                }
            }
            FactorKind::Continuous { mean, sd } => {
                let value: f64 = raw.trim().parse().map_err(|_| {
                    Error::MissingCovariate(format!("{}: non-numeric value {raw:?}", f.name))
                })?;
                if !value.is_finite() {
                    return Err(Error::MissingCovariate(format!(
                        "{}: non-finite value",
                        f.name
                    )));
                }
                x.push((value - mean) / sd);
            }
        }
    }
    Ok(CovariateVector(x))
}

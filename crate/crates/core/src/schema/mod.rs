//! Factor taxonomy, verbalized-likelihood grades and probability profiles.
//!
//! A schema is an ordered list of factors, each with an ordered list of
//! outcomes. Every (factor, outcome) pair is an *item*; items are addressed
//! either by [`OutcomeId`] or by their flat index in schema order, which is
//! the indexing used by the salience model and by retrieval.

mod default;
mod grade;
mod profile;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use default::{default_schema, default_polarity};
pub use grade::{normalize_grades, normalize_token, normalize_weights, parse_grade, LikelihoodGrade};
pub use profile::{FactorProfile, PROFILE_TOLERANCE};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown likelihood grade {0:?}")]
    UnknownGrade(String),
    #[error("factor {factor}: expected {expected} outcome grades, got {got}")]
    ArityMismatch {
        factor: String,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} factors, got {got}")]
    FactorCountMismatch { expected: usize, got: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("outcome ({factor}, {outcome}) is not part of the schema")]
    OutcomeOutOfRange { factor: usize, outcome: usize },
    #[error("profile and model were built against different schemas")]
    SchemaMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Macroeconomic,
    CompanySpecific,
    HistoricalMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Positive,
    Negative,
    NeutralUncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub id: usize,
    pub name: String,
    pub category: Category,
    pub description: String,
    pub outcomes: Vec<OutcomeSpec>,
}

/// Address of one outcome of one factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutcomeId {
    pub factor: usize,
    pub outcome: usize,
}

impl OutcomeId {
    pub fn new(factor: usize, outcome: usize) -> Self {
        Self { factor, outcome }
    }
}

impl fmt::Display for OutcomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.factor, self.outcome)
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    factors: Vec<FactorSpec>,
}

/// The validated factor taxonomy. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct FactorSchema {
    factors: Vec<FactorSpec>,
    /// `offsets[i]` is the flat index of factor i's first outcome; the last
    /// entry is the item count.
    offsets: Vec<usize>,
    fingerprint: [u8; 32],
}

impl PartialEq for FactorSchema {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
    }
}

impl Eq for FactorSchema {}

impl From<FactorSchema> for SchemaFile {
    fn from(schema: FactorSchema) -> Self {
        SchemaFile {
            factors: schema.factors,
        }
    }
}

impl TryFrom<SchemaFile> for FactorSchema {
    type Error = SchemaError;

    fn try_from(file: SchemaFile) -> Result<Self, Self::Error> {
        FactorSchema::new(file.factors)
    }
}

impl FactorSchema {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self, SchemaError> {
        if factors.is_empty() {
            return Err(SchemaError::InvalidSchema("schema has no factors".into()));
        }
        let mut names = HashSet::new();
        for (index, factor) in factors.iter().enumerate() {
            if factor.id != index {
                return Err(SchemaError::InvalidSchema(format!(
                    "factor {:?} has id {} but sits at position {index}",
                    factor.name, factor.id
                )));
            }
            if factor.name.trim().is_empty() {
                return Err(SchemaError::InvalidSchema(format!("factor {index} has an empty name")));
            }
            if !names.insert(normalize_token(&factor.name)) {
                return Err(SchemaError::InvalidSchema(format!("duplicate factor name {:?}", factor.name)));
            }
            if factor.outcomes.len() < 2 {
                return Err(SchemaError::InvalidSchema(format!(
                    "factor {:?} needs at least two outcomes",
                    factor.name
                )));
            }
            let mut outcomes = HashSet::new();
            for outcome in &factor.outcomes {
                if outcome.name.trim().is_empty() || !outcomes.insert(normalize_token(&outcome.name)) {
                    return Err(SchemaError::InvalidSchema(format!(
                        "factor {:?} has an empty or duplicate outcome {:?}",
                        factor.name, outcome.name
                    )));
                }
            }
        }

        let mut offsets = Vec::with_capacity(factors.len() + 1);
        let mut total = 0;
        for factor in &factors {
            offsets.push(total);
            total += factor.outcomes.len();
        }
        offsets.push(total);

        let canonical = serde_json::to_vec(&factors)?;
        let fingerprint: [u8; 32] = Sha256::digest(&canonical).into();

        Ok(Self {
            factors,
            offsets,
            fingerprint,
        })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serialization is infallible")
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> Option<&FactorSpec> {
        self.factors.get(index)
    }

    /// Number of factors (n).
    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Number of items across all factors (M).
    pub fn item_count(&self) -> usize {
        *self.offsets.last().expect("offsets always hold the total")
    }

    pub fn outcome_count(&self, factor: usize) -> usize {
        self.factors[factor].outcomes.len()
    }

    pub(crate) fn factor_range(&self, factor: usize) -> std::ops::Range<usize> {
        self.offsets[factor]..self.offsets[factor + 1]
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    /// Hex digest of the canonical JSON encoding; stored in model files.
    pub fn hash_hex(&self) -> String {
        hex::encode(self.fingerprint)
    }

    pub fn flat_index(&self, id: OutcomeId) -> Result<usize, SchemaError> {
        match self.factors.get(id.factor) {
            Some(f) if id.outcome < f.outcomes.len() => Ok(self.offsets[id.factor] + id.outcome),
            _ => Err(SchemaError::OutcomeOutOfRange {
                factor: id.factor,
                outcome: id.outcome,
            }),
        }
    }

    pub fn outcome_id(&self, flat: usize) -> Option<OutcomeId> {
        if flat >= self.item_count() {
            return None;
        }
        // offsets is sorted; partition_point finds the owning factor.
        let factor = self.offsets.partition_point(|&o| o <= flat) - 1;
        Some(OutcomeId::new(factor, flat - self.offsets[factor]))
    }

    pub fn outcome(&self, id: OutcomeId) -> Option<&OutcomeSpec> {
        self.factors.get(id.factor)?.outcomes.get(id.outcome)
    }

    /// Human label in the "Factor (outcome)" form used by salience tables.
    pub fn item_label(&self, id: OutcomeId) -> String {
        match (self.factor(id.factor), self.outcome(id)) {
            (Some(f), Some(o)) => format!("{} ({})", f.name, o.name.replace('-', " ")),
            _ => id.to_string(),
        }
    }

    /// Polarity of every item in flat order.
    pub fn polarities(&self) -> Vec<Polarity> {
        self.factors
            .iter()
            .flat_map(|f| f.outcomes.iter().map(|o| o.polarity))
            .collect()
    }

    /// Finds a factor by name, ignoring case and separators.
    pub fn find_factor(&self, name: &str) -> Option<usize> {
        let wanted = normalize_token(name);
        self.factors.iter().position(|f| normalize_token(&f.name) == wanted)
    }

    pub fn find_outcome(&self, factor: usize, name: &str) -> Option<usize> {
        let wanted = normalize_token(name);
        self.factors
            .get(factor)?
            .outcomes
            .iter()
            .position(|o| normalize_token(&o.name) == wanted)
    }

    /// Parses `FACTOR:OUTCOME` where each side is either a 0-based index or a
    /// name.
    pub fn parse_outcome_ref(&self, text: &str) -> Result<OutcomeId, SchemaError> {
        let (f, o) = text
            .split_once(':')
            .ok_or_else(|| SchemaError::InvalidSchema(format!("expected FACTOR:OUTCOME, got {text:?}")))?;
        let factor = match f.trim().parse::<usize>() {
            Ok(i) => i,
            Err(_) => self
                .find_factor(f)
                .ok_or_else(|| SchemaError::InvalidSchema(format!("unknown factor {f:?}")))?,
        };
        let outcome = match o.trim().parse::<usize>() {
            Ok(j) => j,
            Err(_) => self
                .find_outcome(factor, o)
                .ok_or_else(|| SchemaError::InvalidSchema(format!("unknown outcome {o:?} for factor {f:?}")))?,
        };
        let id = OutcomeId::new(factor, outcome);
        self.flat_index(id)?;
        Ok(id)
    }

    /// Normalizes the grades for one factor, checking arity against the
    /// schema.
    pub fn normalize_factor(&self, factor: usize, grades: &[LikelihoodGrade]) -> Result<Vec<f64>, SchemaError> {
        let spec = self
            .factor(factor)
            .ok_or(SchemaError::OutcomeOutOfRange { factor, outcome: 0 })?;
        if grades.len() != spec.outcomes.len() {
            return Err(SchemaError::ArityMismatch {
                factor: spec.name.clone(),
                expected: spec.outcomes.len(),
                got: grades.len(),
            });
        }
        Ok(normalize_grades(grades))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_factor() -> FactorSchema {
        let outcome = |name: &str| OutcomeSpec {
            name: name.into(),
            polarity: Polarity::Positive,
        };
        FactorSchema::new(vec![
            FactorSpec {
                id: 0,
                name: "A".into(),
                category: Category::Macroeconomic,
                description: String::new(),
                outcomes: vec![outcome("up"), outcome("down")],
            },
            FactorSpec {
                id: 1,
                name: "B".into(),
                category: Category::HistoricalMetric,
                description: String::new(),
                outcomes: vec![outcome("x"), outcome("y"), outcome("z")],
            },
        ])
        .unwrap()
    }

    #[test]
    fn flat_index_bijection() {
        let schema = two_factor();
        assert_eq!(schema.item_count(), 5);
        for flat in 0..schema.item_count() {
            let id = schema.outcome_id(flat).unwrap();
            assert_eq!(schema.flat_index(id).unwrap(), flat);
        }
        assert_eq!(schema.outcome_id(2), Some(OutcomeId::new(1, 0)));
        assert_eq!(schema.outcome_id(5), None);
        assert!(schema.flat_index(OutcomeId::new(0, 2)).is_err());
    }

    #[test]
    fn rejects_bad_schemas() {
        let mut factors = two_factor().factors().to_vec();
        factors[1].id = 7;
        assert!(FactorSchema::new(factors.clone()).is_err());
        factors[1].id = 1;
        factors[1].name = "a".into();
        assert!(FactorSchema::new(factors.clone()).is_err());
        factors[1].name = "B".into();
        factors[1].outcomes.truncate(1);
        assert!(FactorSchema::new(factors).is_err());
        assert!(FactorSchema::new(vec![]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_fingerprint() {
        let schema = default_schema();
        let text = schema.to_json_pretty();
        let back: FactorSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.hash_hex(), schema.hash_hex());
        assert!(text.contains("\"company-specific\""));
        assert!(text.contains("\"neutral-uncertain\""));
    }

    #[test]
    fn normalize_factor_checks_arity() {
        let schema = two_factor();
        let g = [LikelihoodGrade::VeryLikely, LikelihoodGrade::Unlikely];
        assert_eq!(schema.normalize_factor(0, &g).unwrap(), vec![0.75, 0.25]);
        assert!(matches!(
            schema.normalize_factor(1, &g),
            Err(SchemaError::ArityMismatch { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn outcome_refs() {
        let schema = default_schema();
        assert_eq!(schema.parse_outcome_ref("0:0").unwrap(), OutcomeId::new(0, 0));
        assert_eq!(
            schema.parse_outcome_ref("historical eps:bearish").unwrap(),
            OutcomeId::new(12, 2)
        );
        assert!(schema.parse_outcome_ref("0:5").is_err());
        assert!(schema.parse_outcome_ref("nope").is_err());
    }
}

use std::sync::Arc;

use super::{FactorSchema, LikelihoodGrade, OutcomeId, SchemaError};

/// Tolerance on per-factor probability sums.
pub const PROFILE_TOLERANCE: f64 = 1e-9;

/// Per-factor outcome distributions for one transcript.
///
/// Probabilities are stored flat in schema order. Every entry is in (0, 1]
/// and each factor's slice sums to 1 within [`PROFILE_TOLERANCE`].
#[derive(Debug, Clone)]
pub struct FactorProfile {
    schema: Arc<FactorSchema>,
    summaries: Vec<String>,
    grades: Option<Vec<Vec<LikelihoodGrade>>>,
    probs: Vec<f64>,
}

impl PartialEq for FactorProfile {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.summaries == other.summaries
            && self.grades == other.grades
            && self.probs == other.probs
    }
}

impl FactorProfile {
    /// Builds a profile from one grade list per factor. Summaries may be
    /// empty, in which case every factor gets an empty summary.
    pub fn from_grades(
        schema: Arc<FactorSchema>,
        grades: Vec<Vec<LikelihoodGrade>>,
        summaries: Vec<String>,
    ) -> Result<Self, SchemaError> {
        if grades.len() != schema.factor_count() {
            return Err(SchemaError::FactorCountMismatch {
                expected: schema.factor_count(),
                got: grades.len(),
            });
        }
        let mut probs = Vec::with_capacity(schema.item_count());
        for (i, g) in grades.iter().enumerate() {
            probs.extend(schema.normalize_factor(i, g)?);
        }
        let summaries = fill_summaries(&schema, summaries)?;
        Ok(Self {
            schema,
            summaries,
            grades: Some(grades),
            probs,
        })
    }

    /// Builds a profile from explicit per-factor probability vectors.
    pub fn from_probabilities(
        schema: Arc<FactorSchema>,
        per_factor: Vec<Vec<f64>>,
        summaries: Vec<String>,
    ) -> Result<Self, SchemaError> {
        if per_factor.len() != schema.factor_count() {
            return Err(SchemaError::FactorCountMismatch {
                expected: schema.factor_count(),
                got: per_factor.len(),
            });
        }
        for (i, p) in per_factor.iter().enumerate() {
            if p.len() != schema.outcome_count(i) {
                return Err(SchemaError::ArityMismatch {
                    factor: schema.factors()[i].name.clone(),
                    expected: schema.outcome_count(i),
                    got: p.len(),
                });
            }
        }
        let flat = per_factor.into_iter().flatten().collect();
        let summaries = fill_summaries(&schema, summaries)?;
        Self::validated(schema, summaries, None, flat)
    }

    /// Inverse of [`FactorProfile::flatten`].
    pub fn unflatten(schema: Arc<FactorSchema>, flat: Vec<f64>) -> Result<Self, SchemaError> {
        if flat.len() != schema.item_count() {
            return Err(SchemaError::InvalidProfile(format!(
                "expected {} items, got {}",
                schema.item_count(),
                flat.len()
            )));
        }
        let summaries = vec![String::new(); schema.factor_count()];
        Self::validated(schema, summaries, None, flat)
    }

    fn validated(
        schema: Arc<FactorSchema>,
        summaries: Vec<String>,
        grades: Option<Vec<Vec<LikelihoodGrade>>>,
        probs: Vec<f64>,
    ) -> Result<Self, SchemaError> {
        for (i, factor) in schema.factors().iter().enumerate() {
            let slice = &probs[schema.factor_range(i)];
            if let Some(bad) = slice.iter().find(|p| !(p.is_finite() && **p > 0.0 && **p <= 1.0)) {
                return Err(SchemaError::InvalidProfile(format!(
                    "factor {:?} has probability {bad} outside (0, 1]",
                    factor.name
                )));
            }
            let total: f64 = slice.iter().sum();
            if (total - 1.0).abs() > PROFILE_TOLERANCE {
                return Err(SchemaError::InvalidProfile(format!(
                    "factor {:?} probabilities sum to {total}",
                    factor.name
                )));
            }
        }
        Ok(Self {
            schema,
            summaries,
            grades,
            probs,
        })
    }

    pub fn schema(&self) -> &Arc<FactorSchema> {
        &self.schema
    }

    pub fn summaries(&self) -> &[String] {
        &self.summaries
    }

    pub fn grades(&self) -> Option<&[Vec<LikelihoodGrade>]> {
        self.grades.as_deref()
    }

    /// Flat probability vector of length M in schema order.
    pub fn flatten(&self) -> &[f64] {
        &self.probs
    }

    pub fn factor_probs(&self, factor: usize) -> &[f64] {
        &self.probs[self.schema.factor_range(factor)]
    }

    pub fn per_factor(&self) -> Vec<Vec<f64>> {
        (0..self.schema.factor_count())
            .map(|i| self.factor_probs(i).to_vec())
            .collect()
    }

    pub fn prob(&self, id: OutcomeId) -> Result<f64, SchemaError> {
        Ok(self.probs[self.schema.flat_index(id)?])
    }

    pub fn with_summaries(mut self, summaries: Vec<String>) -> Result<Self, SchemaError> {
        self.summaries = fill_summaries(&self.schema, summaries)?;
        Ok(self)
    }

    pub fn same_schema(&self, other: &FactorProfile) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema
    }

    /// Plain-text rendering used inside prompts: one line per factor with its
    /// summary and the outcome probabilities.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, factor) in self.schema.factors().iter().enumerate() {
            out.push_str(&format!("{}. {}", i + 1, factor.name));
            let summary = self.summaries[i].trim();
            if !summary.is_empty() {
                out.push_str(": ");
                out.push_str(summary);
            }
            let outcomes: Vec<String> = factor
                .outcomes
                .iter()
                .zip(self.factor_probs(i))
                .map(|(o, p)| format!("{}={:.2}", o.name, p))
                .collect();
            out.push_str(&format!(" Outcomes: {{{}}}\n", outcomes.join(", ")));
        }
        out
    }
}

fn fill_summaries(schema: &FactorSchema, summaries: Vec<String>) -> Result<Vec<String>, SchemaError> {
    if summaries.is_empty() {
        return Ok(vec![String::new(); schema.factor_count()]);
    }
    if summaries.len() != schema.factor_count() {
        return Err(SchemaError::FactorCountMismatch {
            expected: schema.factor_count(),
            got: summaries.len(),
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;
    use proptest::prelude::*;

    fn grade_strategy() -> impl Strategy<Value = LikelihoodGrade> {
        (1u8..=6).prop_map(|v| LikelihoodGrade::from_value(v).unwrap())
    }

    fn default_grades() -> impl Strategy<Value = Vec<Vec<LikelihoodGrade>>> {
        let schema = default_schema();
        let shapes: Vec<usize> = (0..schema.factor_count()).map(|i| schema.outcome_count(i)).collect();
        shapes
            .into_iter()
            .map(|n| proptest::collection::vec(grade_strategy(), n))
            .collect::<Vec<_>>()
    }

    #[test]
    fn flatten_places_factor_zero_first() {
        let schema = Arc::new(default_schema());
        let mut grades: Vec<Vec<LikelihoodGrade>> = (0..15)
            .map(|i| vec![LikelihoodGrade::Likely; schema.outcome_count(i)])
            .collect();
        grades[0] = vec![LikelihoodGrade::VeryLikely, LikelihoodGrade::Unlikely];
        let profile = FactorProfile::from_grades(schema, grades, vec![]).unwrap();
        assert_eq!(profile.flatten()[0], 0.75);
        assert_eq!(profile.flatten()[1], 0.25);
        assert_eq!(profile.prob(OutcomeId::new(0, 1)).unwrap(), 0.25);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let schema = Arc::new(default_schema());
        let mut per_factor: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![1.0 / schema.outcome_count(i) as f64; schema.outcome_count(i)])
            .collect();
        assert!(FactorProfile::from_probabilities(schema.clone(), per_factor.clone(), vec![]).is_ok());
        per_factor[3] = vec![0.6, 0.2];
        assert!(matches!(
            FactorProfile::from_probabilities(schema.clone(), per_factor.clone(), vec![]),
            Err(SchemaError::InvalidProfile(_))
        ));
        per_factor[3] = vec![1.0, 0.0];
        assert!(FactorProfile::from_probabilities(schema.clone(), per_factor.clone(), vec![]).is_err());
        per_factor[3] = vec![0.5, 0.25, 0.25];
        assert!(matches!(
            FactorProfile::from_probabilities(schema, per_factor, vec![]),
            Err(SchemaError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn summaries_must_match_factor_count() {
        let schema = Arc::new(default_schema());
        let grades: Vec<_> = (0..15)
            .map(|i| vec![LikelihoodGrade::Likely; schema.outcome_count(i)])
            .collect();
        assert!(FactorProfile::from_grades(schema, grades, vec!["x".into()]).is_err());
    }

    proptest! {
        #[test]
        fn normalized_factors_sum_to_one(grades in default_grades()) {
            let schema = Arc::new(default_schema());
            let profile = FactorProfile::from_grades(schema.clone(), grades.clone(), vec![]).unwrap();
            for i in 0..schema.factor_count() {
                let p = profile.factor_probs(i);
                let sum: f64 = p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                let floor = 1.0 / (6.0 * p.len() as f64);
                prop_assert!(p.iter().all(|&x| x >= floor - 1e-15));
            }
            let total: f64 = profile.flatten().iter().sum();
            prop_assert!((total - 15.0).abs() < 1e-9);
        }

        #[test]
        fn flatten_unflatten_round_trips(grades in default_grades()) {
            let schema = Arc::new(default_schema());
            let profile = FactorProfile::from_grades(schema.clone(), grades, vec![]).unwrap();
            let back = FactorProfile::unflatten(schema, profile.flatten().to_vec()).unwrap();
            prop_assert_eq!(back.flatten(), profile.flatten());
            prop_assert_eq!(back.per_factor(), profile.per_factor());
        }

        #[test]
        fn scaling_weights_leaves_distribution_unchanged(
            grades in proptest::collection::vec(1u8..=6, 2..=3),
            scale in 0.01f64..100.0,
        ) {
            let raw: Vec<f64> = grades.iter().map(|&g| f64::from(g)).collect();
            let scaled: Vec<f64> = raw.iter().map(|g| g * scale).collect();
            let a = crate::schema::normalize_weights(&raw);
            let b = crate::schema::normalize_weights(&scaled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

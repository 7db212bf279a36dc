use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SchemaError;

/// Verbalized likelihood attached to a single outcome, ordered from least to
/// most likely. The discriminant is the numeric value used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum LikelihoodGrade {
    VeryUnlikely = 1,
    Unlikely = 2,
    SomewhatUnlikely = 3,
    SomewhatLikely = 4,
    Likely = 5,
    VeryLikely = 6,
}

impl LikelihoodGrade {
    pub const ALL: [LikelihoodGrade; 6] = [
        LikelihoodGrade::VeryUnlikely,
        LikelihoodGrade::Unlikely,
        LikelihoodGrade::SomewhatUnlikely,
        LikelihoodGrade::SomewhatLikely,
        LikelihoodGrade::Likely,
        LikelihoodGrade::VeryLikely,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(value: u8) -> Option<Self> {
        Self::ALL.get(usize::from(value).checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LikelihoodGrade::VeryUnlikely => "very unlikely",
            LikelihoodGrade::Unlikely => "unlikely",
            LikelihoodGrade::SomewhatUnlikely => "somewhat unlikely",
            LikelihoodGrade::SomewhatLikely => "somewhat likely",
            LikelihoodGrade::Likely => "likely",
            LikelihoodGrade::VeryLikely => "very likely",
        }
    }
}

impl fmt::Display for LikelihoodGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lowercases and collapses hyphens, underscores and runs of whitespace into
/// single spaces. Shared by grade, factor and outcome lookups.
pub fn normalize_token(text: &str) -> String {
    text.split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|part| !part.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses a grade token as produced by a model, tolerating casing and
/// separator differences (`"Somewhat_Unlikely"`, `"very-likely"`).
pub fn parse_grade(text: &str) -> Result<LikelihoodGrade, SchemaError> {
    let token = normalize_token(text);
    LikelihoodGrade::ALL
        .into_iter()
        .find(|grade| grade.as_str() == token)
        .ok_or_else(|| SchemaError::UnknownGrade(text.to_string()))
}

impl FromStr for LikelihoodGrade {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grade(s)
    }
}

// Persisted as the integer value so profile files stay compact.
impl Serialize for LikelihoodGrade {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.value())
    }
}

impl<'de> Deserialize<'de> for LikelihoodGrade {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = u8::deserialize(deserializer)?;
        LikelihoodGrade::from_value(value)
            .ok_or_else(|| serde::de::Error::custom(format!("grade value {value} outside 1..=6")))
    }
}

/// Converts grades into a probability vector: each grade value divided by the
/// sum of values.
pub fn normalize_grades(grades: &[LikelihoodGrade]) -> Vec<f64> {
    let values: Vec<f64> = grades.iter().map(|g| f64::from(g.value())).collect();
    normalize_weights(&values)
}

/// Ratio normalization of positive weights. Returns an empty vector for empty
/// input.
pub fn normalize_weights(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_values_follow_the_six_level_scale() {
        let values: Vec<u8> = LikelihoodGrade::ALL.iter().map(|g| g.value()).collect();
        assert_eq!(values, vec![1, 2, 3, 4, 5, 6]);
        assert!(LikelihoodGrade::VeryLikely > LikelihoodGrade::Likely);
    }

    #[test]
    fn parse_grade_examples() {
        assert_eq!(parse_grade("very likely").unwrap().value(), 6);
        assert_eq!(parse_grade("Somewhat_Unlikely").unwrap().value(), 3);
        assert_eq!(parse_grade("  VERY-unlikely ").unwrap().value(), 1);
        assert!(matches!(parse_grade("maybe"), Err(SchemaError::UnknownGrade(t)) if t == "maybe"));
        assert!(parse_grade("").is_err());
        assert!(parse_grade("probably").is_err());
    }

    #[test]
    fn parse_render_round_trip() {
        for grade in LikelihoodGrade::ALL {
            assert_eq!(parse_grade(&grade.to_string()).unwrap(), grade);
            assert_eq!(LikelihoodGrade::from_value(grade.value()), Some(grade));
        }
        assert_eq!(LikelihoodGrade::from_value(0), None);
        assert_eq!(LikelihoodGrade::from_value(7), None);
    }

    #[test]
    fn normalize_examples() {
        use LikelihoodGrade::*;
        assert_eq!(normalize_grades(&[VeryLikely, Unlikely]), vec![0.75, 0.25]);
        assert_eq!(normalize_grades(&[VeryLikely, VeryLikely]), vec![0.5, 0.5]);
        let p = normalize_grades(&[Likely, SomewhatLikely, VeryUnlikely]);
        let expected = [0.5, 0.4, 0.1];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn serde_uses_integer_values() {
        let json = serde_json::to_string(&[LikelihoodGrade::VeryLikely, LikelihoodGrade::Unlikely]).unwrap();
        assert_eq!(json, "[6,2]");
        assert!(serde_json::from_str::<LikelihoodGrade>("9").is_err());
    }
}

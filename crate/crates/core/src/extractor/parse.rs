use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ExtractError, HistoryMetric};
use crate::labeler::DecisionLabel;
use crate::schema::{normalize_token, parse_grade, FactorProfile, FactorSchema, FactorSpec, LikelihoodGrade};

/// Pulls a JSON object out of a model reply, tolerating code fences and
/// leading or trailing chatter.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    let (Some(start), Some(end)) = (trimmed.find('{'), trimmed.rfind('}')) else {
        return Err(ExtractError::MalformedJson("no JSON object in reply".into()));
    };
    if end < start {
        return Err(ExtractError::MalformedJson("no JSON object in reply".into()));
    }
    serde_json::from_str(&trimmed[start..=end]).map_err(|e| ExtractError::MalformedJson(e.to_string()))
}

fn as_object(v: Value) -> Result<Map<String, Value>, ExtractError> {
    match v {
        Value::Object(m) => Ok(m),
        other => Err(ExtractError::MalformedJson(format!("expected a JSON object, got {other}"))),
    }
}

fn lookup<'a>(map: &'a Map<String, Value>, name: &str) -> Option<&'a Value> {
    let want = normalize_token(name);
    map.iter().find(|(k, _)| normalize_token(k) == want).map(|(_, v)| v)
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn grades_for(factor: &FactorSpec, likelihoods: &Map<String, Value>) -> Result<Vec<LikelihoodGrade>, ExtractError> {
    factor
        .outcomes
        .iter()
        .map(|o| {
            let raw = lookup(likelihoods, &o.name).ok_or_else(|| ExtractError::MissingOutcome {
                factor: factor.name.clone(),
                outcome: o.name.clone(),
            })?;
            let token = value_text(raw);
            parse_grade(&token).map_err(|_| ExtractError::UnknownGrade {
                factor: factor.name.clone(),
                outcome: o.name.clone(),
                token,
            })
        })
        .collect()
}

/// Parses `{factor: {summary, likelihoods: {outcome: grade}}}` into a
/// validated profile. Names match case-insensitively; extra keys are
/// ignored.
pub fn parse_profile_response(text: &str, schema: &Arc<FactorSchema>) -> Result<FactorProfile, ExtractError> {
    let mut root = as_object(extract_json(text)?)?;
    if root.len() == 1 {
        if let Some(Value::Object(inner)) = root.get("factors") {
            root = inner.clone();
        }
    }
    let mut grades = Vec::with_capacity(schema.factor_count());
    let mut summaries = Vec::with_capacity(schema.factor_count());
    for factor in schema.factors() {
        let entry = lookup(&root, &factor.name).ok_or_else(|| ExtractError::MissingFactor(factor.name.clone()))?;
        let Value::Object(entry) = entry else {
            return Err(ExtractError::MalformedJson(format!("entry for {:?} is not an object", factor.name)));
        };
        let likelihoods = ["likelihoods", "outcome_likelihoods", "outcomes"]
            .iter()
            .find_map(|k| match entry.get(*k) {
                Some(Value::Object(m)) => Some(m),
                _ => None,
            })
            .unwrap_or(entry);
        grades.push(grades_for(factor, likelihoods)?);
        summaries.push(entry.get("summary").map(value_text).unwrap_or_default());
    }
    Ok(FactorProfile::from_grades(schema.clone(), grades, summaries)?)
}

/// Parses a history reply such as `{"historical EPS": {"bullish": ...}}`
/// into grades for `factor`'s outcomes. A bare outcome map is accepted too.
pub fn parse_history_response(
    text: &str,
    metric: HistoryMetric,
    factor: &FactorSpec,
) -> Result<Vec<LikelihoodGrade>, ExtractError> {
    let root = as_object(extract_json(text)?)?;
    let inner = match lookup(&root, metric.data_name()).or_else(|| lookup(&root, &factor.name)) {
        Some(Value::Object(m)) => m,
        Some(_) => {
            return Err(ExtractError::MalformedJson(format!("entry for {:?} is not an object", factor.name)));
        }
        None => match root.values().next() {
            Some(Value::Object(m)) if root.len() == 1 => m,
            _ if factor.outcomes.iter().any(|o| lookup(&root, &o.name).is_some()) => &root,
            _ => return Err(ExtractError::MissingFactor(factor.name.clone())),
        },
    };
    grades_for(factor, inner)
}

/// Reads a recommendation such as "buy", "Action 2: buy" or
/// "strong sell: The stock price will decrease ...".
pub fn parse_recommendation(text: &str) -> Result<DecisionLabel, ExtractError> {
    if let Ok(label) = DecisionLabel::parse(text) {
        return Ok(label);
    }
    for piece in text.split(':') {
        if let Ok(label) = DecisionLabel::parse(piece) {
            return Ok(label);
        }
    }
    let mut token = normalize_token(&text.replace(':', " "));
    if let Some(rest) = token.strip_prefix("action ") {
        token = rest.trim_start_matches(|c: char| c.is_ascii_digit()).trim().to_string();
    }
    let prefixes = [
        ("strong buy", DecisionLabel::StrongBuy),
        ("strong sell", DecisionLabel::StrongSell),
        ("buy", DecisionLabel::Buy),
        ("hold", DecisionLabel::Hold),
        ("sell", DecisionLabel::Sell),
    ];
    prefixes
        .iter()
        .find(|(p, _)| token == *p || token.starts_with(&format!("{p} ")))
        .map(|(_, l)| *l)
        .ok_or_else(|| ExtractError::UnknownAction(text.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotDecision {
    pub thoughts: Option<String>,
    pub recommendation: DecisionLabel,
    pub justification: String,
}

/// Parses a `{thoughts, recommendation, justification}` reply.
pub fn parse_decision_response(text: &str) -> Result<CotDecision, ExtractError> {
    let root = as_object(extract_json(text)?)?;
    let rec = lookup(&root, "recommendation")
        .ok_or_else(|| ExtractError::MalformedJson("reply has no \"recommendation\" key".into()))?;
    Ok(CotDecision {
        thoughts: lookup(&root, "thoughts").map(value_text),
        recommendation: parse_recommendation(&value_text(rec))?,
        justification: lookup(&root, "justification").map(value_text).unwrap_or_default(),
    })
}

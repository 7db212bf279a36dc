//! Divergence-based retrieval of analogous profiles and the decisions built
//! on top of it.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::extractor::{build_analogy_prompt, extract_json, parse_recommendation, CompletionClient, ExtractError};
use crate::ingest::StoredProfile;
use crate::labeler::DecisionLabel;
use crate::schema::FactorProfile;

pub const DEFAULT_K: usize = 5;

const PARALLEL_THRESHOLD: usize = 4096;
const SCAN_CHUNKS: usize = 8;

#[derive(Debug, Error)]
pub enum AnalogyError {
    #[error("profiles were built against different schemas")]
    SchemaMismatch,
    #[error("retrieval corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("malformed analogy reply: {0}")]
    MalformedResponse(String),
    #[error("reply chose example {idx}, but only 1..={k} were offered")]
    IdxOutOfRange { idx: i64, k: usize },
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("{0}")]
    Extract(#[from] ExtractError),
}

/// KL(P || Q) in nats, summed over factors.
pub fn kl_divergence(p: &FactorProfile, q: &FactorProfile) -> Result<f64, AnalogyError> {
    if !p.same_schema(q) {
        return Err(AnalogyError::SchemaMismatch);
    }
    let d: f64 = p
        .flatten()
        .iter()
        .zip(q.flatten())
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    // Rounding can leave a tiny negative sum for near-identical profiles.
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub profile_id: String,
    pub divergence: f64,
    pub label: DecisionLabel,
}

/// A labeled candidate for retrieval.
#[derive(Debug, Clone, Copy)]
pub struct CorpusEntry<'a> {
    pub profile_id: &'a str,
    pub ticker: Option<&'a str>,
    pub profile: &'a FactorProfile,
    pub label: DecisionLabel,
}

/// Labeled stored profiles as retrieval candidates; unlabeled ones are
/// skipped.
pub fn corpus_from_stored(stored: &[StoredProfile]) -> Vec<CorpusEntry<'_>> {
    stored
        .iter()
        .filter_map(|s| {
            Some(CorpusEntry {
                profile_id: &s.profile_id,
                ticker: Some(&s.ticker),
                profile: &s.profile,
                label: s.label?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RetrieveOptions<'a> {
    /// Id of the target; a corpus entry with this id is skipped.
    pub target_id: Option<&'a str>,
    /// Skip every candidate from this ticker.
    pub exclude_ticker: Option<&'a str>,
}

/// The `k` candidates with the smallest KL(target || candidate), ascending,
/// ties by profile id. Returns fewer than `k` when the corpus is smaller.
pub fn retrieve(
    target: &FactorProfile,
    corpus: &[CorpusEntry<'_>],
    k: usize,
    opts: RetrieveOptions<'_>,
) -> Result<Vec<Neighbor>, AnalogyError> {
    if k == 0 {
        return Err(AnalogyError::InvalidK);
    }
    let candidates: Vec<&CorpusEntry<'_>> = corpus
        .iter()
        .filter(|c| opts.target_id != Some(c.profile_id))
        .filter(|c| {
            opts.exclude_ticker
                .is_none_or(|t| !c.ticker.is_some_and(|ct| ct.eq_ignore_ascii_case(t)))
        })
        .collect();
    if candidates.is_empty() {
        return Err(AnalogyError::EmptyCorpus);
    }

    let score = |chunk: &[&CorpusEntry<'_>]| -> Result<Vec<Neighbor>, AnalogyError> {
        chunk
            .iter()
            .map(|c| {
                Ok(Neighbor {
                    profile_id: c.profile_id.to_string(),
                    divergence: kl_divergence(target, c.profile)?,
                    label: c.label,
                })
            })
            .collect()
    };
    let mut scored = if candidates.len() < PARALLEL_THRESHOLD {
        score(&candidates)?
    } else {
        let chunk_len = candidates.len().div_ceil(SCAN_CHUNKS);
        let parts: Vec<Result<Vec<Neighbor>, AnalogyError>> = std::thread::scope(|s| {
            let handles: Vec<_> = candidates.chunks(chunk_len).map(|c| s.spawn(move || score(c))).collect();
            handles.into_iter().map(|h| h.join().expect("retrieval worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(candidates.len());
        for part in parts {
            all.extend(part?);
        }
        all
    };
    scored.sort_by(|a, b| {
        a.divergence
            .total_cmp(&b.divergence)
            .then_with(|| a.profile_id.cmp(&b.profile_id))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Most frequent label; a tie goes to the label of the nearest neighbor
/// among the tied labels. `None` for an empty list.
pub fn majority_vote(neighbors: &[Neighbor]) -> Option<DecisionLabel> {
    let mut tally: HashMap<DecisionLabel, (usize, f64, usize)> = HashMap::new();
    for (pos, n) in neighbors.iter().enumerate() {
        let entry = tally.entry(n.label).or_insert((0, f64::INFINITY, usize::MAX));
        entry.0 += 1;
        if n.divergence < entry.1 || (n.divergence == entry.1 && pos < entry.2) {
            entry.1 = n.divergence;
            entry.2 = pos;
        }
    }
    tally
        .into_iter()
        .min_by(|(_, a), (_, b)| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(label, _)| label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogicalDecision {
    /// 1-based index into the examples shown.
    pub chosen_idx: usize,
    pub chosen_profile_id: String,
    pub label: DecisionLabel,
    pub justification: String,
}

/// Parses an `{idx, recommendation, justification}` reply for `k` examples.
pub fn parse_analogy_response(text: &str, k: usize) -> Result<(usize, DecisionLabel, String), AnalogyError> {
    let root = extract_json(text).map_err(|e| AnalogyError::MalformedResponse(e.to_string()))?;
    let Value::Object(root) = root else {
        return Err(AnalogyError::MalformedResponse("reply is not a JSON object".into()));
    };
    let field = |name: &str| root.iter().find(|(key, _)| key.eq_ignore_ascii_case(name)).map(|(_, v)| v);
    let idx = match field("idx") {
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| AnalogyError::MalformedResponse(format!("idx {n} is not an integer")))?,
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| AnalogyError::MalformedResponse(format!("idx {s:?} is not an integer")))?,
        Some(other) => return Err(AnalogyError::MalformedResponse(format!("idx {other} is not an integer"))),
        None => return Err(AnalogyError::MalformedResponse("reply has no \"idx\" key".into())),
    };
    if idx < 1 || idx as u64 > k as u64 {
        return Err(AnalogyError::IdxOutOfRange { idx, k });
    }
    let rec = match field("recommendation") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => return Err(AnalogyError::MalformedResponse("reply has no \"recommendation\" key".into())),
    };
    let label = parse_recommendation(&rec).map_err(|_| AnalogyError::UnknownAction(rec.clone()))?;
    let justification = match field("justification") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    Ok((idx as usize, label, justification))
}

/// Shows the retrieved neighbors to the model and lets it pick the most
/// analogous one.
pub fn analogical_decision(
    client: &dyn CompletionClient,
    target: &FactorProfile,
    company: Option<&str>,
    date: NaiveDate,
    neighbors: &[(Neighbor, &FactorProfile)],
) -> Result<AnalogicalDecision, AnalogyError> {
    let examples: Vec<(&FactorProfile, DecisionLabel)> = neighbors.iter().map(|(n, p)| (*p, n.label)).collect();
    let exchange = build_analogy_prompt(&examples, target, company, date)?;
    let reply = client.complete(&exchange)?;
    let (idx, label, justification) = parse_analogy_response(&reply, neighbors.len())?;
    Ok(AnalogicalDecision {
        chosen_idx: idx,
        chosen_profile_id: neighbors[idx - 1].0.profile_id.clone(),
        label,
        justification,
    })
}

//! Salience-weighted scoring and five-way decision assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::btmodel::SalienceModel;
use crate::labeler::DecisionLabel;
use crate::schema::FactorProfile;

#[derive(Debug, Error, PartialEq)]
pub enum DecideError {
    #[error("profile schema does not match the salience model")]
    SchemaMismatch,
    #[error("target counts sum to {got} but there are {expected} scores")]
    CountMismatch { expected: usize, got: usize },
    #[error("cutpoints must be strictly ascending: {0:?}")]
    NonMonotoneCutpoints([f64; 4]),
    #[error("score for {0:?} is not finite")]
    NonFiniteScore(String),
}

/// Per-class counts indexed by [`DecisionLabel::index`] (strong-buy first).
pub type ClassCounts = [usize; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionScore {
    pub profile_id: String,
    pub score: f64,
}

/// Σ_x p_x · P(x | X) over all flattened items.
pub fn score(profile: &FactorProfile, model: &SalienceModel) -> Result<f64, DecideError> {
    if !model.matches_schema(profile.schema()) {
        return Err(DecideError::SchemaMismatch);
    }
    Ok(profile.flatten().iter().zip(&model.p).map(|(prob, p)| prob * p).sum())
}

pub fn score_all<'a, I>(profiles: I, model: &SalienceModel) -> Result<Vec<DecisionScore>, DecideError>
where
    I: IntoIterator<Item = (&'a str, &'a FactorProfile)>,
{
    profiles
        .into_iter()
        .map(|(id, profile)| {
            let s = score(profile, model)?;
            if !s.is_finite() {
                return Err(DecideError::NonFiniteScore(id.to_string()));
            }
            Ok(DecisionScore {
                profile_id: id.to_string(),
                score: s,
            })
        })
        .collect()
}

/// Descending by score, ties by ascending profile id.
fn ranked(scores: &[DecisionScore]) -> Vec<&DecisionScore> {
    let mut order: Vec<&DecisionScore> = scores.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.profile_id.cmp(&b.profile_id)));
    order
}

/// Fills label buckets from the top of the ranking: the best `counts[SB]`
/// scores become strong-buy, the next `counts[B]` buy, and so on.
pub fn assign_by_quantile(
    scores: &[DecisionScore],
    counts: ClassCounts,
) -> Result<BTreeMap<String, DecisionLabel>, DecideError> {
    let total: usize = counts.iter().sum();
    if total != scores.len() {
        return Err(DecideError::CountMismatch {
            expected: scores.len(),
            got: total,
        });
    }
    let labels = DecisionLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(label, n)| std::iter::repeat_n(*label, n));
    Ok(ranked(scores)
        .into_iter()
        .zip(labels)
        .map(|(s, label)| (s.profile_id.clone(), label))
        .collect())
}

/// Rescales a reference distribution to `n` items by largest remainder;
/// leftover units go to the larger remainders, ties to the more bullish
/// class.
pub fn scale_counts(reference: ClassCounts, n: usize) -> ClassCounts {
    let total: usize = reference.iter().sum();
    if total == 0 {
        // No reference: spread evenly.
        let mut out = [n / 5; 5];
        for slot in out.iter_mut().take(n % 5) {
            *slot += 1;
        }
        return out;
    }
    let mut out = [0usize; 5];
    let mut remainders = Vec::with_capacity(5);
    for (i, &c) in reference.iter().enumerate() {
        let exact = c as u128 * n as u128;
        out[i] = (exact / total as u128) as usize;
        remainders.push((exact % total as u128, i));
    }
    let assigned: usize = out.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(n - assigned) {
        out[i] += 1;
    }
    out
}

/// Labels a single score by interval: below `cutpoints[0]` is strong-sell,
/// at or above `cutpoints[3]` strong-buy.
pub fn assign_by_threshold(score: f64, cutpoints: [f64; 4]) -> Result<DecisionLabel, DecideError> {
    if cutpoints.iter().any(|c| !c.is_finite()) || cutpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DecideError::NonMonotoneCutpoints(cutpoints));
    }
    let above = cutpoints.iter().filter(|&&c| score >= c).count();
    Ok(DecisionLabel::ALL[4 - above])
}

/// Cutpoints that reproduce [`assign_by_quantile`] on a calibration batch:
/// each boundary sits midway between the last score of one bucket and the
/// first of the next.
pub fn cutpoints_from_batch(scores: &[DecisionScore], counts: ClassCounts) -> Result<[f64; 4], DecideError> {
    let total: usize = counts.iter().sum();
    if total != scores.len() || scores.is_empty() {
        return Err(DecideError::CountMismatch {
            expected: scores.len(),
            got: total,
        });
    }
    let sorted: Vec<f64> = ranked(scores).into_iter().map(|s| s.score).collect();
    let n = sorted.len();
    // cuts[k] separates the top (k+1) classes from the rest, so cuts[0] is
    // the strong-buy boundary; reversed at the end into ascending order.
    let mut cuts = [0.0; 4];
    let mut taken = 0;
    for (k, cut) in cuts.iter_mut().enumerate() {
        taken += counts[k];
        *cut = if taken == 0 {
            sorted[0].next_up()
        } else if taken >= n {
            sorted[n - 1]
        } else {
            (sorted[taken - 1] + sorted[taken]) / 2.0
        };
    }
    cuts.reverse();
    for i in 1..4 {
        if cuts[i] <= cuts[i - 1] {
            cuts[i] = cuts[i - 1].next_up();
        }
    }
    Ok(cuts)
}

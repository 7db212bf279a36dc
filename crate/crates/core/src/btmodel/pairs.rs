use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Regime;
use crate::labeler::DecisionLabel;

/// Ordered label pairs that yield a comparison. Adjacent classes are never
/// compared.
pub const PREFERRED_OVER: [(DecisionLabel, DecisionLabel); 6] = [
    (DecisionLabel::StrongBuy, DecisionLabel::Hold),
    (DecisionLabel::StrongBuy, DecisionLabel::Sell),
    (DecisionLabel::StrongBuy, DecisionLabel::StrongSell),
    (DecisionLabel::Buy, DecisionLabel::Sell),
    (DecisionLabel::Buy, DecisionLabel::StrongSell),
    (DecisionLabel::Hold, DecisionLabel::StrongSell),
];

pub fn prefers(winner: DecisionLabel, loser: DecisionLabel) -> bool {
    PREFERRED_OVER.contains(&(winner, loser))
}

/// Minimal view of a labeled transcript needed for pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub profile_id: String,
    pub label: DecisionLabel,
    pub sector: Option<String>,
    pub ticker: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner: String,
    pub loser: String,
    pub regime: Regime,
}

fn regime_admits(regime: Regime, a: &LabeledItem, b: &LabeledItem) -> bool {
    match regime {
        Regime::SameSector => matches!((&a.sector, &b.sector), (Some(x), Some(y)) if x == y),
        Regime::CrossSector => !matches!((&a.sector, &b.sector), (Some(x), Some(y)) if x == y),
        Regime::SameCompany => a.ticker == b.ticker,
    }
}

/// Emits every (winner, loser) pair allowed by the label ordering and the
/// regime, in input order. When more than `cap` pairs qualify, a uniform
/// sample of `cap` is kept (order preserved) using a ChaCha8 stream seeded
/// with `seed`.
pub fn preference_pairs(items: &[LabeledItem], regime: Regime, seed: u64, cap: Option<usize>) -> Vec<PreferencePair> {
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (i, a) in items.iter().enumerate() {
        for (j, b) in items.iter().enumerate() {
            if i != j && prefers(a.label, b.label) && regime_admits(regime, a, b) {
                candidates.push((i, j));
            }
        }
    }
    if let Some(cap) = cap {
        if candidates.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, candidates.len(), cap).into_vec();
            keep.sort_unstable();
            candidates = keep.into_iter().map(|k| candidates[k]).collect();
        }
    }
    candidates
        .into_iter()
        .map(|(i, j)| PreferencePair {
            winner: items[i].profile_id.clone(),
            loser: items[j].profile_id.clone(),
            regime,
        })
        .collect()
}

use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decide::scale_counts;
use crate::ingest::StoredProfile;
use crate::labeler::DecisionLabel;
use crate::schema::{FactorProfile, FactorSchema, LikelihoodGrade, OutcomeId, SchemaError};

/// Label shares of the reference corpus, strong-buy first (percent).
pub const DEFAULT_CLASS_PROPORTIONS: [usize; 5] = [34, 15, 21, 9, 21];

const NOISE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n: usize,
    pub planted: OutcomeId,
    /// Probability that an item's label is replaced by a uniform draw.
    pub noise: f64,
    /// Sampling weights for grades 1..=6.
    pub grade_weights: [f64; 6],
    pub class_proportions: [usize; 5],
    pub sectors: usize,
    pub companies: usize,
    pub start: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 500,
            planted: OutcomeId::new(0, 0),
            noise: 0.0,
            grade_weights: [1.0; 6],
            class_proportions: DEFAULT_CLASS_PROPORTIONS,
            sectors: 11,
            companies: 100,
            start: NaiveDate::from_ymd_opt(2020, 1, 15).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub profile_id: String,
    pub ticker: String,
    pub sector: String,
    pub date: NaiveDate,
    /// Planted-item probability; labels are a monotone function of it.
    pub latent: f64,
    /// Label before noise.
    pub clean_label: DecisionLabel,
    pub label: DecisionLabel,
    pub profile: FactorProfile,
}

impl SynthItem {
    pub fn to_stored(&self) -> StoredProfile {
        StoredProfile {
            profile_id: self.profile_id.clone(),
            ticker: self.ticker.clone(),
            date: self.date,
            sector: Some(self.sector.clone()),
            label: Some(self.label),
            profile: self.profile.clone(),
        }
    }
}

/// Random profiles whose labels depend only on the planted item's
/// probability: ranked by it, cut at the class proportions, with tied
/// values sharing one label, then optionally noised.
pub fn synth_corpus(schema: &Arc<FactorSchema>, spec: &SynthSpec) -> Result<Vec<SynthItem>, SchemaError> {
    let planted = schema.flat_index(spec.planted)?;
    let grade_dist = WeightedIndex::new(spec.grade_weights)
        .map_err(|e| SchemaError::InvalidProfile(format!("grade weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let companies = spec.companies.max(1);
    let sectors = spec.sectors.max(1);

    let mut items = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let grades: Vec<Vec<LikelihoodGrade>> = (0..schema.factor_count())
            .map(|f| {
                (0..schema.outcome_count(f))
                    .map(|_| LikelihoodGrade::ALL[grade_dist.sample(&mut rng)])
                    .collect()
            })
            .collect();
        let profile = FactorProfile::from_grades(schema.clone(), grades, vec![])?;
        let company = i % companies;
        let ticker = format!("SYN{company:03}");
        let date = spec.start + Days::new((i / companies) as u64 * 91);
        items.push(SynthItem {
            profile_id: format!("{ticker}-{date}"),
            sector: format!("Sector-{:02}", company % sectors),
            ticker,
            date,
            latent: profile.flatten()[planted],
            clean_label: DecisionLabel::Hold,
            label: DecisionLabel::Hold,
            profile,
        });
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].latent.total_cmp(&items[a].latent).then(a.cmp(&b)));
    let counts = scale_counts(spec.class_proportions, items.len());
    let by_rank: Vec<DecisionLabel> = DecisionLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(l, c)| std::iter::repeat_n(*l, c))
        .collect();
    let mut start = 0;
    while start < order.len() {
        let value = items[order[start]].latent;
        let end = order[start..]
            .iter()
            .position(|&i| items[i].latent != value)
            .map_or(order.len(), |k| start + k);
        let label = by_rank[(start + end - 1) / 2];
        for &i in &order[start..end] {
            items[i].clean_label = label;
        }
        start = end;
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ NOISE_STREAM);
    for item in &mut items {
        let u: f64 = noise_rng.gen();
        let replacement = DecisionLabel::ALL[noise_rng.gen_range(0..5)];
        item.label = if u < spec.noise { replacement } else { item.clean_label };
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;

    fn corpus(seed: u64, noise: f64) -> Vec<SynthItem> {
        let schema = Arc::new(default_schema());
        let spec = SynthSpec {
            seed,
            n: 300,
            noise,
            ..SynthSpec::default()
        };
        synth_corpus(&schema, &spec).unwrap()
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        assert_eq!(corpus(7, 0.2), corpus(7, 0.2));
        assert_ne!(corpus(7, 0.0)[0].profile, corpus(8, 0.0)[0].profile);
    }

    #[test]
    fn noiseless_labels_are_monotone_in_latent() {
        let items = corpus(3, 0.0);
        for a in &items {
            for b in &items {
                if a.latent > b.latent {
                    assert!(a.label >= b.label, "{} vs {}", a.latent, b.latent);
                }
                if a.latent == b.latent {
                    assert_eq!(a.label, b.label);
                }
            }
        }
    }

    #[test]
    fn noise_only_touches_labels() {
        let clean = corpus(5, 0.0);
        let noisy = corpus(5, 0.5);
        let mut changed = 0;
        for (c, n) in clean.iter().zip(&noisy) {
            assert_eq!(c.profile, n.profile);
            assert_eq!(c.clean_label, n.clean_label);
            changed += usize::from(c.label != n.label);
        }
        // Half are redrawn, four fifths of those land elsewhere.
        assert!((90..150).contains(&changed), "{changed}");
    }

    #[test]
    fn ids_are_unique_and_sectors_cycle() {
        let items = corpus(1, 0.0);
        let ids: std::collections::HashSet<_> = items.iter().map(|i| &i.profile_id).collect();
        assert_eq!(ids.len(), items.len());
        let sectors: std::collections::HashSet<_> = items.iter().map(|i| &i.sector).collect();
        assert_eq!(sectors.len(), 11);
    }

    #[test]
    fn invalid_planted_item() {
        let schema = Arc::new(default_schema());
        let spec = SynthSpec {
            planted: OutcomeId::new(0, 5),
            ..SynthSpec::default()
        };
        assert!(synth_corpus(&schema, &spec).is_err());
    }
}

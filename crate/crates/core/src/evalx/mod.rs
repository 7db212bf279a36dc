//! Metrics, experiment runners and the synthetic planted-factor corpus.

mod runners;
mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::DecisionLabel;
use crate::schema::{FactorProfile, Polarity};

pub use runners::{
    cot_baseline, cross_sector_grid, k_sweep, predict_quantile, regime_comparison, CotCase, CotInput, GridCell,
    RegimeResult,
};
pub use synth::{synth_corpus, SynthItem, SynthSpec, DEFAULT_CLASS_PROPORTIONS};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and gold ids differ: {missing_preds} gold id(s) lack a prediction (e.g. {example:?}), {extra_preds} prediction(s) lack a gold label")]
    IdMismatch {
        missing_preds: usize,
        extra_preds: usize,
        example: Option<String>,
    },
    #[error("nothing to evaluate")]
    Empty,
}

pub type Labels = BTreeMap<String, DecisionLabel>;

/// Rows are gold labels, columns predictions, both in
/// [`DecisionLabel::ALL`] order.
pub type Confusion = [[usize; 5]; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: DecisionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Confusion,
}

fn check_ids<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> Result<(), EvalError> {
    let missing: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
    let extra = a.keys().filter(|k| !b.contains_key(*k)).count();
    if !missing.is_empty() || extra > 0 {
        return Err(EvalError::IdMismatch {
            missing_preds: missing.len(),
            extra_preds: extra,
            example: missing.first().map(|s| s.to_string()),
        });
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn confusion(preds: &Labels, golds: &Labels) -> Result<Confusion, EvalError> {
    check_ids(preds, golds)?;
    let mut m = [[0usize; 5]; 5];
    for (id, gold) in golds {
        m[gold.index()][preds[id].index()] += 1;
    }
    Ok(m)
}

pub fn confusion_csv(m: &Confusion) -> String {
    let mut out = String::from("gold\\pred");
    for l in DecisionLabel::ALL {
        out.push(',');
        out.push_str(l.as_str());
    }
    out.push('\n');
    for (l, row) in DecisionLabel::ALL.iter().zip(m) {
        out.push_str(l.as_str());
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro precision, recall and F1. Zero divisions count as 0;
/// the macro mean runs over the classes that occur in either gold or
/// predictions.
pub fn evaluate(preds: &Labels, golds: &Labels) -> Result<EvalReport, EvalError> {
    let m = confusion(preds, golds)?;
    let n = golds.len();
    let trace: usize = (0..5).map(|i| m[i][i]).sum();
    let mut per_class = Vec::with_capacity(5);
    for (i, label) in DecisionLabel::ALL.into_iter().enumerate() {
        let support: usize = m[i].iter().sum();
        let predicted: usize = m.iter().map(|row| row[i]).sum();
        let tp = m[i][i];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            label,
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support + c.predicted > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    Ok(EvalReport {
        n,
        accuracy: ratio(trace, n),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        confusion: m,
    })
}

/// Expected macro F1 of guessing uniformly at random against gold class
/// counts, in the large-sample limit: per class, recall 1/5 and precision
/// equal to the class share.
pub fn random_baseline_macro_f1(gold_counts: [usize; 5]) -> f64 {
    let total: usize = gold_counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let f1s: Vec<f64> = gold_counts
        .iter()
        .map(|&c| {
            let q = c as f64 / total as f64;
            if q == 0.0 {
                0.0
            } else {
                2.0 * 0.2 * q / (0.2 + q)
            }
        })
        .collect();
    f1s.iter().sum::<f64>() / 5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub agreement_rate: f64,
    /// For each nearest-neighbor label with at least one case, the share of
    /// system predictions per label in [`DecisionLabel::ALL`] order.
    pub conditional: BTreeMap<DecisionLabel, [f64; 5]>,
    pub counts: BTreeMap<DecisionLabel, [usize; 5]>,
}

/// How often the system's call equals the label of the nearest example.
pub fn agreement_analysis(system: &Labels, nearest: &Labels) -> Result<AgreementReport, EvalError> {
    let m = confusion(system, nearest)?;
    let n = nearest.len();
    let agree: usize = (0..5).map(|i| m[i][i]).sum();
    let mut conditional = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (i, label) in DecisionLabel::ALL.into_iter().enumerate() {
        let row_total: usize = m[i].iter().sum();
        if row_total == 0 {
            continue;
        }
        let mut shares = [0.0; 5];
        for (s, c) in shares.iter_mut().zip(m[i]) {
            *s = c as f64 / row_total as f64;
        }
        conditional.insert(label, shares);
        counts.insert(label, m[i]);
    }
    Ok(AgreementReport {
        n,
        agreement_rate: ratio(agree, n),
        conditional,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub profile_id: String,
    pub positive_mass: f64,
    pub negative_mass: f64,
}

/// Mean probability on positive- and negative-polarity items per profile,
/// grouped by label. Every label has an entry, possibly empty.
pub fn density_report<'a, I>(profiles: I) -> BTreeMap<DecisionLabel, Vec<DensityPoint>>
where
    I: IntoIterator<Item = (&'a str, &'a FactorProfile, DecisionLabel)>,
{
    let mut groups: BTreeMap<DecisionLabel, Vec<DensityPoint>> =
        DecisionLabel::ALL.into_iter().map(|l| (l, Vec::new())).collect();
    for (id, profile, label) in profiles {
        let polarities = profile.schema().polarities();
        let mean_of = |want: Polarity| {
            let vals: Vec<f64> = polarities
                .iter()
                .zip(profile.flatten())
                .filter(|(p, _)| **p == want)
                .map(|(_, v)| *v)
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        groups.entry(label).or_default().push(DensityPoint {
            profile_id: id.to_string(),
            positive_mass: mean_of(Polarity::Positive),
            negative_mass: mean_of(Polarity::Negative),
        });
    }
    groups
}

pub fn density_csv(groups: &BTreeMap<DecisionLabel, Vec<DensityPoint>>) -> String {
    let mut out = String::from("label,profile_id,positive_mass,negative_mass\n");
    for label in DecisionLabel::ALL {
        for p in groups.get(&label).into_iter().flatten() {
            let _ = writeln!(out, "{label},{},{},{}", p.profile_id, p.positive_mass, p.negative_mass);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{default_schema, LikelihoodGrade};
    use proptest::prelude::*;
    use std::sync::Arc;
    use DecisionLabel::*;

    fn labels(pairs: &[(&str, DecisionLabel)]) -> Labels {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn from_abbrev(ids: &str, text: &str) -> Labels {
        ids.split(' ')
            .zip(text.split(' '))
            .map(|(id, a)| (id.to_string(), DecisionLabel::parse(a).unwrap()))
            .collect()
    }

    #[test]
    fn ten_item_fixture() {
        // Hand-worked: SB P=R=2/3; B P=R=1/2; H P=1/3 R=1/2 F1=2/5;
        // S P=R=1; SS P=1 R=1/2 F1=2/3. Macro F1 = 97/150.
        let ids = "a b c d e f g h i j";
        let golds = from_abbrev(ids, "SB SB SB B B H H S SS SS");
        let preds = from_abbrev(ids, "SB SB B B H H SB S SS H");
        let r = evaluate(&preds, &golds).unwrap();
        assert_eq!(r.accuracy, 0.6);
        assert!((r.macro_precision - 0.7).abs() < 1e-15);
        assert!((r.macro_recall - 19.0 / 30.0).abs() < 1e-15);
        assert!((r.macro_f1 - 97.0 / 150.0).abs() < 1e-15);
        assert_eq!(r.per_class[2].f1, 0.4);
        assert_eq!(r.confusion[2], [1, 0, 1, 0, 0]);
    }

    #[test]
    fn perfect_and_degenerate_predictions() {
        let golds = labels(&[("a", Buy), ("b", Sell), ("c", Hold)]);
        let r = evaluate(&golds, &golds).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                assert!(i == j || *c == 0);
            }
        }

        let all_buy = labels(&[("a", Buy), ("b", Buy), ("c", Buy)]);
        let m = confusion(&all_buy, &golds).unwrap();
        assert!(m.iter().all(|row| row.iter().enumerate().all(|(j, c)| j == 1 || *c == 0)));
        let r = evaluate(&all_buy, &golds).unwrap();
        assert_eq!(r.per_class[3].precision, 0.0);
    }

    #[test]
    fn id_mismatch() {
        let a = labels(&[("a", Buy)]);
        let b = labels(&[("b", Buy)]);
        assert!(matches!(evaluate(&a, &b), Err(EvalError::IdMismatch { missing_preds: 1, extra_preds: 1, .. })));
        assert_eq!(evaluate(&Labels::new(), &Labels::new()), Err(EvalError::Empty));
    }

    #[test]
    fn confusion_csv_layout() {
        let golds = labels(&[("a", Buy)]);
        let csv = confusion_csv(&confusion(&golds, &golds).unwrap());
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "gold\\pred,strong-buy,buy,hold,sell,strong-sell");
        assert_eq!(lines[2], "buy,0,1,0,0,0");
    }

    #[test]
    fn random_baseline_matches_simulation() {
        let counts = [34, 15, 21, 9, 21];
        let analytic = random_baseline_macro_f1(counts);
        assert!((analytic - 0.191_434_890_375_176_3).abs() < 1e-12);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut golds = Labels::new();
        let mut k = 0;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c * 400 {
                golds.insert(format!("{k:06}"), DecisionLabel::ALL[i]);
                k += 1;
            }
        }
        let preds: Labels = golds.keys().map(|id| (id.clone(), DecisionLabel::ALL[rng.gen_range(0..5)])).collect();
        let simulated = evaluate(&preds, &golds).unwrap().macro_f1;
        assert!((simulated - analytic).abs() < 0.01, "{simulated} vs {analytic}");
    }

    #[test]
    fn agreement_examples() {
        let a = labels(&[("x", StrongBuy), ("y", Hold), ("z", StrongBuy)]);
        assert_eq!(agreement_analysis(&a, &a).unwrap().agreement_rate, 1.0);
        let b = labels(&[("x", Sell), ("y", Buy), ("z", Sell)]);
        let r = agreement_analysis(&a, &b).unwrap();
        assert_eq!(r.agreement_rate, 0.0);
        assert_eq!(r.conditional[&Sell], [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(!r.conditional.contains_key(&Hold));
    }

    #[test]
    fn density_of_positive_items() {
        let schema = Arc::new(default_schema());
        // Lead outcome "very likely", second "unlikely": positive leads carry 0.75.
        let grades = (0..15)
            .map(|i| {
                if schema.outcome_count(i) == 2 {
                    vec![LikelihoodGrade::VeryLikely, LikelihoodGrade::Unlikely]
                } else {
                    vec![LikelihoodGrade::VeryLikely, LikelihoodGrade::Unlikely, LikelihoodGrade::Unlikely]
                }
            })
            .collect();
        let p = FactorProfile::from_grades(schema, grades, vec![]).unwrap();
        let groups = density_report([("a", &p, Buy)]);
        assert!(groups[&StrongBuy].is_empty());
        let point = &groups[&Buy][0];
        // Historical bullish leads are 0.6 and count as positive too.
        assert!(point.positive_mass > 0.6 && point.positive_mass < 0.75);
        let csv = density_csv(&groups);
        assert!(csv.starts_with("label,profile_id,positive_mass,negative_mass\nbuy,a,"));
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_order_free(raw in proptest::collection::vec((0usize..5, 0usize..5), 1..80)) {
            let golds: Labels = raw.iter().enumerate().map(|(i, (g, _))| (format!("{i:03}"), DecisionLabel::ALL[*g])).collect();
            let preds: Labels = raw.iter().enumerate().map(|(i, (_, p))| (format!("{i:03}"), DecisionLabel::ALL[*p])).collect();
            let r = evaluate(&preds, &golds).unwrap();
            for v in [r.accuracy, r.macro_f1, r.macro_precision, r.macro_recall] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let gold_list: Vec<_> = golds.values().copied().collect();
            let dist = crate::labeler::class_distribution(&gold_list);
            for (i, row) in r.confusion.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<usize>(), dist[i]);
            }
            let renamed_g: Labels = golds.iter().map(|(k, v)| (format!("z{}", 999 - k.parse::<usize>().unwrap()), *v)).collect();
            let renamed_p: Labels = preds.iter().map(|(k, v)| (format!("z{}", 999 - k.parse::<usize>().unwrap()), *v)).collect();
            prop_assert_eq!(evaluate(&renamed_p, &renamed_g).unwrap(), r);
        }
    }
}

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport, Labels};
use crate::analogy::{corpus_from_stored, majority_vote, retrieve, RetrieveOptions};
use crate::btmodel::{train, Regime, SalienceModel, TrainOptions};
use crate::decide::{assign_by_quantile, scale_counts, score_all, ClassCounts};
use crate::extractor::{cot_label, CompletionClient, CotPayload};
use crate::ingest::{StoredProfile, TranscriptRecord};
use crate::labeler::{class_distribution, DecisionLabel};
use crate::schema::FactorProfile;

fn golds(profiles: &[StoredProfile]) -> Labels {
    profiles
        .iter()
        .filter_map(|p| Some((p.profile_id.clone(), p.label?)))
        .collect()
}

fn label_counts(profiles: &[StoredProfile]) -> ClassCounts {
    let labels: Vec<DecisionLabel> = profiles.iter().filter_map(|p| p.label).collect();
    class_distribution(&labels)
}

/// Scores every profile and fills label buckets to `counts`.
pub fn predict_quantile(
    profiles: &[StoredProfile],
    model: &SalienceModel,
    counts: ClassCounts,
) -> anyhow::Result<Labels> {
    let scores = score_all(profiles.iter().map(|p| (p.profile_id.as_str(), &p.profile)), model)?;
    Ok(assign_by_quantile(&scores, counts)?)
}

/// Train on `train`, predict `test` with bucket sizes taken from the
/// training label distribution, evaluate against `test` labels.
fn train_and_evaluate(train_set: &[StoredProfile], test: &[StoredProfile], opts: &TrainOptions) -> anyhow::Result<(usize, EvalReport)> {
    let file = train(train_set, opts)?;
    let labeled: Vec<StoredProfile> = test.iter().filter(|p| p.label.is_some()).cloned().collect();
    let counts = scale_counts(label_counts(train_set), labeled.len());
    let preds = predict_quantile(&labeled, &file.model(), counts)?;
    Ok((file.pairs, evaluate(&preds, &golds(&labeled))?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: Regime,
    pub pairs: usize,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Same split, one model per pairing regime.
pub fn regime_comparison(train_set: &[StoredProfile], test: &[StoredProfile], base: &TrainOptions) -> Vec<RegimeResult> {
    Regime::ALL
        .into_iter()
        .map(|regime| {
            let opts = TrainOptions { regime, ..*base };
            match train_and_evaluate(train_set, test, &opts) {
                Ok((pairs, report)) => RegimeResult {
                    regime,
                    pairs,
                    report: Some(report),
                    error: None,
                },
                Err(e) => RegimeResult {
                    regime,
                    pairs: 0,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub train_sector: String,
    pub test_sector: String,
    pub n_train: usize,
    pub n_test: usize,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Train on each sector, test on every sector. Diagonal cells are
/// in-sample.
pub fn cross_sector_grid(profiles: &[StoredProfile], base: &TrainOptions) -> Vec<GridCell> {
    let sectors: Vec<String> = profiles
        .iter()
        .filter_map(|p| p.sector.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let members = |s: &str| -> Vec<StoredProfile> {
        profiles
            .iter()
            .filter(|p| p.sector.as_deref() == Some(s))
            .cloned()
            .collect()
    };
    let groups: Vec<Vec<StoredProfile>> = sectors.iter().map(|s| members(s)).collect();
    let rows: Vec<Vec<GridCell>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sectors
            .iter()
            .zip(&groups)
            .map(|(train_sector, train_set)| {
                let (sectors, groups) = (&sectors, &groups);
                scope.spawn(move || {
                    let trained = train(train_set, base);
                    sectors
                        .iter()
                        .zip(groups)
                        .map(|(test_sector, test)| {
                            let result = trained.as_ref().map_err(|e| e.to_string()).and_then(|file| {
                                let labeled: Vec<StoredProfile> = test.iter().filter(|p| p.label.is_some()).cloned().collect();
                                let counts = scale_counts(label_counts(train_set), labeled.len());
                                predict_quantile(&labeled, &file.model(), counts)
                                    .and_then(|preds| Ok(evaluate(&preds, &golds(&labeled))?))
                                    .map_err(|e| e.to_string())
                            });
                            GridCell {
                                train_sector: train_sector.clone(),
                                test_sector: test_sector.clone(),
                                n_train: train_set.len(),
                                n_test: test.len(),
                                macro_f1: result.as_ref().ok().map(|r| r.macro_f1),
                                accuracy: result.as_ref().ok().map(|r| r.accuracy),
                                error: result.err(),
                            }
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
    });
    rows.into_iter().flatten().collect()
}

/// Majority vote over the K nearest labeled neighbors, for each K.
pub fn k_sweep(
    pool: &[StoredProfile],
    test: &[StoredProfile],
    ks: &[usize],
    exclude_same_ticker: bool,
) -> anyhow::Result<Vec<(usize, EvalReport)>> {
    let corpus = corpus_from_stored(pool);
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let labeled: Vec<&StoredProfile> = test.iter().filter(|p| p.label.is_some()).collect();
    let mut neighbor_lists = Vec::with_capacity(labeled.len());
    for t in &labeled {
        let opts = RetrieveOptions {
            target_id: Some(&t.profile_id),
            exclude_ticker: exclude_same_ticker.then_some(t.ticker.as_str()),
        };
        neighbor_lists.push(retrieve(&t.profile, &corpus, max_k, opts)?);
    }
    let gold: Labels = labeled
        .iter()
        .map(|p| (p.profile_id.clone(), p.label.expect("filtered")))
        .collect();
    ks.iter()
        .map(|&k| {
            let preds: Labels = labeled
                .iter()
                .zip(&neighbor_lists)
                .map(|(t, ns)| {
                    let vote = majority_vote(&ns[..k.min(ns.len())]).expect("retrieve returns at least one");
                    (t.profile_id.clone(), vote)
                })
                .collect();
            Ok((k, evaluate(&preds, &gold)?))
        })
        .collect()
}

/// What a chain-of-thought baseline reads for one case.
#[derive(Debug, Clone)]
pub enum CotInput {
    Transcript(TranscriptRecord),
    Summary(String),
    Profile(FactorProfile),
}

#[derive(Debug, Clone)]
pub struct CotCase {
    pub profile_id: String,
    pub input: CotInput,
    pub company: Option<String>,
    pub date: NaiveDate,
    pub gold: DecisionLabel,
}

/// Runs one CoT prompt per case and evaluates the parsed calls.
pub fn cot_baseline(client: &dyn CompletionClient, cases: &[CotCase]) -> anyhow::Result<(Labels, EvalReport)> {
    let mut preds = Labels::new();
    for case in cases {
        let payload = match &case.input {
            CotInput::Transcript(t) => CotPayload::Transcript(t),
            CotInput::Summary(s) => CotPayload::Summary(s),
            CotInput::Profile(p) => CotPayload::Profile(p),
        };
        let label = cot_label(client, payload, case.company.as_deref(), case.date)?;
        preds.insert(case.profile_id.clone(), label);
    }
    let gold: Labels = cases.iter().map(|c| (c.profile_id.clone(), c.gold)).collect();
    let report = evaluate(&preds, &gold)?;
    Ok((preds, report))
}

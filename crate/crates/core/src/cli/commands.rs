use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{require, RunConfig};
use super::*;
use crate::analogy::{analogical_decision, corpus_from_stored, retrieve, Neighbor, RetrieveOptions};
use crate::btmodel::{labeled_items, preference_pairs, AccumulateMode, FitOptions, ModelFile, TrainOptions};
use crate::decide::{
    assign_by_quantile, assign_by_threshold, scale_counts, score_all, ClassCounts, DecideError,
};
use crate::evalx::{
    agreement_analysis, confusion_csv, cot_baseline, cross_sector_grid, density_csv, density_report, evaluate,
    k_sweep, random_baseline_macro_f1, regime_comparison, synth_corpus, CotCase, CotInput, Labels, SynthSpec,
    DEFAULT_CLASS_PROPORTIONS,
};
use crate::extractor::{build_client, extract_many, ClientConfig, CompletionClient};
use crate::ingest::{
    load_financials, load_labels, load_manifest, load_prices, load_profiles, load_transcript, read_jsonl,
    write_jsonl_to, LabelRecord, ProfileRecord, StoredProfile,
};
use crate::labeler::{class_distribution, label_from_prices, DecisionLabel};
use crate::schema::{default_schema, FactorSchema};

struct Ctx {
    cfg: RunConfig,
    schema: Arc<FactorSchema>,
}

pub(super) fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let schema = match cli.schema.as_ref().or(cfg.schema.as_ref()) {
        Some(p) => FactorSchema::from_json_file(p).with_context(|| format!("loading schema {}", p.display()))?,
        None => default_schema(),
    };
    let ctx = Ctx {
        cfg,
        schema: Arc::new(schema),
    };
    match cli.command {
        Command::Schema(out) => schema_cmd(&ctx, &out),
        Command::Ingest(a) => ingest_cmd(&ctx, &a),
        Command::Label(a) => label_cmd(&ctx, &a),
        Command::Extract(a) => extract_cmd(&ctx, &a),
        Command::Pairs(a) => pairs_cmd(&ctx, &a),
        Command::Fit(a) => fit_cmd(&ctx, &a),
        Command::Predict(a) => predict_cmd(&ctx, &a),
        Command::Retrieve(a) => retrieve_cmd(&ctx, &a),
        Command::DecideAnalogical(a) => decide_analogical_cmd(&ctx, &a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Synth(a) => synth_cmd(&ctx, &a),
        Command::Report(a) => report_cmd(&ctx, a.kind),
    }
}

// ---------------------------------------------------------------------------
// Output helpers

fn emit_bytes(out: &OutArgs, bytes: &[u8]) -> Result<(), CliError> {
    match &out.out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).context("writing to stdout")?;
            stdout.flush().context("writing to stdout")?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &OutArgs, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| internal(e.into()))?;
    text.push('\n');
    emit_bytes(out, text.as_bytes())
}

fn emit_jsonl<T: Serialize>(out: &OutArgs, items: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, items).map_err(|e| internal(e.into()))?;
    emit_bytes(out, &buf)
}

// ---------------------------------------------------------------------------
// Shared inputs

fn load_input(ctx: &Ctx, input: &ProfileInput) -> anyhow::Result<Vec<StoredProfile>> {
    let path = require(input.profiles.as_ref(), ctx.cfg.profiles.as_ref(), "profiles")?;
    read_profiles(ctx, &path, input.labels.as_ref().or(ctx.cfg.labels.as_ref()))
}

fn read_profiles(ctx: &Ctx, path: &Path, labels: Option<&PathBuf>) -> anyhow::Result<Vec<StoredProfile>> {
    let mut profiles = load_profiles(path, &ctx.schema)?;
    if let Some(labels) = labels {
        let map: HashMap<String, DecisionLabel> = load_labels(labels)?.into_iter().collect();
        for p in &mut profiles {
            p.label = map.get(&p.profile_id).copied();
        }
    }
    Ok(profiles)
}

fn label_map(path: &Path) -> anyhow::Result<Labels> {
    Ok(load_labels(path)?.into_iter().collect())
}

fn train_options(ctx: &Ctx, p: &PairingArgs) -> TrainOptions {
    TrainOptions {
        regime: p.regime.unwrap_or(ctx.cfg.regime),
        seed: p.seed.unwrap_or(ctx.cfg.seed),
        cap: if p.no_cap { None } else { p.cap.or(ctx.cfg.cap) },
        ..TrainOptions::default()
    }
}

fn client_config(ctx: &Ctx, a: &ClientArgs) -> ClientConfig {
    let mut c = ctx.cfg.client.clone();
    if let Some(m) = a.mode {
        c.mode = m.into();
    }
    if let Some(d) = a.fixtures.as_ref().or(ctx.cfg.fixtures.as_ref()) {
        c.fixture_dir = Some(d.clone());
    }
    if let Some(e) = &a.endpoint {
        c.endpoint = e.clone();
    }
    if let Some(m) = &a.model_name {
        c.model = m.clone();
    }
    if let Some(n) = a.concurrency {
        c.concurrency = n.max(1);
    }
    if let Some(r) = a.retries {
        c.max_retries = r;
    }
    if let Some(t) = a.timeout_secs {
        c.timeout_secs = t;
    }
    c
}

fn client(ctx: &Ctx, a: &ClientArgs) -> anyhow::Result<Box<dyn CompletionClient>> {
    Ok(build_client(&client_config(ctx, a))?)
}

// ---------------------------------------------------------------------------
// Commands

fn schema_cmd(ctx: &Ctx, out: &OutArgs) -> Result<(), CliError> {
    let body: serde_json::Value = serde_json::from_str(&ctx.schema.to_json_pretty()).map_err(|e| internal(e.into()))?;
    emit_json(
        out,
        &json!({
            "hash": ctx.schema.hash_hex(),
            "factor_count": ctx.schema.factor_count(),
            "item_count": ctx.schema.item_count(),
            "schema": body,
        }),
    )
}

#[derive(Serialize)]
struct IngestSummary {
    profile_id: String,
    ticker: String,
    announcement_date: chrono::NaiveDate,
    prepared_remarks: usize,
    qa_pairs: usize,
    price_points: usize,
    financial_quarters: Option<usize>,
}

fn ingest_cmd(ctx: &Ctx, a: &IngestArgs) -> Result<(), CliError> {
    let path = require(a.manifest.as_ref(), ctx.cfg.manifest.as_ref(), "manifest")?;
    let manifest = load_manifest(&path)?;
    let mut rows = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let t = load_transcript(&e.transcript_path)?;
        let prices = load_prices(&e.prices_path)?;
        let quarters = match &e.financials_path {
            Some(f) => {
                let fin = load_financials(f)?;
                Some(fin.eps.len().max(fin.revenue.len()))
            }
            None => None,
        };
        rows.push(IngestSummary {
            profile_id: e.profile_id.clone().unwrap_or_else(|| t.default_profile_id()),
            ticker: t.ticker.clone(),
            announcement_date: t.announcement_date,
            prepared_remarks: t.prepared_remarks.len(),
            qa_pairs: t.qa_pairs.len(),
            price_points: prices.len(),
            financial_quarters: quarters,
        });
    }
    emit_jsonl(&a.out, &rows)
}

fn horizon(ctx: &Ctx, flag: Option<u32>) -> anyhow::Result<u32> {
    let h = flag.unwrap_or(ctx.cfg.horizon_days);
    if h == 0 {
        bail!("--horizon-days must be at least 1");
    }
    Ok(h)
}

fn label_cmd(ctx: &Ctx, a: &LabelArgs) -> Result<(), CliError> {
    let path = require(a.manifest.as_ref(), ctx.cfg.manifest.as_ref(), "manifest")?;
    let days = horizon(ctx, a.horizon_days)?;
    let manifest = load_manifest(&path)?;
    let mut rows = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let t = load_transcript(&e.transcript_path)?;
        let prices = load_prices(&e.prices_path)?;
        let profile_id = e.profile_id.clone().unwrap_or_else(|| t.default_profile_id());
        let row = match label_from_prices(&prices, t.announcement_date, days) {
            Ok(r) => LabelRecord {
                profile_id,
                label: Some(r.label),
                return_pct: Some(r.return_pct),
            },
            Err(err) => {
                tracing::warn!(%profile_id, "unlabeled: {err}");
                LabelRecord {
                    profile_id,
                    label: None,
                    return_pct: None,
                }
            }
        };
        rows.push(row);
    }
    emit_jsonl(&a.out, &rows)
}

fn extract_cmd(ctx: &Ctx, a: &ExtractArgs) -> Result<(), CliError> {
    let path = require(a.manifest.as_ref(), ctx.cfg.manifest.as_ref(), "manifest")?;
    let days = horizon(ctx, a.horizon_days)?;
    let manifest = load_manifest(&path)?;
    let client = client(ctx, &a.client)?;
    let mut inputs = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let fin = e.financials_path.as_ref().map(load_financials).transpose()?;
        inputs.push((load_transcript(&e.transcript_path)?, load_prices(&e.prices_path)?, fin));
    }
    let workers = a.workers.unwrap_or(ctx.cfg.workers).max(1);
    let results = extract_many(client.as_ref(), &ctx.schema, &inputs, workers);
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for ((entry, (t, prices, _)), result) in manifest.entries.iter().zip(&inputs).zip(results) {
        let profile_id = entry.profile_id.clone().unwrap_or_else(|| t.default_profile_id());
        match result {
            Ok(profile) => {
                let label = entry
                    .label
                    .or_else(|| label_from_prices(prices, t.announcement_date, days).ok().map(|r| r.label));
                records.push(ProfileRecord::from(&StoredProfile {
                    profile_id,
                    ticker: t.ticker.clone(),
                    date: t.announcement_date,
                    sector: t.sector.clone(),
                    label,
                    profile,
                }));
            }
            Err(e) => failures.push(format!("{profile_id}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(anyhow!("{} of {} extractions failed:\n  {}", failures.len(), inputs.len(), failures.join("\n  ")).into());
    }
    emit_jsonl(&a.out, &records)
}

fn pairs_cmd(ctx: &Ctx, a: &PairsArgs) -> Result<(), CliError> {
    let profiles = load_input(ctx, &a.input)?;
    let opts = train_options(ctx, &a.pairing);
    tracing::info!(regime = %opts.regime, seed = opts.seed, cap = ?opts.cap, "pairing");
    let pairs = preference_pairs(&labeled_items(&profiles), opts.regime, opts.seed, opts.cap);
    emit_jsonl(&a.out, &pairs)
}

fn fit_cmd(ctx: &Ctx, a: &FitArgs) -> Result<(), CliError> {
    let profiles = load_input(ctx, &a.input)?;
    let defaults = FitOptions::default();
    let opts = TrainOptions {
        mode: if a.literal_diagonal {
            AccumulateMode::LiteralDiagonal
        } else {
            AccumulateMode::CrossItem
        },
        fit: FitOptions {
            tol: a.tol.unwrap_or(defaults.tol),
            max_iter: a.max_iter.unwrap_or(defaults.max_iter),
            ..defaults
        },
        ..train_options(ctx, &a.pairing)
    };
    let file = crate::btmodel::train(&profiles, &opts)?;
    tracing::info!(pairs = file.pairs, iterations = file.iterations, "fitted");
    emit_json(&a.out, &file)
}

#[derive(Debug, Serialize, Deserialize)]
struct Prediction {
    profile_id: String,
    score: f64,
    label: DecisionLabel,
}

fn predict_cmd(ctx: &Ctx, a: &PredictArgs) -> Result<(), CliError> {
    let model_path = require(a.model.as_ref(), ctx.cfg.model.as_ref(), "model")?;
    let file = ModelFile::load(&model_path)?;
    if file.schema_hash != ctx.schema.hash_hex() {
        return Err(DecideError::SchemaMismatch.into());
    }
    let profiles = load_input(ctx, &a.input)?;
    let scores = score_all(profiles.iter().map(|p| (p.profile_id.as_str(), &p.profile)), &file.model())?;
    let rows: Vec<Prediction> = if let Some(cuts) = &a.cutpoints {
        let cuts: [f64; 4] = cuts.as_slice().try_into().map_err(|_| anyhow!("--cutpoints takes four values"))?;
        scores
            .iter()
            .map(|s| {
                Ok(Prediction {
                    profile_id: s.profile_id.clone(),
                    score: s.score,
                    label: assign_by_threshold(s.score, cuts)?,
                })
            })
            .collect::<Result<_, DecideError>>()?
    } else {
        let reference: ClassCounts = if let Some(path) = &a.counts_from {
            let labels: Vec<DecisionLabel> = load_labels(path)?.into_iter().map(|(_, l)| l).collect();
            if labels.is_empty() {
                return Err(anyhow!("{} holds no labels", path.display()).into());
            }
            class_distribution(&labels)
        } else if let Some(c) = &a.counts {
            c.as_slice().try_into().map_err(|_| anyhow!("--counts takes five values"))?
        } else {
            DEFAULT_CLASS_PROPORTIONS
        };
        let counts = scale_counts(reference, scores.len());
        tracing::info!(?counts, "bucket sizes");
        let labels = assign_by_quantile(&scores, counts)?;
        scores
            .iter()
            .map(|s| Prediction {
                profile_id: s.profile_id.clone(),
                score: s.score,
                label: labels[&s.profile_id],
            })
            .collect()
    };
    emit_jsonl(&a.out, &rows)
}

#[derive(Serialize)]
struct RetrieveOutput {
    target: String,
    k: usize,
    neighbors: Vec<Neighbor>,
}

fn do_retrieve(ctx: &Ctx, a: &RetrieveArgs) -> anyhow::Result<(StoredProfile, Vec<StoredProfile>, Vec<Neighbor>)> {
    let k = a.k.unwrap_or(ctx.cfg.k);
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let corpus_path = require(a.corpus.as_ref(), ctx.cfg.profiles.as_ref(), "corpus")?;
    let pool = read_profiles(ctx, &corpus_path, ctx.cfg.labels.as_ref())?;
    let target = match &a.targets {
        Some(t) => load_profiles(t, &ctx.schema)?.into_iter().find(|p| p.profile_id == a.target),
        None => pool.iter().find(|p| p.profile_id == a.target).cloned(),
    }
    .with_context(|| format!("no profile with id {:?}", a.target))?;
    let corpus = corpus_from_stored(&pool);
    let opts = RetrieveOptions {
        target_id: Some(&target.profile_id),
        exclude_ticker: a.exclude_ticker.then_some(target.ticker.as_str()),
    };
    let neighbors = retrieve(&target.profile, &corpus, k, opts)?;
    Ok((target, pool, neighbors))
}

fn retrieve_cmd(ctx: &Ctx, a: &RetrieveArgs) -> Result<(), CliError> {
    let (target, _, neighbors) = do_retrieve(ctx, a)?;
    emit_json(
        &a.out,
        &RetrieveOutput {
            target: target.profile_id,
            k: neighbors.len(),
            neighbors,
        },
    )
}

fn decide_analogical_cmd(ctx: &Ctx, a: &DecideAnalogicalArgs) -> Result<(), CliError> {
    let (target, pool, neighbors) = do_retrieve(ctx, &a.retrieve)?;
    let client = client(ctx, &a.client)?;
    let by_id: HashMap<&str, &StoredProfile> = pool.iter().map(|p| (p.profile_id.as_str(), p)).collect();
    let shown: Vec<_> = neighbors
        .iter()
        .map(|n| (n.clone(), &by_id[n.profile_id.as_str()].profile))
        .collect();
    let company = a.company.as_deref().unwrap_or(&target.ticker);
    let decision = analogical_decision(client.as_ref(), &target.profile, Some(company), target.date, &shown)?;
    emit_json(
        &a.retrieve.out,
        &json!({
            "target": target.profile_id,
            "neighbors": neighbors,
            "decision": decision,
        }),
    )
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let preds = label_map(&a.preds)?;
    let golds = label_map(&a.golds)?;
    let report = evaluate(&preds, &golds)?;
    if let Some(path) = &a.confusion_csv {
        std::fs::write(path, confusion_csv(&report.confusion)).with_context(|| format!("writing {}", path.display()))?;
    }
    emit_json(&a.out, &report)
}

fn synth_cmd(ctx: &Ctx, a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = SynthSpec {
        seed: a.seed.unwrap_or(ctx.cfg.seed),
        ..SynthSpec::default()
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(x) = a.noise {
        if !(0.0..=1.0).contains(&x) {
            return Err(anyhow!("--noise must lie in [0, 1]").into());
        }
        spec.noise = x;
    }
    if let Some(p) = &a.planted {
        spec.planted = ctx.schema.parse_outcome_ref(p)?;
    }
    if let Some(s) = a.sectors {
        spec.sectors = s;
    }
    if let Some(c) = a.companies {
        spec.companies = c;
    }
    tracing::info!(seed = spec.seed, n = spec.n, noise = spec.noise, planted = %ctx.schema.item_label(spec.planted), "synthesizing");
    let items = synth_corpus(&ctx.schema, &spec)?;
    let records: Vec<ProfileRecord> = items.iter().map(|i| ProfileRecord::from(&i.to_stored())).collect();
    emit_jsonl(&a.out, &records)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Deserialize)]
struct SummaryLine {
    profile_id: String,
    summary: String,
}

fn report_cmd(ctx: &Ctx, kind: ReportKind) -> Result<(), CliError> {
    match kind {
        ReportKind::Salience { model, top, out } => {
            let path = require(model.as_ref(), ctx.cfg.model.as_ref(), "model")?;
            let file = ModelFile::load(&path)?;
            let ranked = file.model().top_factors(&ctx.schema, top)?;
            let rows: Vec<_> = ranked
                .iter()
                .enumerate()
                .map(|(i, (id, p))| json!({"rank": i + 1, "item": ctx.schema.item_label(*id), "salience": p}))
                .collect();
            emit_json(&out, &rows)
        }
        ReportKind::Density { input, out } => {
            let profiles = load_input(ctx, &input)?;
            let groups = density_report(
                profiles
                    .iter()
                    .filter_map(|p| Some((p.profile_id.as_str(), &p.profile, p.label?))),
            );
            emit_bytes(&out, density_csv(&groups).as_bytes())
        }
        ReportKind::Agreement { system, nearest, out } => {
            let report = agreement_analysis(&label_map(&system)?, &label_map(&nearest)?)?;
            emit_json(&out, &report)
        }
        ReportKind::Regimes {
            train,
            test,
            pairing,
            out,
        } => {
            let train_set = read_profiles(ctx, &train, None)?;
            let test_set = read_profiles(ctx, &test, None)?;
            emit_json(&out, &regime_comparison(&train_set, &test_set, &train_options(ctx, &pairing)))
        }
        ReportKind::Grid { input, pairing, out } => {
            let profiles = load_input(ctx, &input)?;
            emit_json(&out, &cross_sector_grid(&profiles, &train_options(ctx, &pairing)))
        }
        ReportKind::KSweep {
            pool,
            test,
            ks,
            exclude_ticker,
            out,
        } => {
            if ks.contains(&0) {
                return Err(anyhow!("every K must be at least 1").into());
            }
            let pool = read_profiles(ctx, &pool, None)?;
            let test = read_profiles(ctx, &test, None)?;
            let rows: Vec<_> = k_sweep(&pool, &test, &ks, exclude_ticker)?
                .into_iter()
                .map(|(k, r)| json!({"k": k, "report": r}))
                .collect();
            emit_json(&out, &rows)
        }
        ReportKind::RandomBaseline { golds, out } => {
            let labels: Vec<DecisionLabel> = label_map(&golds)?.into_values().collect();
            let counts = class_distribution(&labels);
            emit_json(
                &out,
                &json!({"n": labels.len(), "counts": counts, "expected_macro_f1": random_baseline_macro_f1(counts)}),
            )
        }
        ReportKind::Cot {
            input,
            profiles,
            summaries,
            manifest,
            client: client_args,
            out,
        } => {
            let client = client(ctx, &client_args)?;
            let cases = cot_cases(ctx, input, profiles.as_ref(), summaries.as_ref(), manifest.as_ref())?;
            let (preds, report) = cot_baseline(client.as_ref(), &cases)?;
            emit_json(&out, &json!({"input": format!("{input:?}").to_lowercase(), "predictions": preds, "report": report}))
        }
    }
}

fn cot_cases(
    ctx: &Ctx,
    kind: CotInputKind,
    profiles: Option<&PathBuf>,
    summaries: Option<&PathBuf>,
    manifest: Option<&PathBuf>,
) -> anyhow::Result<Vec<CotCase>> {
    if let CotInputKind::Transcript = kind {
        let path = require(manifest, ctx.cfg.manifest.as_ref(), "manifest")?;
        let m = load_manifest(&path)?;
        let mut cases = Vec::new();
        for e in &m.entries {
            let t = load_transcript(&e.transcript_path)?;
            let gold = match e.label {
                Some(l) => l,
                None => label_from_prices(&load_prices(&e.prices_path)?, t.announcement_date, ctx.cfg.horizon_days)?.label,
            };
            cases.push(CotCase {
                profile_id: e.profile_id.clone().unwrap_or_else(|| t.default_profile_id()),
                company: Some(t.display_name().to_string()),
                date: t.announcement_date,
                gold,
                input: CotInput::Transcript(t),
            });
        }
        return Ok(cases);
    }
    let path = require(profiles, ctx.cfg.profiles.as_ref(), "profiles")?;
    let stored = read_profiles(ctx, &path, ctx.cfg.labels.as_ref())?;
    let summary_map: BTreeMap<String, String> = match (kind, summaries) {
        (CotInputKind::Summary, Some(p)) => read_jsonl::<SummaryLine>(p)?
            .into_iter()
            .map(|s| (s.profile_id, s.summary))
            .collect(),
        (CotInputKind::Summary, None) => bail!("--summaries is required for the summary input"),
        _ => BTreeMap::new(),
    };
    stored
        .into_iter()
        .filter(|p| p.label.is_some())
        .map(|p| {
            let input = match kind {
                CotInputKind::Summary => CotInput::Summary(
                    summary_map
                        .get(&p.profile_id)
                        .cloned()
                        .with_context(|| format!("no summary for {}", p.profile_id))?,
                ),
                _ => CotInput::Profile(p.profile.clone()),
            };
            Ok(CotCase {
                company: Some(p.ticker.clone()),
                date: p.date,
                gold: p.label.expect("filtered"),
                profile_id: p.profile_id,
                input,
            })
        })
        .collect()
}

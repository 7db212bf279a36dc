//! Prompt construction, chat-completion clients and reply parsing.
//!
//! Transcript factors are graded from one prompt over the whole call;
//! historical factors each get their own prompt over a data table. Replies
//! are parsed into grades and normalized into a [`FactorProfile`].

mod client;
mod parse;
mod prompts;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{FinancialHistory, PriceSeries, TranscriptRecord};
use crate::labeler::DecisionLabel;
use crate::schema::{Category, FactorProfile, FactorSchema, FactorSpec, LikelihoodGrade, SchemaError};

pub use client::{
    build_client, ClientConfig, ClientMode, CompletionClient, FixtureClient, FixtureRecord, LiveClient,
    RecordingClient, API_KEY_ENV,
};
pub use parse::{extract_json, parse_decision_response, parse_history_response, parse_profile_response, parse_recommendation, CotDecision};
pub use prompts::{
    build_analogy_prompt, build_cot_prompt, build_history_prompt, build_profile_prompt, sentence_case,
    CotPayload, HistoryMetric,
};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("reply is not valid JSON: {0}")]
    MalformedJson(String),
    #[error("reply has no entry for factor {0:?}")]
    MissingFactor(String),
    #[error("reply for factor {factor:?} has no likelihood for outcome {outcome:?}")]
    MissingOutcome { factor: String, outcome: String },
    #[error("factor {factor:?}, outcome {outcome:?}: unknown likelihood grade {token:?}")]
    UnknownGrade {
        factor: String,
        outcome: String,
        token: String,
    },
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("no {0} data on or before the announcement date")]
    EmptySeries(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error("schema factor {0:?} has no historical data source")]
    MissingHistory(String),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("environment variable {API_KEY_ENV} is not set; export it for live calls or use --mode fixture")]
    MissingApiKey,
    #[error("no fixture for exchange {hash} in {dir}")]
    FixtureMissing { hash: String, dir: PathBuf },
    #[error("{0}")]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseFormat {
    FreeText,
    Json,
}

/// One system + user message pair sent to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system_message: String,
    pub user_message: String,
    pub response_format: ResponseFormat,
}

impl ChatExchange {
    /// Hex SHA-256 over the serialized exchange; the fixture key.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("exchange serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

type SchemaSplit = (Option<FactorSchema>, Vec<usize>, Vec<usize>);

/// Splits a schema into the part graded from the transcript and the
/// historical factors graded from data tables. Returns the transcript
/// sub-schema (renumbered) and the original indices of both groups.
fn split_schema(schema: &FactorSchema) -> Result<SchemaSplit, ExtractError> {
    let (mut text, mut hist) = (Vec::new(), Vec::new());
    for (i, f) in schema.factors().iter().enumerate() {
        if f.category == Category::HistoricalMetric {
            hist.push(i);
        } else {
            text.push(i);
        }
    }
    let sub = if text.is_empty() {
        None
    } else {
        let specs: Vec<FactorSpec> = text
            .iter()
            .enumerate()
            .map(|(id, &i)| FactorSpec {
                id,
                ..schema.factors()[i].clone()
            })
            .collect();
        Some(FactorSchema::new(specs)?)
    };
    Ok((sub, text, hist))
}

/// Grades every factor of `schema` for one transcript: one transcript prompt
/// for the non-historical factors, then one history prompt per historical
/// factor, merged in schema order.
pub fn extract_profile(
    client: &dyn CompletionClient,
    schema: &Arc<FactorSchema>,
    transcript: &TranscriptRecord,
    prices: &PriceSeries,
    financials: Option<&FinancialHistory>,
) -> Result<FactorProfile, ExtractError> {
    let (sub, text_idx, hist_idx) = split_schema(schema)?;
    let mut grades: Vec<Vec<LikelihoodGrade>> = vec![Vec::new(); schema.factor_count()];
    let mut summaries = vec![String::new(); schema.factor_count()];

    if let Some(sub) = sub {
        let sub = Arc::new(sub);
        let exchange = build_profile_prompt(transcript, &sub);
        let reply = client.complete(&exchange)?;
        let partial = parse_profile_response(&reply, &sub)?;
        let partial_grades = partial.grades().expect("parsed profiles carry grades");
        for (k, &i) in text_idx.iter().enumerate() {
            grades[i] = partial_grades[k].clone();
            summaries[i] = partial.summaries()[k].clone();
        }
    }

    for &i in &hist_idx {
        let factor = &schema.factors()[i];
        let metric = HistoryMetric::for_factor(&factor.name).ok_or_else(|| ExtractError::MissingHistory(factor.name.clone()))?;
        let points = match metric {
            HistoryMetric::StockPrice => prices.points(),
            HistoryMetric::Eps | HistoryMetric::Revenue => {
                let fin = financials.ok_or_else(|| ExtractError::MissingHistory(factor.name.clone()))?;
                if metric == HistoryMetric::Eps {
                    &fin.eps[..]
                } else {
                    &fin.revenue[..]
                }
            }
        };
        let exchange = build_history_prompt(metric, points, transcript.announcement_date)?;
        let reply = client.complete(&exchange)?;
        grades[i] = parse_history_response(&reply, metric, factor)?;
    }

    Ok(FactorProfile::from_grades(schema.clone(), grades, summaries)?)
}

/// Runs [`extract_profile`] over many inputs with up to `workers` threads;
/// results keep input order.
pub fn extract_many(
    client: &dyn CompletionClient,
    schema: &Arc<FactorSchema>,
    inputs: &[(TranscriptRecord, PriceSeries, Option<FinancialHistory>)],
    workers: usize,
) -> Vec<Result<FactorProfile, ExtractError>> {
    let workers = workers.clamp(1, inputs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<FactorProfile, ExtractError>>>> =
        inputs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((t, p, f)) = inputs.get(i) else { break };
                let result = extract_profile(client, schema, t, p, f.as_ref());
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Asks the model for a decision over a transcript, summary or profile.
pub fn cot_decision(
    client: &dyn CompletionClient,
    payload: CotPayload<'_>,
    company: Option<&str>,
    date: chrono::NaiveDate,
) -> Result<CotDecision, ExtractError> {
    let exchange = build_cot_prompt(payload, company, date)?;
    parse_decision_response(&client.complete(&exchange)?)
}

/// Convenience for callers that only need the label.
pub fn cot_label(
    client: &dyn CompletionClient,
    payload: CotPayload<'_>,
    company: Option<&str>,
    date: chrono::NaiveDate,
) -> Result<DecisionLabel, ExtractError> {
    cot_decision(client, payload, company, date).map(|d| d.recommendation)
}

use std::path::PathBuf;
use std::sync::Arc;

use define_core::extractor::{extract_profile, ChatExchange, ExtractError, FixtureClient, RecordingClient};
use define_core::ingest::{load_financials, load_prices, load_transcript};
use define_core::schema::{default_schema, FactorProfile};
use serde::Deserialize;

fn dal() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dal")
}

#[derive(Deserialize)]
struct Expected {
    grades: Vec<Vec<u8>>,
    summaries: Vec<String>,
    probabilities: Vec<Vec<f64>>,
}

fn run_extraction(client: &dyn define_core::extractor::CompletionClient) -> Result<FactorProfile, ExtractError> {
    let dir = dal();
    let schema = Arc::new(default_schema());
    let transcript = load_transcript(dir.join("transcript.json")).unwrap();
    let prices = load_prices(dir.join("dal_prices.csv")).unwrap();
    let fin = load_financials(dir.join("dal_financials.csv")).unwrap();
    extract_profile(client, &schema, &transcript, &prices, Some(&fin))
}

/// Rewrites the recorded exchanges from the hand-written replies. Run with
/// `DEFINE_REGEN_FIXTURES=1` after changing a prompt template.
#[test]
fn regenerate_fixtures_when_asked() {
    if std::env::var_os("DEFINE_REGEN_FIXTURES").is_none() {
        return;
    }
    let replies = dal().join("replies");
    let scripted = move |ex: &ChatExchange| {
        let name = if ex.user_message.contains("historical EPS:") {
            "eps"
        } else if ex.user_message.contains("historical revenue:") {
            "revenue"
        } else if ex.user_message.contains("historical stock prices:") {
            "prices"
        } else {
            "profile"
        };
        Ok(std::fs::read_to_string(replies.join(format!("{name}.json")))?)
    };
    let out = dal().join("exchanges");
    let _ = std::fs::remove_dir_all(&out);
    run_extraction(&RecordingClient::new(scripted, &out)).unwrap();
}

#[test]
fn replay_matches_expected_profile_bit_for_bit() {
    let client = FixtureClient::new(dal().join("exchanges"));
    let first = run_extraction(&client).unwrap();
    let second = run_extraction(&client).unwrap();
    assert_eq!(first, second);

    let expected: Expected =
        serde_json::from_str(&std::fs::read_to_string(dal().join("expected_profile.json")).unwrap()).unwrap();
    let got = first.per_factor();
    for (i, (g, e)) in got.iter().zip(&expected.probabilities).enumerate() {
        let g_bits: Vec<u64> = g.iter().map(|x| x.to_bits()).collect();
        let e_bits: Vec<u64> = e.iter().map(|x| x.to_bits()).collect();
        assert_eq!(g_bits, e_bits, "factor {i}");
    }
    let grades: Vec<Vec<u8>> = first
        .grades()
        .unwrap()
        .iter()
        .map(|f| f.iter().map(|g| g.value()).collect())
        .collect();
    assert_eq!(grades, expected.grades);
    assert_eq!(first.summaries(), expected.summaries.as_slice());
}

#[test]
fn missing_fixture_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_extraction(&FixtureClient::new(dir.path())).unwrap_err();
    assert!(matches!(err, ExtractError::FixtureMissing { .. }));
}

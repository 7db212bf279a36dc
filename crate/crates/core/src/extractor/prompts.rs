use std::fmt::Write as _;

use chrono::NaiveDate;

use super::{ChatExchange, ExtractError, ResponseFormat};
use crate::ingest::TranscriptRecord;
use crate::labeler::DecisionLabel;
use crate::schema::{normalize_token, FactorProfile, FactorSchema, LikelihoodGrade};

const PROFILE_SYSTEM: &str = "You are a financial analyst specializing in earnings call transcripts. \
You will receive the complete transcript of an earnings call, which includes both the prepared remarks \
and the Q&A session. Your job is to identify the key factors from the transcript and assign probabilities \
to the potential outcomes of these factors.";

const HISTORY_SYSTEM: &str = "You are a financial analyst specializing in historical data analysis, \
including stock prices, earnings per share (EPS), and revenue. Your goal is to assess the likelihood of \
different market trends based on past data.";

const DECISION_SYSTEM: &str = "You're a financial analyst who specializes in giving investors buy or sell \
recommendations by thoroughly analyzing earnings call transcripts.";

/// Lowercases every word after the first, keeping acronyms such as EPS.
pub fn sentence_case(name: &str) -> String {
    name.split(' ')
        .enumerate()
        .map(|(i, word)| {
            let acronym = word.len() > 1 && word.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
            if i == 0 || acronym {
                word.to_string()
            } else {
                word.to_lowercase()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn grade_vocabulary() -> String {
    LikelihoodGrade::ALL
        .iter()
        .rev()
        .map(|g| g.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_transcript(out: &mut String, transcript: &TranscriptRecord) {
    let _ = writeln!(out, "Earnings Call Transcript for Company {}\n", transcript.display_name());
    out.push_str("# Prepared Remarks\n");
    for u in &transcript.prepared_remarks {
        let _ = writeln!(out, "{}: {}", u.speaker, u.text);
    }
    out.push_str("\n# Questions and Answers\n");
    for qa in &transcript.qa_pairs {
        let _ = writeln!(out, "{}: {}", qa.question.speaker, qa.question.text);
        let _ = writeln!(out, "{}: {}", qa.answer.speaker, qa.answer.text);
    }
}

/// Prompt asking for a summary and an outcome grade per schema factor.
pub fn build_profile_prompt(transcript: &TranscriptRecord, schema: &FactorSchema) -> ChatExchange {
    let mut user = String::from(
        "Your task is to conduct a comprehensive analysis of the earnings call transcript below. \
Be sure to accurately capture the important factors and estimate the likelihood of each factor resulting \
in specific outcomes.\n\n",
    );
    render_transcript(&mut user, transcript);
    user.push_str("\nPlease analyze the above earnings call transcript, focusing on the following key factors:\n\n");
    for (i, f) in schema.factors().iter().enumerate() {
        let outcomes: Vec<&str> = f.outcomes.iter().map(|o| o.name.as_str()).collect();
        let _ = write!(user, "{}. {}:", i + 1, sentence_case(&f.name));
        if !f.description.trim().is_empty() {
            let _ = write!(user, " {}", f.description.trim());
        }
        let _ = writeln!(user, " Outcomes: {{{}}}\n", outcomes.join(", "));
    }
    let _ = write!(
        user,
        "Please take the time to thoroughly understand the transcript. For each key factor, provide a detailed \
summary based on the given transcript. Then, review all associated outcomes and assess the likelihood of each \
outcome. The likelihood should be strictly selected from the following options: {{{}}}. Format your response in JSON.\n\n",
        grade_vocabulary()
    );

    let first = &schema.factors()[0];
    let mut likelihoods = serde_json::Map::new();
    for (k, o) in first.outcomes.iter().enumerate() {
        let grade = if k == 0 { "likely" } else { "somewhat unlikely" };
        likelihoods.insert(o.name.clone(), grade.into());
    }
    let example = serde_json::json!({
        sentence_case(&first.name): {
            "summary": "<summary of what the transcript says about this factor>",
            "likelihoods": likelihoods,
        }
    });
    let _ = write!(user, "# Example Output:\n{example}\n\n# Your Output:\n");

    ChatExchange {
        system_message: PROFILE_SYSTEM.into(),
        user_message: user,
        response_format: ResponseFormat::Json,
    }
}

/// Data table behind one historical factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMetric {
    Eps,
    Revenue,
    StockPrice,
}

impl HistoryMetric {
    pub const ALL: [HistoryMetric; 3] = [HistoryMetric::Eps, HistoryMetric::Revenue, HistoryMetric::StockPrice];

    /// Matches a historical factor name to its data source.
    pub fn for_factor(name: &str) -> Option<Self> {
        let n = normalize_token(name);
        if n.contains("eps") || n.contains("earnings per share") {
            Some(HistoryMetric::Eps)
        } else if n.contains("revenue") {
            Some(HistoryMetric::Revenue)
        } else if n.contains("price") {
            Some(HistoryMetric::StockPrice)
        } else {
            None
        }
    }

    /// Key used in the prompt and expected in the reply.
    pub fn data_name(self) -> &'static str {
        match self {
            HistoryMetric::Eps => "historical EPS",
            HistoryMetric::Revenue => "historical revenue",
            HistoryMetric::StockPrice => "historical stock prices",
        }
    }

    fn description(self) -> &'static str {
        match self {
            HistoryMetric::Eps => "reported earnings per share by fiscal period",
            HistoryMetric::Revenue => "reported revenue by fiscal period",
            HistoryMetric::StockPrice => "daily closing price of the stock",
        }
    }

    fn column(self) -> &'static str {
        match self {
            HistoryMetric::Eps => "EPS",
            HistoryMetric::Revenue => "Revenue",
            HistoryMetric::StockPrice => "Close Price",
        }
    }
}

/// Prompt grading bullish/stable/bearish from a data table. Rows after the
/// announcement date are dropped.
pub fn build_history_prompt(
    metric: HistoryMetric,
    points: &[(NaiveDate, f64)],
    announcement: NaiveDate,
) -> Result<ChatExchange, ExtractError> {
    let rows: Vec<_> = points.iter().filter(|(d, _)| *d <= announcement).collect();
    if rows.is_empty() {
        return Err(ExtractError::EmptySeries(metric.data_name().into()));
    }
    let mut user = format!(
        "The potential outcomes to consider are: {{bullish, stable, and bearish}}. For each outcome, please assign \
a likelihood level from the following options: {{{}}}.\n\n",
        grade_vocabulary()
    );
    user.push_str("Below, you will be provided with a historical data table:\n");
    let _ = writeln!(user, "{}: {}\n", metric.data_name(), metric.description());
    let _ = writeln!(user, "{:<12}{}", "Date", metric.column());
    for (d, v) in rows {
        let _ = writeln!(user, "{:<12}{}", d.to_string(), v);
    }
    let _ = write!(
        user,
        "\nPlease analyze this historical data and provide the likelihood of each outcome in JSON format.\n\n\
# Example Output:\n{{\"{}\": {{\"bullish\": \"very likely\", \"stable\": \"somewhat likely\", \"bearish\": \"unlikely\"}}}}\n\n\
# Your Output:\n",
        metric.data_name()
    );
    Ok(ChatExchange {
        system_message: HISTORY_SYSTEM.into(),
        user_message: user,
        response_format: ResponseFormat::Json,
    })
}

fn action_band(label: DecisionLabel) -> &'static str {
    match label {
        DecisionLabel::StrongBuy => "The stock price will increase by more than 5%",
        DecisionLabel::Buy => "The stock price will increase by 2% to 5%",
        DecisionLabel::Hold => "The stock price is expected to remain stable, fluctuating between -2% to 2%",
        DecisionLabel::Sell => "The stock price will decrease by 2% to 5%",
        DecisionLabel::StrongSell => "The stock price will decrease by more than 5%",
    }
}

fn problem_statement(out: &mut String, company: &str, date: NaiveDate) {
    let _ = write!(
        out,
        "Based on your analysis of the earnings call for {company} held on {date}, decide on the most likely \
analyst recommendation for the next 30 days from these options:\n\n"
    );
    for (i, label) in DecisionLabel::ALL.iter().enumerate() {
        let _ = writeln!(out, "  - Action {}: {}: {}", i + 1, label.action_text(), action_band(*label));
    }
    out.push('\n');
}

fn require_company(company: Option<&str>) -> Result<&str, ExtractError> {
    company
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| ExtractError::Template("company name is required".into()))
}

/// What a chain-of-thought baseline is shown.
#[derive(Debug, Clone, Copy)]
pub enum CotPayload<'a> {
    Transcript(&'a TranscriptRecord),
    Summary(&'a str),
    Profile(&'a FactorProfile),
}

impl CotPayload<'_> {
    fn kind(&self) -> &'static str {
        match self {
            CotPayload::Transcript(_) => "transcript",
            CotPayload::Summary(_) => "summary",
            CotPayload::Profile(_) => "factor profile",
        }
    }
}

pub fn build_cot_prompt(payload: CotPayload<'_>, company: Option<&str>, date: NaiveDate) -> Result<ChatExchange, ExtractError> {
    let company = require_company(company)?;
    let body = match payload {
        CotPayload::Transcript(t) => {
            let mut s = String::new();
            render_transcript(&mut s, t);
            s
        }
        CotPayload::Summary(s) if s.trim().is_empty() => {
            return Err(ExtractError::Template("summary is empty".into()));
        }
        CotPayload::Summary(s) => format!("{}\n", s.trim()),
        CotPayload::Profile(p) => p.render(),
    };
    let mut user = String::new();
    problem_statement(&mut user, company, date);
    let _ = write!(
        user,
        "Below is the {} from {company}'s earnings call on {date}:\n\n{body}\n",
        payload.kind()
    );
    user.push_str(
        "Please think step by step and respond with the analyst recommendation for this stock in JSON format, \
including these keys: ('thoughts', 'recommendation', 'justification'). 'thoughts' should be your detailed \
reasoning steps, 'recommendation' should be one of the actions mentioned above for 30 days trading, and \
'justification' should clearly explain your recommendation.\n",
    );
    Ok(ChatExchange {
        system_message: DECISION_SYSTEM.into(),
        user_message: user,
        response_format: ResponseFormat::Json,
    })
}

/// Prompt showing labeled example profiles and asking the model to pick the
/// most analogous one and carry its call over to the target.
pub fn build_analogy_prompt(
    examples: &[(&FactorProfile, DecisionLabel)],
    target: &FactorProfile,
    company: Option<&str>,
    date: NaiveDate,
) -> Result<ChatExchange, ExtractError> {
    if examples.is_empty() {
        return Err(ExtractError::Template("at least one example profile is required".into()));
    }
    let company = require_company(company)?;
    let mut user = String::from(
        "Here are several example company profiles. Each profile highlights key factors from an earnings call \
transcript and probabilities for potential outcomes based on those factors. Each profile represents a specific \
company and is based on its historical earnings call data. Your job is to pick the most analogous example and \
use its strategy to solve the initial problem.\n\n",
    );
    for (k, (profile, label)) in examples.iter().enumerate() {
        let _ = write!(
            user,
            "Example Company Profile {}:\n{}Analyst recommendation: {}\n\n",
            k + 1,
            profile.render(),
            label.action_text()
        );
    }
    user.push_str("** Initial Problem **\n\n");
    problem_statement(&mut user, company, date);
    let _ = write!(
        user,
        "Below is the company profile summarized from {company}'s earnings call on {date} and the historical \
price trend probabilities judged by an analyst:\n\n{}\n** Solve the Initial Problem **\n\n",
        target.render()
    );
    user.push_str(
        "Please respond with the analyst recommendation for this stock in JSON format, including these keys: \
('idx', 'recommendation', 'justification'). 'idx' is the index of the most analogous example profile, \
'recommendation' should be one of the actions mentioned above for 30 days of trading, and 'justification' should \
clearly explain your recommendation using the strategy you learned from the selected example company profile.\n",
    );
    Ok(ChatExchange {
        system_message: DECISION_SYSTEM.into(),
        user_message: user,
        response_format: ResponseFormat::Json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::tests::sample_transcript;
    use crate::schema::default_schema;
    use std::path::PathBuf;
    use std::sync::Arc;

    fn golden_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
    }

    /// Compares against a checked-in rendering; `DEFINE_UPDATE_GOLDEN=1`
    /// rewrites it.
    fn check_golden(name: &str, exchange: &ChatExchange) {
        let path = golden_dir().join(name);
        let rendered = format!(
            "=== system ===\n{}\n=== user ===\n{}",
            exchange.system_message, exchange.user_message
        );
        if std::env::var_os("DEFINE_UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &rendered).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(rendered, expected, "golden file {name} is stale");
    }

    fn uniform_profile() -> FactorProfile {
        let schema = Arc::new(default_schema());
        let grades = (0..15).map(|i| vec![LikelihoodGrade::Likely; schema.outcome_count(i)]).collect();
        FactorProfile::from_grades(schema, grades, vec![]).unwrap()
    }

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn sentence_case_keeps_acronyms() {
        assert_eq!(sentence_case("Economic Health"), "Economic health");
        assert_eq!(
            sentence_case("Market Sentiment and Investor Psychology"),
            "Market sentiment and investor psychology"
        );
        assert_eq!(sentence_case("Historical EPS"), "Historical EPS");
    }

    #[test]
    fn profile_prompt_lists_every_factor() {
        let schema = default_schema();
        let ex = build_profile_prompt(&sample_transcript(), &schema);
        assert!(ex
            .user_message
            .contains("1. Economic health: Economic health refers to"));
        assert!(ex.user_message.contains("Outcomes: {positive-outlook, unknown-or-uncertain}"));
        assert!(ex.user_message.contains("15. Historical stock prices:"));
        assert!(!ex.user_message.contains("16. "));
        assert!(ex.user_message.contains(
            "{very likely, likely, somewhat likely, somewhat unlikely, unlikely, very unlikely}"
        ));
        assert!(ex.user_message.contains("Format your response in JSON."));
        assert!(ex.user_message.ends_with("# Your Output:\n"));
        check_golden("profile_prompt.txt", &ex);
    }

    #[test]
    fn empty_qa_still_renders() {
        let mut t = sample_transcript();
        t.qa_pairs.clear();
        let ex = build_profile_prompt(&t, &default_schema());
        assert!(ex.user_message.contains("# Questions and Answers\n\nPlease analyze"));
    }

    #[test]
    fn history_prompt_truncates_at_announcement() {
        let points = vec![
            (day(2023, 7, 31), 195.22),
            (day(2023, 8, 1), 195.46),
            (day(2023, 8, 2), 192.58),
        ];
        let ex = build_history_prompt(HistoryMetric::StockPrice, &points, day(2023, 8, 1)).unwrap();
        assert!(ex.user_message.contains("2023-07-31  195.22\n"));
        assert!(ex.user_message.contains("2023-08-01  195.46\n"));
        assert!(!ex.user_message.contains("2023-08-02"));
        assert!(ex.user_message.contains("{bullish, stable, and bearish}"));
        check_golden("history_prompt.txt", &ex);

        assert!(matches!(
            build_history_prompt(HistoryMetric::Eps, &points, day(2023, 7, 1)),
            Err(ExtractError::EmptySeries(_))
        ));
        assert!(build_history_prompt(HistoryMetric::Eps, &[], day(2023, 7, 1)).is_err());
    }

    #[test]
    fn history_metric_matches_factor_names() {
        assert_eq!(HistoryMetric::for_factor("Historical EPS"), Some(HistoryMetric::Eps));
        assert_eq!(
            HistoryMetric::for_factor("Historical Earnings Per Share (EPS)"),
            Some(HistoryMetric::Eps)
        );
        assert_eq!(HistoryMetric::for_factor("Historical Revenue"), Some(HistoryMetric::Revenue));
        assert_eq!(HistoryMetric::for_factor("Historical Stock Prices"), Some(HistoryMetric::StockPrice));
        assert_eq!(HistoryMetric::for_factor("Historical Dividends"), None);
    }

    #[test]
    fn cot_prompt_lists_five_actions() {
        let profile = uniform_profile();
        let ex = build_cot_prompt(CotPayload::Profile(&profile), Some("Delta Air Lines"), day(2021, 10, 13)).unwrap();
        let actions = ex.user_message.lines().filter(|l| l.trim_start().starts_with("- Action")).count();
        assert_eq!(actions, 5);
        assert!(ex.user_message.contains("Action 1: strong buy: The stock price will increase by more than 5%"));
        assert!(ex.user_message.contains("Action 3: hold: The stock price is expected to remain stable, fluctuating between -2% to 2%"));
        assert!(ex.user_message.contains("Below is the factor profile from Delta Air Lines's earnings call on 2021-10-13:"));
        assert!(ex.user_message.contains(&profile.render()));
        assert!(ex.user_message.contains("'thoughts', 'recommendation', 'justification'"));
        check_golden("cot_profile_prompt.txt", &ex);

        assert!(matches!(
            build_cot_prompt(CotPayload::Summary("text"), None, day(2021, 10, 13)),
            Err(ExtractError::Template(_))
        ));
        assert!(build_cot_prompt(CotPayload::Summary("  "), Some("X"), day(2021, 10, 13)).is_err());
        let t = sample_transcript();
        let ex = build_cot_prompt(CotPayload::Transcript(&t), Some("Delta"), t.announcement_date).unwrap();
        assert!(ex.user_message.contains("# Prepared Remarks\nOperator: Welcome to the call."));
    }

    #[test]
    fn analogy_prompt_structure() {
        let profile = uniform_profile();
        let labels = [
            DecisionLabel::Buy,
            DecisionLabel::Hold,
            DecisionLabel::StrongSell,
            DecisionLabel::Sell,
            DecisionLabel::StrongBuy,
        ];
        let examples: Vec<_> = labels.iter().map(|l| (&profile, *l)).collect();
        let ex = build_analogy_prompt(&examples, &profile, Some("Delta Air Lines"), day(2021, 10, 13)).unwrap();
        for k in 1..=5 {
            assert!(ex.user_message.contains(&format!("Example Company Profile {k}:\n")));
        }
        assert!(!ex.user_message.contains("Example Company Profile 6"));
        assert!(ex.user_message.contains("Analyst recommendation: strong sell\n"));
        let problem = ex.user_message.find("** Initial Problem **").unwrap();
        let solve = ex.user_message.find("** Solve the Initial Problem **").unwrap();
        let target_at = ex.user_message[problem..].find(&profile.render()).unwrap() + problem;
        assert!(problem < target_at && target_at < solve);
        assert!(ex.user_message.contains("('idx', 'recommendation', 'justification')"));
        check_golden("analogy_prompt.txt", &ex);

        assert!(matches!(
            build_analogy_prompt(&[], &profile, Some("Delta"), day(2021, 10, 13)),
            Err(ExtractError::Template(_))
        ));
    }

    #[test]
    fn builders_are_pure() {
        let t = sample_transcript();
        let s = default_schema();
        assert_eq!(build_profile_prompt(&t, &s), build_profile_prompt(&t, &s));
    }
}

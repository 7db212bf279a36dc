use super::{normalize_token, Category, FactorSchema, FactorSpec, OutcomeSpec, Polarity};

const UNCERTAIN: &str = "unknown-or-uncertain";
const HISTORICAL: [&str; 3] = ["bullish", "stable", "bearish"];

// (name, category, description, leading outcome). Macro and company factors
// pair their leading outcome with "unknown-or-uncertain".
const TWO_OUTCOME_FACTORS: [(&str, Category, &str, &str); 12] = [
    (
        "Economic Health",
        Category::Macroeconomic,
        "Economic health refers to the overall stability and performance of the economy, reflected in factors like growth, employment, inflation, and market confidence.",
        "positive-outlook",
    ),
    (
        "Market Sentiment and Investor Psychology",
        Category::Macroeconomic,
        "Market sentiment reflects the overall mood or attitude of investors toward a particular market, influenced by news, economic data, and global events. Investor psychology refers to the emotions and cognitive biases that drive decisions, often leading to behaviors like fear-driven selling or greed-fueled buying.",
        "optimistic",
    ),
    (
        "Political Events and Government Policies",
        Category::Macroeconomic,
        "Elections, legislation, fiscal and trade policy, and other government actions that can shift the operating environment for the company or its markets.",
        "major-upheaval",
    ),
    (
        "Natural Disasters and Black Swan Events",
        Category::Macroeconomic,
        "Rare, high-impact events such as natural disasters, pandemics, or other unforeseen shocks that can disrupt economies, operations, and global supply chains.",
        "major-impact",
    ),
    (
        "Geopolitical Issues",
        Category::Macroeconomic,
        "International tensions, conflicts, sanctions, and diplomatic developments that can affect markets, commodity prices, and cross-border business.",
        "escalation-to-conflict",
    ),
    (
        "Mergers and Major Acquisitions",
        Category::CompanySpecific,
        "Announced, pending, or completed mergers, acquisitions, divestitures, and strategic combinations involving the company.",
        "positive-outlook",
    ),
    (
        "Regulatory Changes and Legal Issues",
        Category::CompanySpecific,
        "Changes in regulation, litigation, investigations, and compliance matters that can open new business opportunities or create legal and financial exposure.",
        "happened-positive-outlook",
    ),
    (
        "Financial Health",
        Category::CompanySpecific,
        "The company's balance sheet strength, liquidity, leverage, cash flow, and profitability as discussed in the call.",
        "positive-outlook",
    ),
    (
        "Company Growth",
        Category::CompanySpecific,
        "The company's growth trajectory and guidance, including revenue expansion, market share gains, and new markets.",
        "positive-outlook",
    ),
    (
        "Company Product Launches",
        Category::CompanySpecific,
        "New products or services announced, launched, or in the pipeline, and their expected reception and contribution.",
        "positive-outlook",
    ),
    (
        "Supply Chain",
        Category::CompanySpecific,
        "The reliability, cost, and capacity of the company's sourcing, manufacturing, and distribution network.",
        "positive-outlook",
    ),
    (
        "Technological Innovation",
        Category::CompanySpecific,
        "Investment in and adoption of new technologies, research and development progress, and technology-driven competitive advantages.",
        "positive-outlook",
    ),
];

const HISTORICAL_FACTORS: [(&str, &str); 3] = [
    (
        "Historical EPS",
        "Trend in reported earnings per share over the quarters preceding the earnings announcement.",
    ),
    (
        "Historical Revenue",
        "Trend in reported revenue over the quarters preceding the earnings announcement.",
    ),
    (
        "Historical Stock Prices",
        "Trend in daily closing stock prices leading up to the earnings announcement.",
    ),
];

/// Polarity assignment for the outcome names used by the built-in taxonomy.
/// Unrecognized names are treated as neutral.
pub fn default_polarity(outcome: &str) -> Polarity {
    match normalize_token(outcome).as_str() {
        "positive outlook" | "optimistic" | "bullish" | "happened positive outlook" => Polarity::Positive,
        "major impact" | "major upheaval" | "escalation to conflict" | "decline" | "bearish" => Polarity::Negative,
        _ => Polarity::NeutralUncertain,
    }
}

fn outcome(name: &str) -> OutcomeSpec {
    OutcomeSpec {
        name: name.to_string(),
        polarity: default_polarity(name),
    }
}

/// The built-in 15-factor taxonomy: five macroeconomic and seven
/// company-specific factors with two outcomes each, then three historical
/// metrics with bullish/stable/bearish outcomes (33 items).
pub fn default_schema() -> FactorSchema {
    let mut factors = Vec::with_capacity(15);
    for (name, category, description, lead) in TWO_OUTCOME_FACTORS {
        factors.push(FactorSpec {
            id: factors.len(),
            name: name.to_string(),
            category,
            description: description.to_string(),
            outcomes: vec![outcome(lead), outcome(UNCERTAIN)],
        });
    }
    for (name, description) in HISTORICAL_FACTORS {
        factors.push(FactorSpec {
            id: factors.len(),
            name: name.to_string(),
            category: Category::HistoricalMetric,
            description: description.to_string(),
            outcomes: HISTORICAL.iter().map(|o| outcome(o)).collect(),
        });
    }
    FactorSchema::new(factors).expect("built-in schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_factors_thirty_three_items() {
        let schema = default_schema();
        assert_eq!(schema.factor_count(), 15);
        assert_eq!(schema.item_count(), 33);
        for (i, f) in schema.factors().iter().enumerate() {
            let expected = if i < 12 { 2 } else { 3 };
            assert_eq!(f.outcomes.len(), expected, "factor {}", f.name);
            assert_eq!(f.category == Category::HistoricalMetric, i >= 12);
        }
        let macro_count = schema
            .factors()
            .iter()
            .filter(|f| f.category == Category::Macroeconomic)
            .count();
        assert_eq!(macro_count, 5);
    }

    #[test]
    fn natural_disasters_factor() {
        let schema = default_schema();
        let f = &schema.factors()[3];
        assert_eq!(f.name, "Natural Disasters and Black Swan Events");
        assert_eq!(f.outcomes[0], outcome("major-impact"));
        assert_eq!(f.outcomes[0].polarity, Polarity::Negative);
        assert_eq!(f.outcomes[1].name, "unknown-or-uncertain");
        assert_eq!(f.outcomes[1].polarity, Polarity::NeutralUncertain);
    }

    #[test]
    fn historical_eps_factor() {
        let schema = default_schema();
        let f = &schema.factors()[12];
        assert_eq!(f.name, "Historical EPS");
        let names: Vec<_> = f.outcomes.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(names, ["bullish", "stable", "bearish"]);
        let pol: Vec<_> = f.outcomes.iter().map(|o| o.polarity).collect();
        assert_eq!(pol, [Polarity::Positive, Polarity::NeutralUncertain, Polarity::Negative]);
    }

    #[test]
    fn polarity_table() {
        assert_eq!(default_polarity("decline"), Polarity::Negative);
        assert_eq!(default_polarity("Happened Positive Outlook"), Polarity::Positive);
        assert_eq!(default_polarity("stable"), Polarity::NeutralUncertain);
        assert_eq!(default_polarity("optimistic"), Polarity::Positive);
    }

    #[test]
    fn supply_chain_is_factor_eleven() {
        // 1-based numbering used in the factor table.
        assert_eq!(default_schema().factors()[10].name, "Supply Chain");
    }
}

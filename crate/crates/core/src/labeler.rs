//! Ground-truth decisions from post-announcement price movement.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PriceSeries;
use crate::schema::normalize_token;

pub const DEFAULT_HORIZON_DAYS: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("unknown decision label {0:?}")]
    UnknownLabel(String),
    #[error("{ticker}: no trading date on or after {date}")]
    InsufficientHistory { ticker: String, date: NaiveDate },
    #[error("horizon must be at least one day")]
    InvalidHorizon,
}

/// Five-way investment decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionLabel {
    StrongBuy,
    Buy,
    Hold,
    Sell,
    StrongSell,
}

impl DecisionLabel {
    /// All labels from most to least bullish. [`DecisionLabel::index`] is the
    /// position in this array.
    pub const ALL: [DecisionLabel; 5] = [
        DecisionLabel::StrongBuy,
        DecisionLabel::Buy,
        DecisionLabel::Hold,
        DecisionLabel::Sell,
        DecisionLabel::StrongSell,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::StrongBuy => "strong-buy",
            DecisionLabel::Buy => "buy",
            DecisionLabel::Hold => "hold",
            DecisionLabel::Sell => "sell",
            DecisionLabel::StrongSell => "strong-sell",
        }
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            DecisionLabel::StrongBuy => "SB",
            DecisionLabel::Buy => "B",
            DecisionLabel::Hold => "H",
            DecisionLabel::Sell => "S",
            DecisionLabel::StrongSell => "SS",
        }
    }

    /// Wording used in prompts: "strong buy", "buy", ...
    pub fn action_text(self) -> &'static str {
        match self {
            DecisionLabel::StrongBuy => "strong buy",
            DecisionLabel::Buy => "buy",
            DecisionLabel::Hold => "hold",
            DecisionLabel::Sell => "sell",
            DecisionLabel::StrongSell => "strong sell",
        }
    }

    /// Parses a label as written by people or models. Accepts kebab, snake
    /// and spaced forms, the two-letter abbreviations, and an optional
    /// `Action N:` prefix.
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let mut token = normalize_token(&text.replace(':', " "));
        if let Some(rest) = token.strip_prefix("action ") {
            let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit()).trim();
            token = rest.to_string();
        }
        let found = match token.as_str() {
            "strong buy" | "sb" | "strongbuy" => DecisionLabel::StrongBuy,
            "buy" | "b" => DecisionLabel::Buy,
            "hold" | "h" => DecisionLabel::Hold,
            "sell" | "s" => DecisionLabel::Sell,
            "strong sell" | "ss" | "strongsell" => DecisionLabel::StrongSell,
            _ => return Err(LabelError::UnknownLabel(text.to_string())),
        };
        Ok(found)
    }

    /// Bullishness rank: strong-sell = 0 .. strong-buy = 4.
    fn rank(self) -> usize {
        4 - self.index()
    }
}

impl PartialOrd for DecisionLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Strong-buy is the greatest label, strong-sell the least.
impl Ord for DecisionLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for DecisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecisionLabel::parse(s)
    }
}

/// Maps a percent return onto a label. Hold is the closed band [-2, 2]; buy
/// is (2, 5] and sell [-5, -2); anything beyond ±5 is a strong call.
pub fn label_for_return(return_pct: f64) -> DecisionLabel {
    if return_pct > 5.0 {
        DecisionLabel::StrongBuy
    } else if return_pct > 2.0 {
        DecisionLabel::Buy
    } else if return_pct >= -2.0 {
        DecisionLabel::Hold
    } else if return_pct >= -5.0 {
        DecisionLabel::Sell
    } else {
        DecisionLabel::StrongSell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReturn {
    pub label: DecisionLabel,
    pub return_pct: f64,
    pub base_date: NaiveDate,
    pub horizon_date: NaiveDate,
}

/// Labels a stock by its return from the first trading date on or after the
/// announcement to the first trading date on or after announcement +
/// `horizon_days` calendar days.
pub fn label_from_prices(
    series: &PriceSeries,
    announce_date: NaiveDate,
    horizon_days: u32,
) -> Result<LabeledReturn, LabelError> {
    if horizon_days == 0 {
        return Err(LabelError::InvalidHorizon);
    }
    let missing = |date| LabelError::InsufficientHistory {
        ticker: series.ticker.clone(),
        date,
    };
    let (base_date, base_close) = series.first_on_or_after(announce_date).ok_or_else(|| missing(announce_date))?;
    let target = announce_date
        .checked_add_days(Days::new(u64::from(horizon_days)))
        .ok_or_else(|| missing(announce_date))?;
    let (horizon_date, horizon_close) = series.first_on_or_after(target).ok_or_else(|| missing(target))?;
    let return_pct = 100.0 * (horizon_close - base_close) / base_close;
    Ok(LabeledReturn {
        label: label_for_return(return_pct),
        return_pct,
        base_date,
        horizon_date,
    })
}

/// Counts per label, indexed by [`DecisionLabel::index`].
pub fn class_distribution(labels: &[DecisionLabel]) -> [usize; 5] {
    let mut counts = [0; 5];
    for label in labels {
        counts[label.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn series(points: &[(&str, f64)]) -> PriceSeries {
        PriceSeries::new("DAL", points.iter().map(|(s, c)| (d(s), *c)).collect()).unwrap()
    }

    #[test]
    fn band_examples() {
        assert_eq!(label_for_return(6.0), DecisionLabel::StrongBuy);
        assert_eq!(label_for_return(0.0), DecisionLabel::Hold);
        assert_eq!(label_for_return(-3.5), DecisionLabel::Sell);
        assert_eq!(label_for_return(2.0), DecisionLabel::Hold);
        assert_eq!(label_for_return(-2.0), DecisionLabel::Hold);
        assert_eq!(label_for_return(5.0), DecisionLabel::Buy);
        assert_eq!(label_for_return(-5.0), DecisionLabel::Sell);
        assert_eq!(label_for_return(-5.000001), DecisionLabel::StrongSell);
    }

    #[test]
    fn label_order() {
        use DecisionLabel::*;
        assert!(StrongBuy > Buy && Buy > Hold && Hold > Sell && Sell > StrongSell);
        let mut v = vec![Hold, StrongSell, StrongBuy, Sell, Buy];
        v.sort();
        assert_eq!(v, vec![StrongSell, Sell, Hold, Buy, StrongBuy]);
    }

    #[test]
    fn parse_label_variants() {
        assert_eq!(DecisionLabel::parse("strong-buy").unwrap(), DecisionLabel::StrongBuy);
        assert_eq!(DecisionLabel::parse("Strong Sell").unwrap(), DecisionLabel::StrongSell);
        assert_eq!(DecisionLabel::parse("Action 2: buy").unwrap(), DecisionLabel::Buy);
        assert_eq!(DecisionLabel::parse("SB").unwrap(), DecisionLabel::StrongBuy);
        assert!(DecisionLabel::parse("accumulate").is_err());
        for l in DecisionLabel::ALL {
            assert_eq!(DecisionLabel::parse(l.as_str()).unwrap(), l);
            assert_eq!(DecisionLabel::parse(l.action_text()).unwrap(), l);
        }
    }

    #[test]
    fn labels_snap_forward_to_trading_dates() {
        // Announcement on a Saturday; base snaps to Monday, horizon to the
        // first trading date at or after +30 calendar days.
        let s = series(&[
            ("2024-01-08", 100.0),
            ("2024-02-05", 103.0),
            ("2024-02-06", 106.0),
        ]);
        let r = label_from_prices(&s, d("2024-01-06"), 30).unwrap();
        assert_eq!(r.base_date, d("2024-01-08"));
        assert_eq!(r.horizon_date, d("2024-02-05"));
        assert!((r.return_pct - 3.0).abs() < 1e-12);
        assert_eq!(r.label, DecisionLabel::Buy);
    }

    #[test]
    fn missing_anchor_is_insufficient_history() {
        let s = series(&[("2024-01-08", 100.0), ("2024-01-20", 101.0)]);
        assert!(matches!(
            label_from_prices(&s, d("2024-01-08"), 30),
            Err(LabelError::InsufficientHistory { .. })
        ));
        assert!(matches!(
            label_from_prices(&s, d("2024-03-01"), 30),
            Err(LabelError::InsufficientHistory { .. })
        ));
        assert_eq!(label_from_prices(&s, d("2024-01-08"), 0), Err(LabelError::InvalidHorizon));
    }

    #[test]
    fn distribution_counts() {
        assert_eq!(class_distribution(&[]), [0; 5]);
        assert_eq!(class_distribution(&DecisionLabel::ALL), [1; 5]);
        // Test-set proportions over 587 transcripts: 34/15/21/9/21 percent.
        let counts = [200usize, 88, 123, 53, 123];
        let labels: Vec<_> = DecisionLabel::ALL
            .iter()
            .zip(counts)
            .flat_map(|(l, c)| std::iter::repeat_n(*l, c))
            .collect();
        assert_eq!(labels.len(), 587);
        let dist = class_distribution(&labels);
        let pct: Vec<u32> = dist.iter().map(|&c| (100.0 * c as f64 / 587.0).round() as u32).collect();
        assert_eq!(pct, vec![34, 15, 21, 9, 21]);
    }

    proptest! {
        #[test]
        fn labeling_is_monotone(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(label_for_return(lo) <= label_for_return(hi));
        }

        #[test]
        fn labeling_ignores_price_scale(p0 in 1.0f64..500.0, r in -0.3f64..0.3, scale in 0.1f64..10.0) {
            let p1 = p0 * (1.0 + r);
            let a = series(&[("2024-01-02", p0), ("2024-02-01", p1)]);
            let b = series(&[("2024-01-02", p0 * scale), ("2024-02-01", p1 * scale)]);
            let la = label_from_prices(&a, d("2024-01-02"), 30).unwrap();
            let lb = label_from_prices(&b, d("2024-01-02"), 30).unwrap();
            prop_assert!((la.return_pct - lb.return_pct).abs() < 1e-9);
            // Labels can only differ if the return sits on a band edge.
            let near_edge = [-5.0, -2.0, 2.0, 5.0].iter().any(|e| (la.return_pct - e).abs() < 1e-9);
            prop_assert!(near_edge || la.label == lb.label);
        }
    }
}

//! Bradley-Terry salience over outcome items.
//!
//! Labeled transcripts are turned into preference pairs, each pair adds
//! expected-occurrence weights to a comparison matrix over the schema's
//! items, and the matrix is fitted to a strength vector on the simplex.

mod fit;
mod matrix;
mod pairs;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit, log_likelihood, FitOptions, SalienceModel};
pub use matrix::{accumulate, AccumulateMode, ComparisonMatrix};
pub use pairs::{preference_pairs, prefers, LabeledItem, PreferencePair, PREFERRED_OVER};

use crate::ingest::StoredProfile;
use crate::schema::FactorProfile;

#[derive(Debug, Error)]
pub enum BtError {
    #[error("no profile for id {0:?}")]
    MissingProfile(String),
    #[error("profiles were built against different schemas")]
    SchemaMismatch,
    #[error("invalid comparison matrix: {0}")]
    InvalidMatrix(String),
    #[error("item {item} has no comparisons; the strengths are not identifiable")]
    DegenerateMatrix { item: usize },
    #[error("fit did not converge after {} iterations (max change {:.3e})", last.iterations, last.max_change)]
    NotConverged { last: SalienceModel },
    #[error("k = {k} must be between 1 and {items}")]
    InvalidK { k: usize, items: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Which transcript pairs are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SameSector,
    CrossSector,
    SameCompany,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::SameSector, Regime::CrossSector, Regime::SameCompany];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SameSector => "same-sector",
            Regime::CrossSector => "cross-sector",
            Regime::SameCompany => "same-company",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown regime {s:?} (expected same-sector, cross-sector or same-company)"))
    }
}

/// Persisted salience model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_hash: String,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub max_change: f64,
    pub tol: f64,
    pub regime: Regime,
    pub seed: u64,
    #[serde(default)]
    pub pairs: usize,
    #[serde(default)]
    pub mode: AccumulateMode,
}

impl ModelFile {
    pub fn model(&self) -> SalienceModel {
        SalienceModel {
            p: self.p.clone(),
            iterations: self.iterations,
            max_change: self.max_change,
            schema_hash: Some(self.schema_hash.clone()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BtError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BtError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        let sum: f64 = file.p.iter().sum();
        if file.p.is_empty() || (sum - 1.0).abs() > 1e-9 || file.p.iter().any(|&p| p.is_nan() || p <= 0.0) {
            return Err(BtError::InvalidMatrix("model strengths are not a strictly positive simplex vector".into()));
        }
        Ok(file)
    }
}

/// Everything that shapes a trained model besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub regime: Regime,
    pub seed: u64,
    pub cap: Option<usize>,
    pub mode: AccumulateMode,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            regime: Regime::CrossSector,
            seed: 0,
            cap: Some(5000),
            mode: AccumulateMode::CrossItem,
            fit: FitOptions::default(),
        }
    }
}

pub fn labeled_items(profiles: &[StoredProfile]) -> Vec<LabeledItem> {
    profiles
        .iter()
        .filter_map(|s| {
            Some(LabeledItem {
                profile_id: s.profile_id.clone(),
                label: s.label?,
                sector: s.sector.clone(),
                ticker: s.ticker.clone(),
            })
        })
        .collect()
}

/// Pairs, accumulates and fits over the labeled profiles; unlabeled ones
/// are ignored.
pub fn train(profiles: &[StoredProfile], opts: &TrainOptions) -> Result<ModelFile, BtError> {
    let first = profiles
        .first()
        .ok_or_else(|| BtError::InvalidMatrix("no profiles to train on".into()))?;
    let items = labeled_items(profiles);
    let pairs = preference_pairs(&items, opts.regime, opts.seed, opts.cap);
    let by_id: HashMap<&str, &FactorProfile> = profiles.iter().map(|s| (s.profile_id.as_str(), &s.profile)).collect();
    let matrix = accumulate(&pairs, &by_id, opts.mode)?;
    let model = fit(&matrix, &opts.fit)?.bind(first.profile.schema())?;
    Ok(ModelFile {
        schema_hash: first.profile.schema().hash_hex(),
        p: model.p,
        iterations: model.iterations,
        max_change: model.max_change,
        tol: opts.fit.tol,
        regime: opts.regime,
        seed: opts.seed,
        pairs: pairs.len(),
        mode: opts.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_round_trips_through_text() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
        assert!("sideways".parse::<Regime>().is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile {
            schema_hash: "abc".into(),
            p: vec![0.25, 0.75],
            iterations: 12,
            max_change: 1e-9,
            tol: 1e-8,
            regime: Regime::CrossSector,
            seed: 7,
            pairs: 100,
            mode: AccumulateMode::CrossItem,
        };
        file.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), file);

        let bad = ModelFile { p: vec![0.5, 0.6], ..file };
        bad.save(&path).unwrap();
        assert!(ModelFile::load(&path).is_err());
    }
}

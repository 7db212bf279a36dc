//! Local-file loaders and writers: transcripts, price and financial CSVs,
//! dataset manifests, and the profile JSONL store.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::DecisionLabel;
use crate::schema::{FactorProfile, FactorSchema, LikelihoodGrade, SchemaError, PROFILE_TOLERANCE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    SchemaViolation { path: PathBuf, message: String },
    #[error("{path}: close price {close} on {date} is not positive")]
    NonPositivePrice { path: PathBuf, date: NaiveDate, close: f64 },
    #[error("{path}: duplicate date {date}")]
    DuplicateDate { path: PathBuf, date: NaiveDate },
    #[error("{path}:{line}: {source}")]
    Validation {
        path: PathBuf,
        line: usize,
        #[source]
        source: SchemaError,
    },
    #[error("{path}:{line}: stored probabilities disagree with grades for factor {factor}")]
    ProbabilityDrift { path: PathBuf, line: usize, factor: usize },
    #[error("duplicate profile id {0:?}")]
    DuplicateProfileId(String),
    #[error("referenced file does not exist: {0}")]
    MissingPath(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Transcripts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub name: String,
    #[serde(default)]
    pub affiliation: String,
    #[serde(default)]
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: Utterance,
    pub answer: Utterance,
}

/// One earnings call: prepared remarks followed by the analyst Q&A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub ticker: String,
    pub announcement_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub company: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<String>,
    #[serde(default)]
    pub participants: Vec<Participant>,
    pub prepared_remarks: Vec<Utterance>,
    #[serde(default)]
    pub qa_pairs: Vec<QaPair>,
}

impl TranscriptRecord {
    /// Company name for prompts, falling back to the ticker.
    pub fn display_name(&self) -> &str {
        self.company.as_deref().filter(|c| !c.trim().is_empty()).unwrap_or(&self.ticker)
    }

    /// Default profile id: `TICKER-YYYY-MM-DD`.
    pub fn default_profile_id(&self) -> String {
        format!("{}-{}", self.ticker, self.announcement_date)
    }
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<TranscriptRecord, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_transcript(&text, path)
}

pub fn parse_transcript(text: &str, path: &Path) -> Result<TranscriptRecord, IngestError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut record: TranscriptRecord = serde_json::from_value(value).map_err(|e| IngestError::SchemaViolation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let violation = |message: &str| IngestError::SchemaViolation {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    record.ticker = record.ticker.trim().to_uppercase();
    if record.ticker.is_empty() {
        return Err(violation("ticker is empty"));
    }
    if record.prepared_remarks.is_empty() {
        return Err(violation("prepared_remarks is empty"));
    }
    Ok(record)
}

// ---------------------------------------------------------------------------
// Price and financial series

/// Daily closes sorted by strictly increasing date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub ticker: String,
    points: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    /// Sorts the points and rejects duplicates or non-positive closes.
    pub fn new(ticker: impl Into<String>, points: Vec<(NaiveDate, f64)>) -> Result<Self, IngestError> {
        let points = sorted_unique(points, Path::new("<memory>"))?;
        if let Some(&(date, close)) = points.iter().find(|(_, c)| !(c.is_finite() && *c > 0.0)) {
            return Err(IngestError::NonPositivePrice {
                path: PathBuf::from("<memory>"),
                date,
                close,
            });
        }
        Ok(Self {
            ticker: ticker.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_on_or_after(&self, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let i = self.points.partition_point(|(d, _)| *d < date);
        self.points.get(i).copied()
    }

    /// Points dated on or before `date`.
    pub fn until(&self, date: NaiveDate) -> &[(NaiveDate, f64)] {
        let end = self.points.partition_point(|(d, _)| *d <= date);
        &self.points[..end]
    }
}

fn sorted_unique<T>(mut points: Vec<(NaiveDate, T)>, path: &Path) -> Result<Vec<(NaiveDate, T)>, IngestError> {
    points.sort_by_key(|(d, _)| *d);
    if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate {
            path: path.to_path_buf(),
            date: w[0].0,
        });
    }
    Ok(points)
}

fn ticker_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.split(['_', '.']).next().unwrap_or(s).to_uppercase())
        .unwrap_or_default()
}

#[derive(Deserialize)]
struct PriceRow {
    date: NaiveDate,
    close: f64,
}

/// Reads a `date,close` CSV. The ticker is taken from the file stem up to the
/// first `_` or `.` (`dal_prices.csv` → `DAL`).
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries, IngestError> {
    let path = path.as_ref();
    let rows: Vec<PriceRow> = read_csv(path)?;
    let mut points = Vec::with_capacity(rows.len());
    for row in rows {
        if !(row.close.is_finite() && row.close > 0.0) {
            return Err(IngestError::NonPositivePrice {
                path: path.to_path_buf(),
                date: row.date,
                close: row.close,
            });
        }
        points.push((row.date, row.close));
    }
    Ok(PriceSeries {
        ticker: ticker_from_path(path),
        points: sorted_unique(points, path)?,
    })
}

/// Quarterly EPS and revenue, each sorted by strictly increasing date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FinancialHistory {
    pub ticker: String,
    pub eps: Vec<(NaiveDate, f64)>,
    pub revenue: Vec<(NaiveDate, f64)>,
}

#[derive(Deserialize)]
struct FinancialRow {
    date: NaiveDate,
    eps: Option<f64>,
    revenue: Option<f64>,
}

/// Reads a `date,eps,revenue` CSV. Empty cells are skipped for that series.
pub fn load_financials(path: impl AsRef<Path>) -> Result<FinancialHistory, IngestError> {
    let path = path.as_ref();
    let rows: Vec<FinancialRow> = read_csv(path)?;
    let eps = rows.iter().filter_map(|r| Some((r.date, r.eps?))).collect();
    let revenue = rows.iter().filter_map(|r| Some((r.date, r.revenue?))).collect();
    Ok(FinancialHistory {
        ticker: ticker_from_path(path),
        eps: sorted_unique(eps, path)?,
        revenue: sorted_unique(revenue, path)?,
    })
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| IngestError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub transcript_path: PathBuf,
    pub prices_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub financials_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<DecisionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Wrapped(DatasetManifest),
    Bare(Vec<ManifestEntry>),
}

/// Loads a manifest (either `{"entries": [...]}` or a bare array). Relative
/// paths are resolved against the manifest's directory and must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut manifest = match file {
        ManifestFile::Wrapped(m) => m,
        ManifestFile::Bare(entries) => DatasetManifest { entries },
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| -> Result<(), IngestError> {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if !p.exists() {
            return Err(IngestError::MissingPath(p.clone()));
        }
        Ok(())
    };
    let mut ids = HashSet::new();
    for entry in &mut manifest.entries {
        resolve(&mut entry.transcript_path)?;
        resolve(&mut entry.prices_path)?;
        if let Some(f) = entry.financials_path.as_mut() {
            resolve(f)?;
        }
        if let Some(id) = &entry.profile_id {
            if !ids.insert(id.clone()) {
                return Err(IngestError::DuplicateProfileId(id.clone()));
            }
        }
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// JSONL

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_jsonl_to(&mut w, items).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_jsonl_to<T: Serialize, W: Write>(w: &mut W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IngestError> {
    Ok(read_jsonl_numbered(path.as_ref())?.into_iter().map(|(_, v)| v).collect())
}

fn read_jsonl_numbered<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Profiles

/// A profile plus the metadata needed for pairing, labeling and retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredProfile {
    pub profile_id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub sector: Option<String>,
    pub label: Option<DecisionLabel>,
    pub profile: FactorProfile,
}

/// On-disk form of one profile line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub profile_id: String,
    pub ticker: String,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<String>,
    #[serde(default)]
    pub label: Option<DecisionLabel>,
    pub summaries: Vec<String>,
    pub grades: Option<Vec<Vec<LikelihoodGrade>>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl From<&StoredProfile> for ProfileRecord {
    fn from(p: &StoredProfile) -> Self {
        ProfileRecord {
            profile_id: p.profile_id.clone(),
            ticker: p.ticker.clone(),
            date: p.date,
            sector: p.sector.clone(),
            label: p.label,
            summaries: p.profile.summaries().to_vec(),
            grades: p.profile.grades().map(<[_]>::to_vec),
            probabilities: p.profile.per_factor(),
        }
    }
}

impl ProfileRecord {
    /// Rebuilds the profile. When grades are present the probabilities are
    /// recomputed from them and must match the stored values within 1e-9.
    pub fn into_stored(self, schema: &Arc<FactorSchema>) -> Result<StoredProfile, ProfileRecordError> {
        let profile = match self.grades {
            Some(grades) => {
                let profile = FactorProfile::from_grades(schema.clone(), grades, self.summaries)?;
                if self.probabilities.len() != schema.factor_count() {
                    return Err(SchemaError::FactorCountMismatch {
                        expected: schema.factor_count(),
                        got: self.probabilities.len(),
                    }
                    .into());
                }
                for (i, stored) in self.probabilities.iter().enumerate() {
                    let fresh = profile.factor_probs(i);
                    let drift = stored.len() != fresh.len()
                        || stored.iter().zip(fresh).any(|(a, b)| (a - b).abs() > PROFILE_TOLERANCE);
                    if drift {
                        return Err(ProfileRecordError::Drift(i));
                    }
                }
                profile
            }
            None => FactorProfile::from_probabilities(schema.clone(), self.probabilities, self.summaries)?,
        };
        Ok(StoredProfile {
            profile_id: self.profile_id,
            ticker: self.ticker,
            date: self.date,
            sector: self.sector,
            label: self.label,
            profile,
        })
    }
}

#[derive(Debug, Error)]
pub enum ProfileRecordError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("probabilities drift from grades at factor {0}")]
    Drift(usize),
}

pub fn save_profiles(profiles: &[StoredProfile], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let records: Vec<ProfileRecord> = profiles.iter().map(ProfileRecord::from).collect();
    write_jsonl(path, &records)
}

/// Loads and validates every line. Missing or empty files are an error and an
/// empty set respectively.
pub fn load_profiles(path: impl AsRef<Path>, schema: &Arc<FactorSchema>) -> Result<Vec<StoredProfile>, IngestError> {
    let path = path.as_ref();
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (line, record) in read_jsonl_numbered::<ProfileRecord>(path)? {
        let stored = record.into_stored(schema).map_err(|e| match e {
            ProfileRecordError::Schema(source) => IngestError::Validation {
                path: path.to_path_buf(),
                line,
                source,
            },
            ProfileRecordError::Drift(factor) => IngestError::ProbabilityDrift {
                path: path.to_path_buf(),
                line,
                factor,
            },
        })?;
        if !ids.insert(stored.profile_id.clone()) {
            return Err(IngestError::DuplicateProfileId(stored.profile_id));
        }
        out.push(stored);
    }
    Ok(out)
}

/// `{profile_id, label, return_pct}` line. Also reads profile JSONL lines,
/// whose extra fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub profile_id: String,
    pub label: Option<DecisionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_pct: Option<f64>,
}

/// Reads labeled ids, skipping lines whose label is null.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<(String, DecisionLabel)>, IngestError> {
    let records: Vec<LabelRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .filter_map(|r| Some((r.profile_id, r.label?)))
        .collect())
}

/// Append-only profile file with an in-memory index. Reads may run
/// concurrently; appends are serialized through a single writer.
pub struct ProfileStore {
    path: PathBuf,
    schema: Arc<FactorSchema>,
    profiles: RwLock<Vec<StoredProfile>>,
    writer: Mutex<BufWriter<File>>,
}

impl ProfileStore {
    pub fn open(path: impl AsRef<Path>, schema: Arc<FactorSchema>) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() {
            load_profiles(&path, &schema)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Self {
            path,
            schema,
            profiles: RwLock::new(existing),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn schema(&self) -> &Arc<FactorSchema> {
        &self.schema
    }

    pub fn append(&self, profile: StoredProfile) -> Result<(), IngestError> {
        let mut writer = self.writer.lock().expect("profile writer poisoned");
        if self.get(&profile.profile_id).is_some() {
            return Err(IngestError::DuplicateProfileId(profile.profile_id));
        }
        write_jsonl_to(&mut *writer, &[ProfileRecord::from(&profile)]).map_err(io_err(&self.path))?;
        writer.flush().map_err(io_err(&self.path))?;
        self.profiles.write().expect("profile index poisoned").push(profile);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<StoredProfile> {
        self.profiles
            .read()
            .expect("profile index poisoned")
            .iter()
            .find(|p| p.profile_id == id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.profiles.read().expect("profile index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<StoredProfile> {
        self.profiles.read().expect("profile index poisoned").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn sample_profile(schema: &Arc<FactorSchema>, id: &str, seed: u8) -> StoredProfile {
        let grades = (0..schema.factor_count())
            .map(|i| {
                (0..schema.outcome_count(i))
                    .map(|j| LikelihoodGrade::from_value(((i + j + seed as usize) % 6 + 1) as u8).unwrap())
                    .collect()
            })
            .collect();
        let summaries = (0..schema.factor_count()).map(|i| format!("summary {i} ✓")).collect();
        StoredProfile {
            profile_id: id.to_string(),
            ticker: "DAL".into(),
            date: "2021-10-13".parse().unwrap(),
            sector: Some("Industrials".into()),
            label: Some(DecisionLabel::Buy),
            profile: FactorProfile::from_grades(schema.clone(), grades, summaries).unwrap(),
        }
    }

    #[test]
    fn empty_transcript_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.json", "");
        assert!(matches!(load_transcript(&p), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn transcript_missing_field_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.json", r#"{"ticker": "dal", "prepared_remarks": []}"#);
        let err = load_transcript(&p).unwrap_err();
        assert!(matches!(&err, IngestError::SchemaViolation { message, .. } if message.contains("announcement_date")));
        let p = write(
            dir.path(),
            "t2.json",
            r#"{"ticker": "dal", "announcement_date": "2021-10-13", "prepared_remarks": []}"#,
        );
        assert!(matches!(load_transcript(&p), Err(IngestError::SchemaViolation { .. })));
    }

    #[test]
    fn transcript_preserves_order_and_uppercases_ticker() {
        let dir = tempfile::tempdir().unwrap();
        let qa: Vec<String> = (0..10)
            .map(|i| {
                format!(
                    r#"{{"question": {{"speaker": "Analyst {i}", "text": "q{i}"}}, "answer": {{"speaker": "CFO", "text": "a{i}"}}}}"#
                )
            })
            .collect();
        let body = format!(
            r#"{{"ticker": "dal", "announcement_date": "2021-10-13",
                "prepared_remarks": [{{"speaker": "Operator", "text": "hi"}}, {{"speaker": "CEO", "text": "yo"}}],
                "qa_pairs": [{}]}}"#,
            qa.join(",")
        );
        let p = write(dir.path(), "t.json", &body);
        let t = load_transcript(&p).unwrap();
        assert_eq!(t.ticker, "DAL");
        assert_eq!(t.qa_pairs.len(), 10);
        assert_eq!(t.prepared_remarks[1].speaker, "CEO");
        assert_eq!(t.qa_pairs[3].question.speaker, "Analyst 3");
        assert_eq!(t.display_name(), "DAL");
        assert!(t.sector.is_none());
    }

    #[test]
    fn prices_sorted_and_validated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "aapl_prices.csv", "date,close\n2023-08-01,195.46\n2023-07-31,195.22\n");
        let s = load_prices(&p).unwrap();
        assert_eq!(s.ticker, "AAPL");
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[0], ("2023-07-31".parse().unwrap(), 195.22));
        assert_eq!(s.points()[1].1, 195.46);

        let p = write(dir.path(), "z.csv", "date,close\n2023-07-31,0\n");
        assert!(matches!(load_prices(&p), Err(IngestError::NonPositivePrice { .. })));
        let p = write(dir.path(), "dup.csv", "date,close\n2023-07-31,1\n2023-07-31,2\n");
        assert!(matches!(load_prices(&p), Err(IngestError::DuplicateDate { .. })));
        let p = write(dir.path(), "bad.csv", "date,close\n2023-07-31,abc\n");
        assert!(matches!(load_prices(&p), Err(IngestError::Parse { line: 2, .. })));
    }

    #[test]
    fn financials_skip_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "dal_fin.csv",
            "date,eps,revenue\n2021-03-31,-3.55,4150\n2021-06-30,-1.07,\n2020-12-31,-2.53,3970\n",
        );
        let f = load_financials(&p).unwrap();
        assert_eq!(f.ticker, "DAL");
        assert_eq!(f.eps.len(), 3);
        assert_eq!(f.revenue.len(), 2);
        assert!(f.eps.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "t.json", "{}");
        write(dir.path(), "p.csv", "date,close\n");
        let m = write(
            dir.path(),
            "m.json",
            r#"[{"transcript_path": "t.json", "prices_path": "p.csv", "profile_id": "a", "label": "hold"}]"#,
        );
        let manifest = load_manifest(&m).unwrap();
        assert!(manifest.entries[0].transcript_path.is_absolute());
        assert_eq!(manifest.entries[0].label, Some(DecisionLabel::Hold));

        let m = write(
            dir.path(),
            "m2.json",
            r#"{"entries": [{"transcript_path": "t.json", "prices_path": "p.csv", "profile_id": "a"},
                            {"transcript_path": "t.json", "prices_path": "p.csv", "profile_id": "a"}]}"#,
        );
        assert!(matches!(load_manifest(&m), Err(IngestError::DuplicateProfileId(_))));
        let m = write(dir.path(), "m3.json", r#"[{"transcript_path": "nope.json", "prices_path": "p.csv"}]"#);
        assert!(matches!(load_manifest(&m), Err(IngestError::MissingPath(_))));
    }

    #[test]
    fn profiles_round_trip() {
        let schema = Arc::new(default_schema());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.jsonl");
        let profiles: Vec<_> = (0..100).map(|i| sample_profile(&schema, &format!("p{i}"), i as u8)).collect();
        save_profiles(&profiles, &path).unwrap();
        let back = load_profiles(&path, &schema).unwrap();
        assert_eq!(back, profiles);
    }

    #[test]
    fn empty_profile_file_is_empty_set() {
        let schema = Arc::new(default_schema());
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.jsonl", "");
        assert!(load_profiles(&p, &schema).unwrap().is_empty());
    }

    #[test]
    fn bad_probability_line_is_validation_error() {
        let schema = Arc::new(default_schema());
        let mut record = ProfileRecord::from(&sample_profile(&schema, "x", 0));
        record.grades = None;
        record.probabilities[2] = vec![0.4, 0.4];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        write_jsonl(&path, &[record]).unwrap();
        assert!(matches!(
            load_profiles(&path, &schema),
            Err(IngestError::Validation { line: 1, .. })
        ));
    }

    #[test]
    fn tampered_probabilities_are_detected() {
        let schema = Arc::new(default_schema());
        let mut record = ProfileRecord::from(&sample_profile(&schema, "x", 0));
        record.probabilities[0] = vec![0.5, 0.5];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tampered.jsonl");
        write_jsonl(&path, &[record]).unwrap();
        assert!(matches!(
            load_profiles(&path, &schema),
            Err(IngestError::ProbabilityDrift { factor: 0, .. })
        ));
    }

    #[test]
    fn labels_read_from_profile_lines() {
        let schema = Arc::new(default_schema());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut a = sample_profile(&schema, "a", 1);
        let mut b = sample_profile(&schema, "b", 2);
        a.label = Some(DecisionLabel::StrongSell);
        b.label = None;
        save_profiles(&[a, b], &path).unwrap();
        assert_eq!(load_labels(&path).unwrap(), vec![("a".to_string(), DecisionLabel::StrongSell)]);
    }

    #[test]
    fn store_serializes_appends_and_reloads() {
        let schema = Arc::new(default_schema());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let store = Arc::new(ProfileStore::open(&path, schema.clone()).unwrap());
        std::thread::scope(|s| {
            for t in 0..4 {
                let store = store.clone();
                let schema = schema.clone();
                s.spawn(move || {
                    for i in 0..10 {
                        store.append(sample_profile(&schema, &format!("t{t}-{i}"), i)).unwrap();
                        assert!(!store.is_empty());
                    }
                });
            }
        });
        assert_eq!(store.len(), 40);
        assert!(store.append(sample_profile(&schema, "t0-0", 0)).is_err());
        drop(store);
        let reopened = ProfileStore::open(&path, schema).unwrap();
        assert_eq!(reopened.len(), 40);
        assert!(reopened.get("t3-9").is_some());
    }
}

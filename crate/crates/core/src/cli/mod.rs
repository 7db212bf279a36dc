//! The `define` command line: one subcommand per pipeline stage, JSON and
//! JSONL in between.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::btmodel::{BtError, Regime};
use crate::extractor::ClientMode;

pub use config::RunConfig;

/// Exit status for bad input, flags or files.
pub const EXIT_USER: i32 = 1;
/// Exit status for failures that are not the caller's fault.
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "define", version, about = "Factor-profile decision pipeline for earnings-call transcripts")]
pub struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Schema JSON file (defaults to the built-in 15-factor schema).
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the factor schema and its hash.
    Schema(OutArgs),
    /// Validate a dataset manifest and summarize its inputs.
    Ingest(IngestArgs),
    /// Label each manifest entry from its price history.
    Label(LabelArgs),
    /// Build factor profiles from transcripts via the completion client.
    Extract(ExtractArgs),
    /// Emit preference pairs for a pairing regime.
    Pairs(PairsArgs),
    /// Fit salience over outcome items and write the model file.
    Fit(FitArgs),
    /// Score profiles and assign decisions.
    Predict(PredictArgs),
    /// Find the K most analogous labeled profiles.
    Retrieve(RetrieveArgs),
    /// Let the model pick among retrieved examples.
    DecideAnalogical(DecideAnalogicalArgs),
    /// Compare predictions against gold labels.
    Eval(EvalArgs),
    /// Generate a synthetic planted-factor corpus.
    Synth(SynthArgs),
    /// Experiment reports and data for plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Calendar days between announcement and horizon.
    #[arg(long)]
    pub horizon_days: Option<u32>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Default)]
pub struct ClientArgs {
    /// live, fixture or record.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Directory of recorded exchanges.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model identifier sent to the endpoint.
    #[arg(long)]
    pub model_name: Option<String>,
    /// Maximum in-flight requests.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Retries after the first attempt on transport errors and 5xx.
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Live,
    Fixture,
    Record,
}

impl From<ModeArg> for ClientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => ClientMode::Live,
            ModeArg::Fixture => ClientMode::Fixture,
            ModeArg::Record => ClientMode::Record,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub client: ClientArgs,
    /// Transcripts processed concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Calendar days for labels computed from prices.
    #[arg(long)]
    pub horizon_days: Option<u32>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ProfileInput {
    /// Profiles JSONL.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Labels JSONL overriding labels stored with the profiles.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairingArgs {
    /// cross-sector, same-sector or same-company.
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    /// Keep at most this many pairs (uniform, seeded downsample).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Keep every pair.
    #[arg(long, conflicts_with = "cap")]
    pub no_cap: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    pub input: ProfileInput,
    #[command(flatten)]
    pub pairing: PairingArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: ProfileInput,
    #[command(flatten)]
    pub pairing: PairingArgs,
    /// Accumulate same-item products on the diagonal instead of cross-item
    /// products (carries no ranking signal).
    #[arg(long)]
    pub literal_diagonal: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub input: ProfileInput,
    /// Bucket sizes follow this label file's distribution.
    #[arg(long, conflicts_with_all = ["counts", "cutpoints"])]
    pub counts_from: Option<PathBuf>,
    /// Explicit bucket sizes SB,B,H,S,SS (rescaled to the batch size).
    #[arg(long, value_delimiter = ',', conflicts_with = "cutpoints")]
    pub counts: Option<Vec<usize>>,
    /// Four ascending score cutpoints for per-profile thresholds.
    #[arg(long, value_delimiter = ',')]
    pub cutpoints: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Number of neighbors.
    #[arg(long)]
    pub k: Option<usize>,
    /// Profile id of the query.
    #[arg(long)]
    pub target: String,
    /// Labeled profiles to search.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Profiles file holding the target when it is not in the corpus.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Skip neighbors from the target's own company.
    #[arg(long)]
    pub exclude_ticker: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DecideAnalogicalArgs {
    #[command(flatten)]
    pub retrieve: RetrieveArgs,
    /// Company name for the prompt (defaults to the ticker).
    #[arg(long)]
    pub company: Option<String>,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL with profile_id and label.
    #[arg(long)]
    pub preds: PathBuf,
    /// Gold labels JSONL (labels or profiles).
    #[arg(long)]
    pub golds: PathBuf,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Share of labels replaced by a uniform draw.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Planted item as FACTOR:OUTCOME (names or 0-based indices).
    #[arg(long)]
    pub planted: Option<String>,
    #[arg(long)]
    pub sectors: Option<usize>,
    #[arg(long)]
    pub companies: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(subcommand)]
    pub kind: ReportKind,
}

#[derive(Debug, Subcommand)]
pub enum ReportKind {
    /// Top items of a model by salience.
    Salience {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Positive/negative outcome mass per profile, grouped by label (CSV).
    Density {
        #[command(flatten)]
        input: ProfileInput,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Agreement between system calls and nearest-example labels.
    Agreement {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        nearest: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One model per pairing regime on the same split.
    Regimes {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        pairing: PairingArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train-on-sector / test-on-sector grid.
    Grid {
        #[command(flatten)]
        input: ProfileInput,
        #[command(flatten)]
        pairing: PairingArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Majority vote over the K nearest neighbors for several K.
    KSweep {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        ks: Vec<usize>,
        #[arg(long)]
        exclude_ticker: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Chain-of-thought baseline over profiles, summaries or transcripts.
    Cot {
        #[arg(long, value_enum)]
        input: CotInputKind,
        /// Profiles JSONL; supplies ids, dates and gold labels.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// JSONL of {profile_id, summary} for the summary input.
        #[arg(long)]
        summaries: Option<PathBuf>,
        /// Manifest whose transcripts feed the transcript input.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Expected macro F1 of uniform random guessing for a gold file.
    RandomBaseline {
        #[arg(long)]
        golds: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CotInputKind {
    Profile,
    Summary,
    Transcript,
}

/// Error tagged with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        let error = e.into();
        let internal = error
            .downcast_ref::<BtError>()
            .is_some_and(|b| matches!(b, BtError::NotConverged { .. }));
        CliError {
            code: if internal { EXIT_INTERNAL } else { EXIT_USER },
            error,
        }
    }
}

pub fn internal(error: anyhow::Error) -> CliError {
    CliError {
        code: EXIT_INTERNAL,
        error,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { 0 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("DEFINE_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .try_init();
    match std::panic::catch_unwind(|| commands::dispatch(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
        Err(_) => EXIT_INTERNAL,
    }
}

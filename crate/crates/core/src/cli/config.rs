use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::analogy::DEFAULT_K;
use crate::btmodel::Regime;
use crate::extractor::ClientConfig;
use crate::labeler::DEFAULT_HORIZON_DAYS;

/// Settings shared across subcommands, read from `--config`. Relative paths
/// resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub client: ClientConfig,
    pub seed: u64,
    pub regime: Regime,
    pub cap: Option<usize>,
    pub k: usize,
    pub horizon_days: u32,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: None,
            manifest: None,
            profiles: None,
            labels: None,
            model: None,
            fixtures: None,
            client: ClientConfig::default(),
            seed: 0,
            regime: Regime::CrossSector,
            cap: Some(5000),
            k: DEFAULT_K,
            horizon_days: DEFAULT_HORIZON_DAYS,
            workers: 4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.schema,
            &mut cfg.manifest,
            &mut cfg.profiles,
            &mut cfg.labels,
            &mut cfg.model,
            &mut cfg.fixtures,
            &mut cfg.client.fixture_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.horizon_days == 0 {
            bail!("horizon_days must be at least 1");
        }
        if self.workers == 0 || self.client.concurrency == 0 {
            bail!("workers and concurrency must be at least 1");
        }
        Ok(())
    }
}

/// Returns the flag value, else the configured one, else a usage error
/// naming the flag.
pub fn require(flag: Option<&PathBuf>, configured: Option<&PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    let path = flag
        .or(configured)
        .cloned()
        .with_context(|| format!("--{name} is required (or set \"{name}\" in the config file)"))?;
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    Ok(path)
}

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{ChatExchange, ExtractError, ResponseFormat};

pub const API_KEY_ENV: &str = "DEFINE_API_KEY";

/// Anything that turns a chat exchange into the model's reply text.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ExtractError>;
}

impl<F> CompletionClient for F
where
    F: Fn(&ChatExchange) -> Result<String, ExtractError> + Send + Sync,
{
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ExtractError> {
        self(exchange)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientMode {
    Live,
    #[default]
    Fixture,
    /// Live calls whose replies are written to the fixture directory.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub mode: ClientMode,
    pub fixture_dir: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-2024-08-06".into(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 4,
            temperature: 0.0,
            seed: None,
            mode: ClientMode::Fixture,
            fixture_dir: None,
        }
    }
}

/// One recorded exchange on disk, stored as `{hash}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub hash: String,
    pub exchange: ChatExchange,
    pub response: String,
}

impl FixtureRecord {
    pub fn new(exchange: ChatExchange, response: String) -> Self {
        Self {
            hash: exchange.content_hash(),
            exchange,
            response,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExtractError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.hash));
        let text = serde_json::to_string_pretty(self).expect("fixture serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Replays recorded replies. Never touches the network.
#[derive(Debug, Clone)]
pub struct FixtureClient {
    dir: PathBuf,
}

impl FixtureClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl CompletionClient for FixtureClient {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ExtractError> {
        let hash = exchange.content_hash();
        let path = self.dir.join(format!("{hash}.json"));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ExtractError::FixtureMissing {
                    hash,
                    dir: self.dir.clone(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let record: FixtureRecord =
            serde_json::from_str(&text).map_err(|e| ExtractError::MalformedJson(format!("{}: {e}", path.display())))?;
        if record.exchange != *exchange {
            return Err(ExtractError::MalformedJson(format!(
                "{}: stored exchange does not match its hash",
                path.display()
            )));
        }
        Ok(record.response)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(ExtractError),
}

/// Client for an OpenAI-compatible chat-completions endpoint.
pub struct LiveClient {
    config: ClientConfig,
    api_key: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl LiveClient {
    pub fn new(config: ClientConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits::new(config.concurrency);
        Self {
            config,
            api_key: api_key.into(),
            agent,
            permits,
        }
    }

    pub fn from_env(config: ClientConfig) -> Result<Self, ExtractError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ExtractError::MissingApiKey)?;
        Ok(Self::new(config, key))
    }

    fn request_body(&self, exchange: &ChatExchange) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": exchange.system_message},
                {"role": "user", "content": exchange.user_message},
            ],
            "temperature": self.config.temperature,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        if exchange.response_format == ResponseFormat::Json {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}: {}", truncate(&text))));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(ExtractError::Http {
                status,
                body: truncate(&text).to_string(),
            }));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| Attempt::Fatal(ExtractError::MalformedJson(e.to_string())))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Attempt::Fatal(ExtractError::MalformedJson("response has no choices[0].message.content".into())))
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(500) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl CompletionClient for LiveClient {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ExtractError> {
        let body = self.request_body(exchange);
        let _permit = self.permits.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => {
                    debug!(attempt, "completion received");
                    return Ok(text);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    warn!(attempt, %message, "completion attempt failed");
                    last = message;
                    if attempt < attempts {
                        let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(ExtractError::Transport { attempts, message: last })
    }
}

/// Forwards to another client and stores every reply as a fixture.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ExtractError> {
        let response = self.inner.complete(exchange)?;
        FixtureRecord::new(exchange.clone(), response.clone()).write(&self.dir)?;
        Ok(response)
    }
}

pub fn build_client(config: &ClientConfig) -> Result<Box<dyn CompletionClient>, ExtractError> {
    let fixture_dir = || {
        config
            .fixture_dir
            .clone()
            .ok_or_else(|| ExtractError::Template("fixture mode needs a fixture directory".into()))
    };
    Ok(match config.mode {
        ClientMode::Fixture => Box::new(FixtureClient::new(fixture_dir()?)),
        ClientMode::Live => Box::new(LiveClient::from_env(config.clone())?),
        ClientMode::Record => Box::new(RecordingClient::new(LiveClient::from_env(config.clone())?, fixture_dir()?)),
    })
}

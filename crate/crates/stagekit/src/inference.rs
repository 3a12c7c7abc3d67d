//! Chat-completions client with log-probability capture, request timing,
//! and a record/replay cassette that makes model-dependent runs
//! deterministic and network-free.
//!
//! Requests are keyed by a hash over model, prompt, and every decoding
//! parameter, so any configuration drift between a recorded run and a
//! replay fails loudly instead of silently answering from a stale entry.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned an unusable response: {0}")]
    Protocol(String),
    #[error("replay cassette has no entry for request {request_hash}; the prompt or decoding config drifted from the recorded run")]
    CassetteMiss { request_hash: String },
    #[error("cassette `{path}`: {message}")]
    Cassette { path: String, message: String },
    #[error("endpoint configuration invalid: {0}")]
    Config(String),
}

impl InferenceError {
    /// Transport failures may be retried; everything else is data or
    /// configuration and must surface.
    pub fn is_retryable(&self) -> bool {
        matches!(self, InferenceError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Talk to the endpoint; nothing is persisted.
    Live,
    /// Talk to the endpoint and append every new exchange to the cassette;
    /// requests already on the cassette are answered from it.
    Record,
    /// Never touch the network; every request must be on the cassette.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default)]
    pub auth_env: Option<String>,
    pub mode: ReplayMode,
    #[serde(default)]
    pub cassette_path: Option<PathBuf>,
}

/// Decoding parameters carried on every request and folded into its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub logprobs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub text: String,
    /// Per-token log-probabilities when the endpoint returned them.
    pub logprobs: Option<Vec<f64>>,
    /// Milliseconds since the epoch. In blocking mode the window spans
    /// request dispatch to response arrival, which covers first to last
    /// token.
    pub first_token_ms: u64,
    pub last_token_ms: u64,
    pub completion_tokens: Option<u64>,
    pub finish_reason: Option<String>,
}

impl InferenceResponse {
    pub fn duration_ms(&self) -> u64 {
        self.last_token_ms - self.first_token_ms
    }
}

/// Hash of everything that determines an exchange: model id, prompt, and
/// all decoding parameters. Field order is fixed by this struct.
#[derive(Serialize)]
struct RequestFingerprint<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    logprobs: bool,
}

pub fn request_hash(model: &str, prompt: &str, params: &DecodingParams) -> String {
    let fingerprint = RequestFingerprint {
        model,
        prompt,
        temperature: params.temperature,
        top_p: params.top_p,
        max_tokens: params.max_tokens,
        logprobs: params.logprobs,
    };
    let canonical = serde_json::to_string(&fingerprint).expect("fingerprint serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

/// One reviewable cassette line: the request key, a prompt digest and
/// preview for human inspection, and the full response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub request_hash: String,
    pub model: String,
    pub prompt_digest: String,
    pub prompt_preview: String,
    pub response: InferenceResponse,
}

fn preview(prompt: &str) -> String {
    const LIMIT: usize = 120;
    let flat: String = prompt
        .chars()
        .map(|c| if c == '\n' { ' ' } else { c })
        .take(LIMIT)
        .collect();
    flat
}

fn load_cassette(path: &Path) -> Result<BTreeMap<String, CassetteRecord>, InferenceError> {
    let file = std::fs::File::open(path).map_err(|e| InferenceError::Cassette {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut records = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| InferenceError::Cassette {
            path: path.display().to_string(),
            message: format!("line {}: {}", i + 1, e),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CassetteRecord =
            serde_json::from_str(&line).map_err(|e| InferenceError::Cassette {
                path: path.display().to_string(),
                message: format!("line {}: {}", i + 1, e),
            })?;
        if record.response.last_token_ms < record.response.first_token_ms {
            return Err(InferenceError::Cassette {
                path: path.display().to_string(),
                message: format!("line {}: last-token timestamp precedes first-token", i + 1),
            });
        }
        records.insert(record.request_hash.clone(), record);
    }
    Ok(records)
}

enum CassetteState {
    None,
    /// Read-only store for replay.
    Replay(BTreeMap<String, CassetteRecord>),
    /// Append store for record mode; known hashes answer without network.
    Record {
        path: PathBuf,
        known: BTreeMap<String, CassetteRecord>,
    },
}

/// Blocking chat-completions client. Shareable across worker threads; the
/// cassette is the only guarded state.
pub struct InferenceClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    cassette: Mutex<CassetteState>,
}

impl InferenceClient {
    pub fn new(config: EndpointConfig) -> Result<Self, InferenceError> {
        if config.timeout_ms == 0 {
            return Err(InferenceError::Config("timeout_ms must be positive".into()));
        }
        let cassette = match config.mode {
            ReplayMode::Live => CassetteState::None,
            ReplayMode::Replay => {
                let path = config.cassette_path.as_ref().ok_or_else(|| {
                    InferenceError::Config("replay mode requires a cassette path".into())
                })?;
                CassetteState::Replay(load_cassette(path)?)
            }
            ReplayMode::Record => {
                let path = config.cassette_path.clone().ok_or_else(|| {
                    InferenceError::Config("record mode requires a cassette path".into())
                })?;
                let known = if path.exists() {
                    load_cassette(&path)?
                } else {
                    BTreeMap::new()
                };
                CassetteState::Record { path, known }
            }
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| InferenceError::Config(e.to_string()))?;
        Ok(Self {
            config,
            http,
            cassette: Mutex::new(cassette),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Sends one prompt (or answers it from the cassette) and returns the
    /// completion with log-probabilities and timing.
    pub fn complete(
        &self,
        prompt: &str,
        params: &DecodingParams,
    ) -> Result<InferenceResponse, InferenceError> {
        if prompt.is_empty() {
            return Err(InferenceError::Config("prompt must be non-empty".into()));
        }
        let hash = request_hash(&self.config.model, prompt, params);

        {
            let cassette = self.cassette.lock().expect("cassette lock");
            match &*cassette {
                CassetteState::Replay(records) => {
                    return match records.get(&hash) {
                        Some(record) => Ok(record.response.clone()),
                        None => Err(InferenceError::CassetteMiss { request_hash: hash }),
                    };
                }
                CassetteState::Record { known, .. } => {
                    if let Some(record) = known.get(&hash) {
                        return Ok(record.response.clone());
                    }
                }
                CassetteState::None => {}
            }
        }

        let response = self.send(prompt, params)?;

        let mut cassette = self.cassette.lock().expect("cassette lock");
        if let CassetteState::Record { path, known } = &mut *cassette {
            if let std::collections::btree_map::Entry::Vacant(slot) = known.entry(hash) {
                let record = CassetteRecord {
                    request_hash: slot.key().clone(),
                    model: self.config.model.clone(),
                    prompt_digest: sha256_hex(prompt),
                    prompt_preview: preview(prompt),
                    response: response.clone(),
                };
                let mut line = serde_json::to_string(&record).expect("cassette record serializes");
                line.push('\n');
                let mut file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&*path)
                    .map_err(|e| InferenceError::Cassette {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                file.write_all(line.as_bytes())
                    .map_err(|e| InferenceError::Cassette {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                slot.insert(record);
            }
        }
        Ok(response)
    }

    fn send(
        &self,
        prompt: &str,
        params: &DecodingParams,
    ) -> Result<InferenceResponse, InferenceError> {
        let url = format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "logprobs": params.logprobs,
        });
        let mut request = self.http.post(&url).json(&body);
        if let Some(var) = &self.config.auth_env {
            if let Ok(token) = std::env::var(var) {
                request = request.bearer_auth(token);
            }
        }

        let started = Instant::now();
        let first_token_ms = epoch_ms();
        let response = request
            .send()
            .map_err(|e| InferenceError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| InferenceError::Transport(e.to_string()))?;
        let elapsed = started.elapsed().as_millis() as u64;
        if !status.is_success() {
            return Err(InferenceError::Transport(format!(
                "HTTP {status}: {}",
                preview(&text)
            )));
        }
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| InferenceError::Protocol(format!("{e}; body: {}", preview(&text))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| InferenceError::Protocol("response has no choices".into()))?;
        let logprobs = choice
            .logprobs
            .and_then(|l| l.content)
            .map(|tokens| tokens.into_iter().map(|t| t.logprob).collect::<Vec<f64>>());
        Ok(InferenceResponse {
            text: choice
                .message
                .ok_or_else(|| InferenceError::Protocol("choice has no message".into()))?
                .content
                .unwrap_or_default(),
            logprobs,
            first_token_ms,
            last_token_ms: first_token_ms + elapsed,
            completion_tokens: parsed.usage.and_then(|u| u.completion_tokens),
            finish_reason: choice.finish_reason,
        })
    }
}

fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_millis() as u64
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: Option<WireMessage>,
    logprobs: Option<WireLogprobs>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    content: Option<Vec<WireTokenLogprob>>,
}

#[derive(Deserialize)]
struct WireTokenLogprob {
    logprob: f64,
}

#[derive(Deserialize)]
struct WireUsage {
    completion_tokens: Option<u64>,
}

//! Single-model recognition path: one multimodal chat-completions call with
//! a fixed prompt, the full frame attached as a data-URL PNG.
//!
//! Credentials are taken from an environment variable whose *name* is
//! configured; the value is read at call time, sent as a bearer header, and
//! never stored, logged, or echoed into errors.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::recognizer::{normalize_plate, NormalizeError, PlateString};
use crate::retry::{self, RetryPolicy};

/// The canonical recognition prompt, shipped byte-exact and checksum-pinned
/// in tests. Treat as frozen data: any edit changes recognition behavior.
pub const RECOGNITION_PROMPT: &str = "This image is a photo of a car or motorcycle license plate. Please output only the license plate number shown in the image, in a format of 6 or 7 characters composed of English letters and numbers, such as \"ABC1234.\" The license plate number should retain only alphanumeric content, with all spaces and hyphens removed. Do not add any annotations or extra text, only return the license plate number.";

/// Returns the canonical prompt.
pub fn build_prompt() -> &'static str {
    RECOGNITION_PROMPT
}

/// Normalizes a raw model answer into a plate, enforcing the 6-or-7
/// uppercase-alphanumeric shape. Shared with every other text source.
pub fn parse_response(raw: &str) -> Result<PlateString, NormalizeError> {
    normalize_plate(raw)
}

#[derive(Debug, thiserror::Error)]
pub enum LmmError {
    #[error("api key environment variable {var} is not set (export it before running)")]
    MissingKey { var: String },
    #[error("transport: {0}")]
    Transport(reqwest::Error),
    #[error("upstream status {status} after {attempts} attempt(s)")]
    BadStatus { status: u16, attempts: u32 },
    #[error("upstream response is not a chat-completions envelope")]
    BadEnvelope,
    #[error("retry policy: {0}")]
    Policy(#[from] crate::retry::RetryError),
    #[error("http client: {0}")]
    Build(reqwest::Error),
}

/// Client configuration. Holds the *name* of the credential variable, never
/// the credential itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmmConfig {
    /// OpenAI-compatible chat-completions URL.
    pub endpoint: String,
    pub model_id: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
    /// When the model answers with text that fails normalization, ask once
    /// more (a single re-ask, budgeted against max_attempts). Off by
    /// default: the model did answer; re-asking is a policy choice.
    pub reask_on_parse_failure: bool,
}

impl Default for LmmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_ms: 30_000,
            retry: RetryPolicy::lmm_default(),
            reask_on_parse_failure: false,
        }
    }
}

/// A prepared request: the chat body with prompt and embedded image, plus
/// the time spent preparing it (the "load" phase).
#[derive(Debug, Clone)]
pub struct LmmRequest {
    body: serde_json::Value,
    load: Duration,
}

impl LmmRequest {
    pub fn new(image_png: Vec<u8>, cfg: &LmmConfig) -> Self {
        let start = Instant::now();
        let data_url = format!("data:image/png;base64,{}", BASE64.encode(&image_png));
        let body = serde_json::json!({
            "model": cfg.model_id,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": RECOGNITION_PROMPT},
                    {"type": "image_url", "image_url": {"url": data_url}}
                ]
            }]
        });
        Self {
            body,
            load: start.elapsed(),
        }
    }

    pub fn body(&self) -> &serde_json::Value {
        &self.body
    }
}

/// Wall-clock split of one recognition: request preparation, HTTP round
/// trips (backoff included), and answer parsing. Total is the exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseTimings {
    pub load: Duration,
    pub call: Duration,
    pub parse: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.load + self.call + self.parse
    }
}

/// Model answer with its normalization outcome and call accounting.
#[derive(Debug, Clone)]
pub struct LmmResponse {
    pub raw_text: String,
    pub normalized: Result<PlateString, NormalizeError>,
    pub attempts: u32,
    pub timings: PhaseTimings,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: String,
}

enum CallFailure {
    Transport(reqwest::Error),
    Status(u16),
    BadEnvelope,
}

/// Blocking chat-completions client. Cheap to clone; clones share the call
/// counter.
#[derive(Debug, Clone)]
pub struct LmmClient {
    cfg: LmmConfig,
    http: reqwest::blocking::Client,
    calls: Arc<AtomicU64>,
}

impl LmmClient {
    pub fn new(cfg: LmmConfig) -> Result<Self, LmmError> {
        cfg.retry.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(LmmError::Build)?;
        Ok(Self {
            cfg,
            http,
            calls: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn config(&self) -> &LmmConfig {
        &self.cfg
    }

    /// HTTP attempts made by this client (and its clones) so far.
    pub fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// One recognition: POST with retry on transport errors, 429 and 5xx;
    /// other statuses and envelope problems fail immediately. A successful
    /// call whose text fails normalization is returned as data (normalized
    /// = Err), optionally after a single re-ask.
    pub fn recognize_with_retry(&self, req: &LmmRequest) -> Result<LmmResponse, LmmError> {
        let api_key =
            std::env::var(&self.cfg.api_key_env).map_err(|_| LmmError::MissingKey {
                var: self.cfg.api_key_env.clone(),
            })?;

        let one_call = |_: u32| -> Result<String, CallFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let resp = self
                .http
                .post(&self.cfg.endpoint)
                .bearer_auth(&api_key)
                .json(req.body())
                .send()
                .map_err(CallFailure::Transport)?;
            let status = resp.status().as_u16();
            if !(200..300).contains(&status) {
                return Err(CallFailure::Status(status));
            }
            let envelope: ChatResponse = resp.json().map_err(|_| CallFailure::BadEnvelope)?;
            envelope
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or(CallFailure::BadEnvelope)
        };
        let retryable = |e: &CallFailure| {
            matches!(e, CallFailure::Transport(_))
                || matches!(e, CallFailure::Status(429) | CallFailure::Status(500..=599))
        };

        let call_start = Instant::now();
        let (outcome, mut attempts) = retry::execute(&self.cfg.retry, one_call, retryable);
        let mut call_elapsed = call_start.elapsed();
        let mut raw_text = match outcome {
            Ok(raw) => raw,
            Err(e) => return Err(self.map_failure(e, attempts)),
        };

        let parse_start = Instant::now();
        let mut normalized = normalize_plate(&raw_text);
        let mut parse_elapsed = parse_start.elapsed();

        if normalized.is_err()
            && self.cfg.reask_on_parse_failure
            && attempts < self.cfg.retry.max_attempts
        {
            let t = Instant::now();
            match one_call(attempts + 1) {
                Ok(second) => {
                    call_elapsed += t.elapsed();
                    attempts += 1;
                    raw_text = second;
                    let t = Instant::now();
                    normalized = normalize_plate(&raw_text);
                    parse_elapsed += t.elapsed();
                }
                Err(e) => return Err(self.map_failure(e, attempts + 1)),
            }
        }

        Ok(LmmResponse {
            raw_text,
            normalized,
            attempts,
            timings: PhaseTimings {
                load: req.load,
                call: call_elapsed,
                parse: parse_elapsed,
            },
        })
    }

    fn map_failure(&self, e: CallFailure, attempts: u32) -> LmmError {
        match e {
            CallFailure::Transport(err) => LmmError::Transport(err),
            CallFailure::Status(status) => LmmError::BadStatus { status, attempts },
            CallFailure::BadEnvelope => LmmError::BadEnvelope,
        }
    }
}

//! Blocking HTTP client for OpenAI-style chat completion endpoints.
//!
//! Each prompt is sent as a single user message. Timeouts, transport
//! errors, 429s, and 5xx statuses are retried with capped exponential
//! backoff; other statuses and malformed bodies fail immediately. The
//! client never logs or captures API keys.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CallStats, CompletionRequest, CompletionResponse, LlmClient, LlmError, StatsCell};
use crate::hash::sha256_hex;

/// Retry schedule: delay before retry `k` (1-based) is
/// `min(base_backoff_ms << (k - 1), max_backoff_ms)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryConfig {
    /// Total attempts including the first (1 = never retry).
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 500,
            max_backoff_ms: 10_000,
        }
    }
}

impl RetryConfig {
    /// Backoff before the `retry`-th retry (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let shift = retry.saturating_sub(1).min(63);
        let ms = self
            .base_backoff_ms
            .saturating_mul(1u64.checked_shl(shift).unwrap_or(u64::MAX))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    /// Endpoint origin, e.g. `http://localhost:8000`.
    pub base_url: String,
    /// Request path, joined onto `base_url`.
    pub path: String,
    pub model: String,
    /// Bearer token, already resolved from the environment by the caller.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryConfig,
    pub max_in_flight: usize,
}

impl HttpLlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: "/v1/chat/completions".to_owned(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            retry: RetryConfig::default(),
            max_in_flight: 4,
        }
    }

    fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

/// Optional line-delimited capture of request outcomes for offline
/// latency and cost analysis. Records prompt hashes, never prompt text.
#[derive(Debug)]
pub struct AuditLog {
    writer: Mutex<BufWriter<File>>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    prompt_sha256: &'a str,
    outcome: &'a str,
    attempts: u32,
    latency_ms: u64,
    prompt_tokens: u64,
    completion_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

impl AuditLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            writer: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    pub(crate) fn record_success(&self, prompt: &str, response: &CompletionResponse) {
        self.write(&AuditRecord {
            prompt_sha256: &sha256_hex(prompt),
            outcome: "ok",
            attempts: response.attempts,
            latency_ms: response.latency_ms,
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            error: None,
        });
    }

    pub(crate) fn record_error(&self, prompt: &str, error: &LlmError, latency_ms: u64) {
        self.write(&AuditRecord {
            prompt_sha256: &sha256_hex(prompt),
            outcome: "error",
            attempts: error.attempts(),
            latency_ms,
            prompt_tokens: 0,
            completion_tokens: 0,
            error: Some(&error.to_string()),
        });
    }

    fn write(&self, record: &AuditRecord<'_>) {
        if let Ok(line) = serde_json::to_string(record) {
            let mut writer = self.writer.lock().expect("audit writer poisoned");
            let _ = writeln!(writer, "{line}");
            let _ = writer.flush();
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

enum AttemptOutcome {
    Ok {
        text: String,
        prompt_tokens: u64,
        completion_tokens: u64,
    },
    Retryable(RetryableKind),
    Fatal(LlmError),
}

enum RetryableKind {
    Timeout,
    Transport(String),
    Status(u16, String),
}

pub struct HttpLlmClient {
    config: HttpLlmConfig,
    http: reqwest::blocking::Client,
    stats: StatsCell,
    audit: Option<AuditLog>,
}

impl HttpLlmClient {
    pub fn new(config: HttpLlmConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|err| LlmError::InvalidRequest {
                reason: format!("http client: {err}"),
            })?;
        Ok(Self {
            config,
            http,
            stats: StatsCell::default(),
            audit: None,
        })
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    fn send_once(&self, request: &CompletionRequest) -> AttemptOutcome {
        let body = ChatBody {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            seed: request.seed,
        };
        let mut builder = self.http.post(self.config.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(response) => response,
            Err(err) if err.is_timeout() => return AttemptOutcome::Retryable(RetryableKind::Timeout),
            Err(err) => {
                return AttemptOutcome::Retryable(RetryableKind::Transport(err.to_string()))
            }
        };
        let status = response.status();
        let text = match response.text() {
            Ok(text) => text,
            Err(err) if err.is_timeout() => return AttemptOutcome::Retryable(RetryableKind::Timeout),
            Err(err) => {
                return AttemptOutcome::Retryable(RetryableKind::Transport(err.to_string()))
            }
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return AttemptOutcome::Retryable(RetryableKind::Status(
                status.as_u16(),
                snippet(&text),
            ));
        }
        if !status.is_success() {
            return AttemptOutcome::Fatal(LlmError::Status {
                status: status.as_u16(),
                attempts: 0, // filled by the retry loop
                message: snippet(&text),
            });
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(parsed) => parsed,
            Err(err) => {
                return AttemptOutcome::Fatal(LlmError::MalformedResponse {
                    message: err.to_string(),
                })
            }
        };
        let content = parsed
            .choices
            .first()
            .and_then(|choice| choice.message.content.clone());
        match content {
            Some(text) => {
                let usage = parsed.usage.unwrap_or_default();
                AttemptOutcome::Ok {
                    text,
                    prompt_tokens: usage.prompt_tokens,
                    completion_tokens: usage.completion_tokens,
                }
            }
            None => AttemptOutcome::Fatal(LlmError::MalformedResponse {
                message: "no choices with message content".to_owned(),
            }),
        }
    }
}

fn snippet(text: &str) -> String {
    let trimmed = text.trim();
    if trimmed.len() <= 200 {
        trimmed.to_owned()
    } else {
        let mut end = 200;
        while !trimmed.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &trimmed[..end])
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::InvalidRequest {
                reason: "empty prompt".to_owned(),
            });
        }
        if request.max_tokens == 0 {
            return Err(LlmError::InvalidRequest {
                reason: "max_tokens must be at least 1".to_owned(),
            });
        }
        self.stats.record_request();
        let started = Instant::now();
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.stats.record_attempt();
            match self.send_once(request) {
                AttemptOutcome::Ok {
                    text,
                    prompt_tokens,
                    completion_tokens,
                } => {
                    self.stats.record_success();
                    let response = CompletionResponse {
                        text,
                        prompt_tokens,
                        completion_tokens,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                    };
                    if let Some(audit) = &self.audit {
                        audit.record_success(&request.prompt, &response);
                    }
                    return Ok(response);
                }
                AttemptOutcome::Retryable(kind) => {
                    if attempt < max_attempts {
                        self.stats.record_retry();
                        std::thread::sleep(self.config.retry.backoff(attempt));
                        continue;
                    }
                    self.stats.record_failure();
                    let error = match kind {
                        RetryableKind::Timeout => LlmError::Timeout { attempts: attempt },
                        RetryableKind::Transport(message) => LlmError::Transport {
                            attempts: attempt,
                            message,
                        },
                        RetryableKind::Status(status, message) => LlmError::Status {
                            status,
                            attempts: attempt,
                            message,
                        },
                    };
                    if let Some(audit) = &self.audit {
                        audit.record_error(
                            &request.prompt,
                            &error,
                            started.elapsed().as_millis() as u64,
                        );
                    }
                    return Err(error);
                }
                AttemptOutcome::Fatal(mut error) => {
                    self.stats.record_failure();
                    if let LlmError::Status { attempts, .. } = &mut error {
                        *attempts = attempt;
                    }
                    if let Some(audit) = &self.audit {
                        audit.record_error(
                            &request.prompt,
                            &error,
                            started.elapsed().as_millis() as u64,
                        );
                    }
                    return Err(error);
                }
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }

    fn stats(&self) -> CallStats {
        self.stats.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let retry = RetryConfig {
            max_attempts: 5,
            base_backoff_ms: 500,
            max_backoff_ms: 3_000,
        };
        assert_eq!(retry.backoff(1), Duration::from_millis(500));
        assert_eq!(retry.backoff(2), Duration::from_millis(1_000));
        assert_eq!(retry.backoff(3), Duration::from_millis(2_000));
        assert_eq!(retry.backoff(4), Duration::from_millis(3_000));
        assert_eq!(retry.backoff(10), Duration::from_millis(3_000));
    }

    #[test]
    fn url_joins_without_double_slash() {
        let config = HttpLlmConfig::new("http://localhost:9000/", "m");
        assert_eq!(config.url(), "http://localhost:9000/v1/chat/completions");
    }
}

//! Completion clients: the [`LlmClient`] trait, an HTTP client for
//! OpenAI-style chat endpoints, and a deterministic scripted client for
//! tests and simulations.
//!
//! Clients are synchronous. Batch dispatch fans requests out over a small
//! scoped thread pool, never exceeding the client's `max_in_flight`, and
//! returns results in request order regardless of completion order.

pub mod http;
pub mod scripted;

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::Serialize;

pub use http::{AuditLog, HttpLlmClient, HttpLlmConfig, RetryConfig};
pub use scripted::{extract_prompt_fields, PromptFields, ScriptedLlm};

/// One completion request. `seed` is forwarded to endpoints that support
/// deterministic decoding; the scripted client uses it to tell sampled
/// repeats of the same prompt apart.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 256,
            temperature: 0.0,
            seed: None,
        }
    }
}

/// A successful completion. Token counts are zero when the endpoint does
/// not report usage. `attempts` is 1 when no retries were needed.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("invalid request: {reason}")]
    InvalidRequest { reason: String },
    #[error("endpoint returned status {status} after {attempts} attempt(s): {message}")]
    Status {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("malformed response body: {message}")]
    MalformedResponse { message: String },
    #[error("no scripted response for prompt (sha256 {prompt_sha256})")]
    ScriptMiss { prompt_sha256: String },
}

impl LlmError {
    /// Attempts consumed before this error was returned.
    pub fn attempts(&self) -> u32 {
        match self {
            Self::Status { attempts, .. }
            | Self::Transport { attempts, .. }
            | Self::Timeout { attempts } => *attempts,
            _ => 1,
        }
    }
}

/// Cumulative counters a client keeps about its own traffic.
///
/// `requests` counts logical completions; `attempts` counts wire attempts
/// including retries, so `attempts - requests` is the total retry volume
/// when every request resolves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CallStats {
    pub requests: u64,
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    pub retries: u64,
}

#[derive(Debug, Default)]
pub(crate) struct StatsCell {
    requests: AtomicU64,
    attempts: AtomicU64,
    successes: AtomicU64,
    failures: AtomicU64,
    retries: AtomicU64,
}

impl StatsCell {
    pub(crate) fn record_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_attempt(&self) {
        self.attempts.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_retry(&self) {
        self.retries.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_success(&self) {
        self.successes.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_failure(&self) {
        self.failures.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn snapshot(&self) -> CallStats {
        CallStats {
            requests: self.requests.load(Ordering::Relaxed),
            attempts: self.attempts.load(Ordering::Relaxed),
            successes: self.successes.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
        }
    }
}

/// A synchronous completion client.
///
/// Implementations must be shareable across threads; batch dispatch calls
/// [`LlmClient::complete`] from several threads at once, bounded by
/// [`LlmClient::max_in_flight`].
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError>;

    /// Upper bound on concurrent in-flight requests. Batch dispatch never
    /// exceeds it.
    fn max_in_flight(&self) -> usize {
        1
    }

    fn stats(&self) -> CallStats;

    /// Completes a batch, preserving request order in the results. Each
    /// request succeeds or fails independently.
    fn complete_batch(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<CompletionResponse, LlmError>> {
        complete_bounded(self, requests)
    }
}

/// Fans `requests` out over at most `client.max_in_flight()` worker
/// threads and reassembles results in request order.
pub fn complete_bounded<C: LlmClient + ?Sized>(
    client: &C,
    requests: &[CompletionRequest],
) -> Vec<Result<CompletionResponse, LlmError>> {
    let bound = client.max_in_flight().max(1);
    if requests.len() <= 1 || bound == 1 {
        return requests.iter().map(|r| client.complete(r)).collect();
    }
    let workers = bound.min(requests.len());
    let next = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel();
    thread::scope(|scope| {
        for _ in 0..workers {
            let sender = sender.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= requests.len() {
                    break;
                }
                let result = client.complete(&requests[index]);
                if sender.send((index, result)).is_err() {
                    break;
                }
            });
        }
    });
    drop(sender);
    let mut slots: Vec<Option<Result<CompletionResponse, LlmError>>> =
        (0..requests.len()).map(|_| None).collect();
    for (index, result) in receiver {
        slots[index] = Some(result);
    }
    slots
        .into_iter()
        .map(|slot| slot.expect("worker reported every request"))
        .collect()
}

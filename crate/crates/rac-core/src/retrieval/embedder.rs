//! Embedding providers: an HTTP client for OpenAI-style embedding
//! endpoints and a file-backed provider over precomputed vectors.
//!
//! Texts are embedded verbatim — no normalization, truncation, or
//! prefixing — so precomputed vector files can be keyed by a plain
//! sha256 of the text.

use std::collections::HashMap;
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::hash::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("text at position {index} is empty")]
    EmptyText { index: usize },
    #[error("no precomputed vector for text (sha256 {text_sha256})")]
    MissingVector { text_sha256: String },
    #[error("embedding endpoint returned status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("embedding transport failure: {message}")]
    Transport { message: String },
    #[error("embedding request timed out")]
    Timeout,
    #[error("malformed embedding response: {message}")]
    Malformed { message: String },
    #[error("vector file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Produces embeddings for raw texts. `embedder_id` identifies the model
/// (or vector source) so indexes can refuse queries from a different one.
pub trait EmbeddingProvider: Send + Sync {
    fn embedder_id(&self) -> &str;

    /// Embeds `texts` in order, one vector per text.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// One line of a precomputed vector file: the sha256 of the text and its
/// embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorFileEntry {
    pub text_sha256: String,
    pub vector: Vec<f32>,
}

/// Embeddings served from a precomputed table keyed by sha256 of the
/// text. Lets hermetic runs skip the embedding endpoint entirely.
#[derive(Debug)]
pub struct FileVectorProvider {
    id: String,
    vectors: HashMap<String, EmbeddingVector>,
}

impl FileVectorProvider {
    /// Reads a line-delimited vector file. `id` should name the embedder
    /// that produced the vectors so index compatibility checks stay
    /// meaningful.
    pub fn from_reader(id: impl Into<String>, reader: impl BufRead) -> Result<Self, EmbedError> {
        let mut vectors = HashMap::new();
        for (index, line) in reader.lines().enumerate() {
            let number = index + 1;
            let line = line.map_err(|err| EmbedError::Parse {
                line: number,
                message: err.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: VectorFileEntry =
                serde_json::from_str(&line).map_err(|err| EmbedError::Parse {
                    line: number,
                    message: err.to_string(),
                })?;
            let vector = EmbeddingVector::new(entry.vector).map_err(|err| EmbedError::Parse {
                line: number,
                message: err.to_string(),
            })?;
            if vectors.insert(entry.text_sha256.clone(), vector).is_some() {
                return Err(EmbedError::Parse {
                    line: number,
                    message: format!("duplicate entry for hash {}", entry.text_sha256),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            vectors,
        })
    }

    /// Builds a provider from in-memory (text, vector) pairs, hashing the
    /// texts. Handy for constructing test fixtures.
    pub fn from_texts(
        id: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Result<Self, EmbedError> {
        let mut vectors = HashMap::new();
        for (text, values) in pairs {
            let vector = EmbeddingVector::new(values).map_err(|err| EmbedError::Malformed {
                message: err.to_string(),
            })?;
            vectors.insert(sha256_hex(&text), vector);
        }
        Ok(Self {
            id: id.into(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileVectorProvider {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                if text.is_empty() {
                    return Err(EmbedError::EmptyText { index });
                }
                let hash = sha256_hex(text);
                self.vectors
                    .get(&hash)
                    .cloned()
                    .ok_or(EmbedError::MissingVector { text_sha256: hash })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    /// Bearer token, already resolved from the environment by the caller.
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpEmbedderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: "/v1/embeddings".to_owned(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
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

#[derive(Serialize)]
struct EmbeddingBody<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingData {
    index: usize,
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

/// Blocking client for OpenAI-style `/v1/embeddings` endpoints. The
/// `embedder_id` is the model name.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    http: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, EmbedError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|err| EmbedError::Transport {
                message: err.to_string(),
            })?;
        Ok(Self { config, http })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        &self.config.model
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(index) = texts.iter().position(|t| t.is_empty()) {
            return Err(EmbedError::EmptyText { index });
        }
        let body = EmbeddingBody {
            model: &self.config.model,
            input: texts,
        };
        let mut builder = self.http.post(self.config.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|err| {
            if err.is_timeout() {
                EmbedError::Timeout
            } else {
                EmbedError::Transport {
                    message: err.to_string(),
                }
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|err| EmbedError::Transport {
            message: err.to_string(),
        })?;
        if !status.is_success() {
            return Err(EmbedError::Http {
                status: status.as_u16(),
                message: text.chars().take(200).collect(),
            });
        }
        let parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|err| EmbedError::Malformed {
                message: err.to_string(),
            })?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Malformed {
                message: format!(
                    "endpoint returned {} vectors for {} texts",
                    parsed.data.len(),
                    texts.len()
                ),
            });
        }
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        data.into_iter()
            .map(|d| {
                EmbeddingVector::new(d.embedding).map_err(|err| EmbedError::Malformed {
                    message: err.to_string(),
                })
            })
            .collect()
    }
}

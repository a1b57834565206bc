//! Token embedders for BERTScore: a hash-based stand-in and an
//! OpenAI-compatible `/embeddings` endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use tsprompt_core::metrics::{EmbedError, HashEmbedder};
use tsprompt_core::Embedder;

use crate::llm::{Permits, API_KEY_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Hash,
    Http,
}

/// Embedder selection. `dim` applies to `hash`; the endpoint fields to `http`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_dim() -> usize {
    64
}
fn default_timeout() -> f64 {
    60.0
}
fn default_parallelism() -> usize {
    1
}

impl EmbedderConfig {
    pub fn hash(dim: usize) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Hash,
            dim,
            endpoint_url: None,
            model_name: None,
            request_timeout_secs: default_timeout(),
            parallelism: default_parallelism(),
        }
    }

    pub fn http(endpoint_url: &str, model_name: &str) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            ..Self::hash(default_dim())
        }
    }

    /// `hash` or `hash:<dim>` selects the hash embedder; anything else is an
    /// endpoint URL.
    pub fn from_arg(arg: &str, model_name: &str) -> Result<Self, EmbedError> {
        match arg.strip_prefix("hash") {
            Some("") => Ok(Self::hash(default_dim())),
            Some(rest) if rest.starts_with(':') => rest[1..]
                .parse()
                .map(Self::hash)
                .map_err(|_| EmbedError(format!("invalid hash embedder dimension `{}`", &rest[1..]))),
            _ => Ok(Self::http(arg, model_name)),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder + Send + Sync>, EmbedError> {
        match self.kind {
            EmbedderKind::Hash => {
                if self.dim == 0 {
                    return Err(EmbedError("embedding dimension must be positive".into()));
                }
                Ok(Box::new(HashEmbedder { dim: self.dim }))
            }
            EmbedderKind::Http => {
                let url = self.endpoint_url.as_deref().ok_or_else(|| EmbedError("endpoint_url is required for http embedder".into()))?;
                let model = self.model_name.as_deref().unwrap_or_default();
                Ok(Box::new(HttpEmbedder::new(url, model, self.request_timeout_secs, self.parallelism)?))
            }
        }
    }
}

pub struct HttpEmbedder {
    url: String,
    model: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    permits: Permits,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, timeout_secs: f64, parallelism: usize) -> Result<Self, EmbedError> {
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return Err(EmbedError("request_timeout_secs must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_secs))
            .build()
            .map_err(|e| EmbedError(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpEmbedder {
            url: url.into(),
            model: model.into(),
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            permits: Permits::new(parallelism.max(1)),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let mut request = self.client.post(&self.url).json(&EmbedRequest { model: &self.model, input: tokens });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let (status, body) = {
            let _permit = self.permits.acquire();
            let response = request.send().map_err(|e| EmbedError(format!("embedding request failed: {e}")))?;
            let status = response.status();
            (status, response.text().map_err(|e| EmbedError(format!("embedding request failed: {e}")))?)
        };
        if !status.is_success() {
            return Err(EmbedError(format!("embedding endpoint returned HTTP {}: {body}", status.as_u16())));
        }
        let mut parsed: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| EmbedError(format!("unparseable embedding response: {e}")))?;
        if parsed.data.len() != tokens.len() {
            return Err(EmbedError(format!(
                "embedding endpoint returned {} vectors for {} tokens",
                parsed.data.len(),
                tokens.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

//! Text embedding behind the [`Embedder`] trait.
//!
//! Two implementations: [`RemoteEmbedder`] talks to an HTTP inference
//! endpoint, [`StubEmbedder`] is a deterministic signed feature-hashing
//! bag-of-words used for offline runs and tests.

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use url::Url;

pub const EMBED_URL_ENV: &str = "SITEGROUNDER_EMBED_URL";
pub const MIN_STUB_DIM: usize = 8;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// A fixed-length vector with unit L2 norm, or all zeros for text with no
/// tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Scales `values` to unit length. An all-zero input stays zero.
    pub fn normalized(values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self(vec![0.0; values.len()]);
        }
        Self(
            values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        )
    }

    /// Wraps values that are already unit length (or zero), e.g. when loading
    /// a persisted index.
    pub fn from_raw(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Inner product; equals cosine similarity for unit vectors.
    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Signed feature hashing: each token adds ±1 to bucket `h mod dim`, the
/// sign taken from bit 63 of its FNV-1a hash. The result is L2-normalized.
pub fn stub_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(
        dim >= MIN_STUB_DIM,
        "stub embedding dim must be >= {MIN_STUB_DIM}"
    );
    let mut acc = vec![0i64; dim];
    for token in tokenize(text) {
        let h = fnv1a_64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
    }
    let norm = (acc.iter().map(|c| (c * c) as f64).sum::<f64>()).sqrt();
    if norm == 0.0 {
        return EmbeddingVector::zeros(dim);
    }
    EmbeddingVector(acc.into_iter().map(|c| (c as f64 / norm) as f32).collect())
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("invalid embedder profile: {0}")]
    InvalidProfile(String),
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn model_id(&self) -> &str;

    /// One vector per input, in input order.
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()]).await?;
        out.pop()
            .ok_or_else(|| EmbedError::MalformedResponse("empty batch result".into()))
    }
}

#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    model_id: String,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_STUB_DIM {
            return Err(EmbedError::InvalidProfile(format!(
                "stub dim must be >= {MIN_STUB_DIM}, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            model_id: format!("stub-fnv1a-{dim}"),
        })
    }
}

#[async_trait]
impl Embedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| stub_embed(t, self.dim)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for `POST {"model", "inputs"} -> {"vectors"}` endpoints.
/// Vectors are re-normalized client-side.
pub struct RemoteEmbedder {
    client: reqwest::Client,
    endpoint: Url,
    model_id: String,
    dim: usize,
    batch_size: usize,
    max_in_flight: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: Url, model_id: impl Into<String>, dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidProfile("dim must be positive".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model_id: model_id.into(),
            dim,
            batch_size: 32,
            max_in_flight: 2,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    async fn send_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp = self
            .client
            .post(self.endpoint.clone())
            .json(&EmbedRequest {
                model: &self.model_id,
                inputs: texts,
            })
            .send()
            .await
            .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::RemoteUnavailable(format!(
                "HTTP {}",
                resp.status()
            )));
        }
        let body: EmbedResponse = resp
            .json()
            .await
            .map_err(|e| EmbedError::MalformedResponse(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::MalformedResponse(format!(
                "{} vectors for {} inputs",
                body.vectors.len(),
                texts.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        got: v.len(),
                    })
                } else {
                    Ok(EmbeddingVector::normalized(v))
                }
            })
            .collect()
    }
}

#[async_trait]
impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let permits = tokio::sync::Semaphore::new(self.max_in_flight);
        let requests = texts.chunks(self.batch_size).map(|batch| {
            let permits = &permits;
            async move {
                let _permit = permits.acquire().await.expect("semaphore is never closed");
                self.send_batch(batch).await
            }
        });
        let batches = futures::future::try_join_all(requests).await?;
        Ok(batches.into_iter().flatten().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderProfile {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<Url>,
    pub model_id: String,
    pub dim: usize,
}

impl EmbedderProfile {
    pub fn stub(dim: usize) -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint_url: None,
            model_id: format!("stub-fnv1a-{dim}"),
            dim,
        }
    }

    /// Remote profiles without an explicit endpoint read
    /// `SITEGROUNDER_EMBED_URL`.
    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        match self.kind {
            BackendKind::Stub => Ok(Arc::new(StubEmbedder::new(self.dim)?)),
            BackendKind::Remote => {
                let endpoint = match &self.endpoint_url {
                    Some(url) => url.clone(),
                    None => {
                        let raw = std::env::var(EMBED_URL_ENV).map_err(|_| {
                            EmbedError::InvalidProfile(format!(
                                "remote embedder needs endpoint_url or {EMBED_URL_ENV}"
                            ))
                        })?;
                        Url::parse(&raw).map_err(|e| EmbedError::InvalidProfile(e.to_string()))?
                    }
                };
                Ok(Arc::new(RemoteEmbedder::new(
                    endpoint,
                    self.model_id.clone(),
                    self.dim,
                )?))
            }
        }
    }
}

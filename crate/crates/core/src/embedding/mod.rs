//! The shared text/image embedding space.
//!
//! Two providers sit behind [`Embedder`]: a deterministic hash-seeded one
//! used for tests and offline fixtures, and an HTTP client for an external
//! encoder service. Both always return unit-norm vectors of `cfg.dim`.

mod deterministic;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::model::EmbeddingVector;

pub use deterministic::{fnv1a64, splitmix64, DeterministicEmbedder};
pub use remote::{EmbedKind, EmbedRequest, EmbedResponse, RemoteEmbedder};

/// Images sent to a remote encoder are resized to this short side.
pub const REMOTE_SHORT_SIDE: usize = 480;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot normalize a zero-norm vector")]
    ZeroNorm,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid embedder configuration: {0}")]
    Config(String),
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("embedding provider protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    DeterministicTest,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub provider: ProviderKind,
    pub remote_endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Upper bound on concurrent requests to the remote service.
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            provider: ProviderKind::DeterministicTest,
            remote_endpoint: None,
            timeout_ms: 5000,
            max_retries: 2,
            max_in_flight: 4,
            backoff_ms: 100,
        }
    }
}

impl EmbedderConfig {
    pub fn deterministic(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn remote(dim: usize, endpoint: impl Into<String>) -> Self {
        Self {
            dim,
            provider: ProviderKind::Remote,
            remote_endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be at least 1".into()));
        }
        match (self.provider, &self.remote_endpoint) {
            (ProviderKind::Remote, None) => Err(EmbedError::Config(
                "remote provider requires remote_endpoint".into(),
            )),
            (ProviderKind::DeterministicTest, Some(_)) => Err(EmbedError::Config(
                "remote_endpoint is only valid with the remote provider".into(),
            )),
            (ProviderKind::Remote, Some(_)) if self.max_in_flight == 0 => Err(EmbedError::Config(
                "max_in_flight must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Divides by the L2 norm. Vectors already unit-norm to f32 precision are
/// returned unchanged.
pub fn unit_normalize(v: &[f32]) -> Result<EmbeddingVector, EmbedError> {
    if v.is_empty() {
        return Err(EmbedError::Argument("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::Argument("non-finite component".into()));
    }
    let norm = crate::model::l2_norm(v);
    if norm == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    if (norm - 1.0).abs() <= f64::from(f32::EPSILON) {
        return Ok(EmbeddingVector::from_trusted(v.to_vec()));
    }
    let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    normalize_f64(&wide).ok_or(EmbedError::ZeroNorm)
}

/// Normalizes in double precision and rounds to f32. `None` on zero norm.
pub(crate) fn normalize_f64(v: &[f64]) -> Option<EmbeddingVector> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    if (norm - 1.0).abs() <= f64::from(f32::EPSILON) {
        return Some(EmbeddingVector::from_trusted(
            v.iter().map(|&x| x as f32).collect(),
        ));
    }
    Some(EmbeddingVector::from_trusted(
        v.iter().map(|&x| (x / norm) as f32).collect(),
    ))
}

enum Provider {
    Deterministic(DeterministicEmbedder),
    Remote(RemoteEmbedder),
}

/// A configured embedding provider. Safe to share across threads.
pub struct Embedder {
    cfg: EmbedderConfig,
    provider: Provider,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let provider = match cfg.provider {
            ProviderKind::DeterministicTest => {
                Provider::Deterministic(DeterministicEmbedder::new(cfg.dim))
            }
            ProviderKind::Remote => Provider::Remote(RemoteEmbedder::new(&cfg)),
        };
        Ok(Self { cfg, provider })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::Argument("query text is empty".into()));
        }
        match &self.provider {
            Provider::Deterministic(d) => Ok(d.embed_text(text)),
            Provider::Remote(r) => r
                .embed(EmbedKind::Text, vec![text.to_owned()])
                .map(|mut v| v.remove(0)),
        }
    }

    pub fn embed_frame(&self, img: &GrayImage) -> Result<EmbeddingVector, EmbedError> {
        self.embed_frames(std::slice::from_ref(img))
            .map(|mut v| v.remove(0))
    }

    /// Embeds a batch of frames; one vector per frame in input order.
    pub fn embed_frames(&self, imgs: &[GrayImage]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if imgs.is_empty() {
            return Ok(Vec::new());
        }
        match &self.provider {
            Provider::Deterministic(d) => Ok(imgs.iter().map(|i| d.embed_frame(i)).collect()),
            Provider::Remote(r) => {
                let items = imgs.iter().map(remote::encode_image_item).collect();
                r.embed(EmbedKind::Image, items)
            }
        }
    }
}

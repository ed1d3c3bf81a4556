//! Client for an external encoder service.
//!
//! Wire format: `POST {endpoint}/embed` with
//! `{"kind": "text"|"image", "items": [...]}` where image items are
//! base64-encoded PGM files; a `200` reply carries
//! `{"dim": n, "vectors": [[...], ...]}`. Any other status is a failure.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::model::EmbeddingVector;

use super::{unit_normalize, EmbedError, EmbedderConfig, REMOTE_SHORT_SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Text,
    Image,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub kind: EmbedKind,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

/// Resizes to the encoder's short side and encodes as base64 PGM.
pub(crate) fn encode_image_item(img: &GrayImage) -> String {
    let resized = img.resize_short_side(REMOTE_SHORT_SIDE);
    base64::engine::general_purpose::STANDARD.encode(resized.to_pgm())
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
    slots: Slots,
}

enum Attempt {
    Retry(String),
    Fatal(EmbedError),
}

impl RemoteEmbedder {
    pub(crate) fn new(cfg: &EmbedderConfig) -> Self {
        let endpoint = cfg
            .remote_endpoint
            .as_deref()
            .expect("validated: remote provider has an endpoint");
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        Self {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            dim: cfg.dim,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            agent,
            slots: Slots {
                free: Mutex::new(cfg.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    /// Sends one batch, retrying transport failures and non-200 replies with
    /// exponential backoff. Output is re-normalized locally.
    pub fn embed(
        &self,
        kind: EmbedKind,
        items: Vec<String>,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let expected = items.len();
        let body = EmbedRequest { kind, items };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.try_once(&body, expected) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => {
                    log::warn!("embed request attempt {} failed: {reason}", attempt + 1);
                    last = reason;
                }
            }
        }
        Err(EmbedError::ProviderUnavailable {
            attempts: self.max_retries + 1,
            reason: last,
        })
    }

    fn try_once(
        &self,
        body: &EmbedRequest,
        expected: usize,
    ) -> Result<Vec<EmbeddingVector>, Attempt> {
        let _slot = self.slots.acquire();
        let resp = match self.agent.post(&self.url).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(Attempt::Retry(format!("HTTP status {code}")))
            }
            Err(ureq::Error::Transport(t)) => return Err(Attempt::Retry(t.to_string())),
        };
        if resp.status() != 200 {
            return Err(Attempt::Retry(format!("HTTP status {}", resp.status())));
        }
        let parsed: EmbedResponse = resp
            .into_json()
            .map_err(|e| Attempt::Fatal(EmbedError::Protocol(format!("bad response body: {e}"))))?;
        self.check(parsed, expected).map_err(Attempt::Fatal)
    }

    fn check(
        &self,
        resp: EmbedResponse,
        expected: usize,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if resp.dim != self.dim {
            return Err(EmbedError::Protocol(format!(
                "server dim {} does not match configured dim {}",
                resp.dim, self.dim
            )));
        }
        if resp.vectors.len() != expected {
            return Err(EmbedError::Protocol(format!(
                "expected {expected} vectors, got {}",
                resp.vectors.len()
            )));
        }
        resp.vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != self.dim {
                    return Err(EmbedError::Protocol(format!(
                        "vector {i} has dim {}, expected {}",
                        v.len(),
                        self.dim
                    )));
                }
                unit_normalize(v).map_err(|e| EmbedError::Protocol(format!("vector {i}: {e}")))
            })
            .collect()
    }
}

use thiserror::Error;

use crate::embedding::DeterministicEmbedder;
use crate::image::GrayImage;
use crate::index::dot;

use super::explain::DEFAULT_CHUNK;
use super::{same_dims, Dims, PredictionCandidate, PredictionSet, SegError, SoftMaskVolume};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct PredictorError(pub String);

/// Produces N candidate (confidence, mask) pairs for a chunk of frames and
/// a referring expression. Implementations must not share mutable state
/// between calls; chunks may be predicted concurrently.
pub trait MaskPredictor: Send + Sync {
    fn predict(&self, frames: &[GrayImage], text: &str) -> Result<PredictionSet, PredictorError>;
}

/// Validates the chunk, runs the predictor and checks that the returned
/// masks cover the chunk exactly.
pub fn predict_masks(
    predictor: &dyn MaskPredictor,
    frames: &[GrayImage],
    text: &str,
) -> Result<PredictionSet, SegError> {
    let first = frames
        .first()
        .ok_or_else(|| SegError::Argument("chunk has no frames".into()))?;
    if frames.len() > DEFAULT_CHUNK {
        return Err(SegError::Argument(format!(
            "chunk of {} frames exceeds the maximum of {DEFAULT_CHUNK}",
            frames.len()
        )));
    }
    let (h, w) = (first.height(), first.width());
    if let Some(f) = frames.iter().find(|f| (f.height(), f.width()) != (h, w)) {
        return Err(SegError::DimMismatch(format!(
            "frame {}x{} in a {h}x{w} chunk",
            f.height(),
            f.width()
        )));
    }
    let set = predictor
        .predict(frames, text)
        .map_err(|e| SegError::Predictor {
            start: 0,
            end: frames.len(),
            message: e.0,
        })?;
    same_dims(
        set.dims(),
        Dims {
            t: frames.len(),
            h,
            w,
        },
    )?;
    Ok(set)
}

pub const STUB_CANDIDATES: usize = 5;
const BAND_WIDTH: u16 = 51;

/// Deterministic stand-in: candidate `k` is the intensity band
/// `[51k, 51(k+1))` (the last band also takes 255), and its confidence is
/// `(1 + cos(text, band-masked first frame)) / 2` under the hash embedder.
#[derive(Debug, Clone)]
pub struct StubPredictor {
    embedder: DeterministicEmbedder,
}

impl StubPredictor {
    pub fn new(dim: usize) -> Self {
        Self {
            embedder: DeterministicEmbedder::new(dim),
        }
    }

    fn band(px: u8) -> usize {
        ((u16::from(px) / BAND_WIDTH) as usize).min(STUB_CANDIDATES - 1)
    }
}

impl Default for StubPredictor {
    fn default() -> Self {
        Self::new(512)
    }
}

impl MaskPredictor for StubPredictor {
    fn predict(&self, frames: &[GrayImage], text: &str) -> Result<PredictionSet, PredictorError> {
        let first = frames
            .first()
            .ok_or_else(|| PredictorError("empty chunk".into()))?;
        let (h, w) = (first.height(), first.width());
        let text_vec = self.embedder.embed_text(text);

        let candidates = (0..STUB_CANDIDATES)
            .map(|k| {
                let probs: Vec<f64> = frames
                    .iter()
                    .flat_map(|f| f.pixels().iter())
                    .map(|&p| if Self::band(p) == k { 1.0 } else { 0.0 })
                    .collect();
                let masked: Vec<u8> = first
                    .pixels()
                    .iter()
                    .map(|&p| if Self::band(p) == k { p } else { 0 })
                    .collect();
                let masked = GrayImage::new(h, w, masked).expect("same shape as first frame");
                let cos = dot(
                    text_vec.values(),
                    self.embedder.embed_frame(&masked).values(),
                )
                .clamp(-1.0, 1.0);
                let confidence = ((1.0 + f64::from(cos)) / 2.0).clamp(0.0, 1.0);
                let mask = SoftMaskVolume::new(frames.len(), h, w, probs)
                    .map_err(|e| PredictorError(e.to_string()))?;
                PredictionCandidate::new(confidence, mask)
                    .map_err(|e| PredictorError(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PredictionSet::new(candidates).map_err(|e| PredictorError(e.to_string()))
    }
}

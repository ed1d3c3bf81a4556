//! Referring segmentation: set-prediction losses with instance matching,
//! inference-time candidate selection over fixed-size frame chunks, mask
//! run-length encoding, and region/boundary metrics.
//!
//! The neural mask predictor itself is abstracted behind [`MaskPredictor`];
//! [`StubPredictor`] is a deterministic stand-in.

mod explain;
mod loss;
mod metrics;
mod predictor;
mod rle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use explain::{
    chunk_frames, explain_chunk, explain_video, infer_select, ArtifactFrame, ChunkOutput,
    Explanation, MaskArtifact, CONFIDENCE_FLOOR, DEFAULT_CHUNK,
};
pub use loss::{
    bce_loss, dice_loss, loss_gradients, mask_ce_loss, match_cost, select_best, total_loss,
    LossGradients,
};
pub use metrics::{boundary_f, default_boundary_radius, iou, j_and_f, JandF};
pub use predictor::{predict_masks, MaskPredictor, PredictorError, StubPredictor, STUB_CANDIDATES};
pub use rle::{rle_decode, rle_encode, RleMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("shape mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("malformed mask encoding: {0}")]
    Format(String),
    #[error("predictor failed on frames {start}..{end}: {message}")]
    Predictor {
        start: usize,
        end: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn len(&self) -> usize {
        self.t * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(self) -> Result<Self, SegError> {
        if self.t == 0 || self.h == 0 || self.w == 0 {
            return Err(SegError::Argument(format!(
                "mask dims must be >= 1, got {}x{}x{}",
                self.t, self.h, self.w
            )));
        }
        Ok(self)
    }
}

pub(crate) fn same_dims(a: Dims, b: Dims) -> Result<(), SegError> {
    if a != b {
        return Err(SegError::DimMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.t, a.h, a.w, b.t, b.h, b.w
        )));
    }
    Ok(())
}

/// Per-pixel foreground probabilities over `T×H×W`, frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMaskVolume {
    dims: Dims,
    probs: Vec<f64>,
}

impl SoftMaskVolume {
    pub fn new(t: usize, h: usize, w: usize, probs: Vec<f64>) -> Result<Self, SegError> {
        let dims = Dims { t, h, w }.check()?;
        if probs.len() != dims.len() {
            return Err(SegError::Argument(format!(
                "{} probabilities for {t}x{h}x{w}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SegError::Argument(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        Ok(Self { dims, probs })
    }

    pub fn from_binary(m: &BinaryMaskVolume) -> Self {
        Self {
            dims: m.dims,
            probs: m.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Thresholds at 0.5 inclusive.
    pub fn binarize(&self) -> BinaryMaskVolume {
        BinaryMaskVolume {
            dims: self.dims,
            bits: self.probs.iter().map(|&p| p >= 0.5).collect(),
        }
    }
}

/// One binary frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub h: usize,
    pub w: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self, SegError> {
        if h == 0 || w == 0 || bits.len() != h * w {
            return Err(SegError::Argument(format!(
                "{} bits for a {h}x{w} mask",
                bits.len()
            )));
        }
        Ok(Self { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                bits.push(f(r, c));
            }
        }
        Self { h, w, bits }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.w + c]
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Binary masks over `T×H×W`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMaskVolume {
    dims: Dims,
    bits: Vec<bool>,
}

impl BinaryMaskVolume {
    pub fn new(t: usize, h: usize, w: usize, bits: Vec<bool>) -> Result<Self, SegError> {
        let dims = Dims { t, h, w }.check()?;
        if bits.len() != dims.len() {
            return Err(SegError::Argument(format!(
                "{} bits for {t}x{h}x{w}",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn from_frames(frames: &[BinaryMask]) -> Result<Self, SegError> {
        let first = frames
            .first()
            .ok_or_else(|| SegError::Argument("no frames".into()))?;
        let mut bits = Vec::with_capacity(frames.len() * first.bits.len());
        for f in frames {
            if (f.h, f.w) != (first.h, first.w) {
                return Err(SegError::DimMismatch(format!(
                    "frame {}x{} vs {}x{}",
                    f.h, f.w, first.h, first.w
                )));
            }
            bits.extend_from_slice(&f.bits);
        }
        Self::new(frames.len(), first.h, first.w, bits)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn frame(&self, t: usize) -> BinaryMask {
        let n = self.dims.h * self.dims.w;
        BinaryMask {
            h: self.dims.h,
            w: self.dims.w,
            bits: self.bits[t * n..(t + 1) * n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCandidate {
    /// Probability that this candidate is the referred object.
    pub confidence: f64,
    pub mask: SoftMaskVolume,
}

impl PredictionCandidate {
    pub fn new(confidence: f64, mask: SoftMaskVolume) -> Result<Self, SegError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(SegError::Argument(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self { confidence, mask })
    }
}

/// N ≥ 1 candidates with identical mask dims.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    candidates: Vec<PredictionCandidate>,
}

impl PredictionSet {
    pub fn new(candidates: Vec<PredictionCandidate>) -> Result<Self, SegError> {
        let first = candidates.first().ok_or_else(|| {
            SegError::Argument("prediction set needs at least one candidate".into())
        })?;
        let dims = first.mask.dims();
        for c in &candidates[1..] {
            same_dims(dims, c.mask.dims())?;
        }
        Ok(Self { candidates })
    }

    pub fn candidates(&self) -> &[PredictionCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.candidates[0].mask.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub gamma_cls: f64,
    pub gamma_mask: f64,
    pub gamma_dice: f64,
    /// Smoothing added to both numerator and denominator of the dice ratio.
    pub dice_epsilon: f64,
    /// Probabilities are clamped to `[prob_clamp, 1 − prob_clamp]` inside logs.
    pub prob_clamp: f64,
    /// Adds `γ_cls · BCE(p̂_matched, 1)` to the loss. Off by default.
    pub include_matched_cls: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma_cls: 2.0,
            gamma_mask: 5.0,
            gamma_dice: 5.0,
            dice_epsilon: 1.0,
            prob_clamp: 1e-7,
            include_matched_cls: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), SegError> {
        let gammas = [self.gamma_cls, self.gamma_mask, self.gamma_dice];
        if gammas.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(SegError::Argument(
                "loss coefficients must be finite and >= 0".into(),
            ));
        }
        if self.dice_epsilon.is_nan() || self.dice_epsilon <= 0.0 {
            return Err(SegError::Argument("dice_epsilon must be > 0".into()));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(SegError::Argument("prob_clamp must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

//! Inference over whole videos in fixed-size chunks.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;

use super::predictor::{predict_masks, MaskPredictor};
use super::rle::{rle_decode, rle_encode, RleMask};
use super::{BinaryMask, PredictionSet, SegError};

/// Frames per predictor call.
pub const DEFAULT_CHUNK: usize = 32;

/// A chunk whose best candidate scores below this yields empty masks.
pub const CONFIDENCE_FLOOR: f64 = 0.5;

/// Consecutive `[start, end)` ranges of length `chunk` covering `0..t`;
/// the last one may be shorter.
pub fn chunk_frames(t: usize, chunk: usize) -> Result<Vec<Range<usize>>, SegError> {
    if chunk < 1 {
        return Err(SegError::Argument("chunk size must be at least 1".into()));
    }
    Ok((0..t)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(t))
        .collect())
}

/// Picks the most confident candidate (first wins ties) and encodes its
/// mask, binarized at `p >= 0.5`, one RLE per frame.
pub fn infer_select(set: &PredictionSet) -> (usize, Vec<RleMask>) {
    let mut best = 0;
    for (i, c) in set.candidates().iter().enumerate() {
        if c.confidence > set.candidates()[best].confidence {
            best = i;
        }
    }
    let bin = set.candidates()[best].mask.binarize();
    let masks = (0..bin.dims().t)
        .map(|t| rle_encode(&bin.frame(t)))
        .collect();
    (best, masks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutput {
    pub range: Range<usize>,
    pub selected: usize,
    pub confidence: f64,
    /// One per frame in `range`; empty when `confidence < CONFIDENCE_FLOOR`.
    pub masks: Vec<RleMask>,
}

pub fn explain_chunk(
    predictor: &dyn MaskPredictor,
    frames: &[GrayImage],
    range: Range<usize>,
    text: &str,
) -> Result<ChunkOutput, SegError> {
    let chunk = frames.get(range.clone()).ok_or_else(|| {
        SegError::Argument(format!("range {range:?} outside {} frames", frames.len()))
    })?;
    let set = predict_masks(predictor, chunk, text).map_err(|e| match e {
        SegError::Predictor { message, .. } => SegError::Predictor {
            start: range.start,
            end: range.end,
            message,
        },
        other => other,
    })?;
    let (selected, masks) = infer_select(&set);
    let confidence = set.candidates()[selected].confidence;
    let masks = if confidence < CONFIDENCE_FLOOR {
        masks.iter().map(|m| RleMask::empty(m.h, m.w)).collect()
    } else {
        masks
    };
    Ok(ChunkOutput {
        range,
        selected,
        confidence,
        masks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub h: usize,
    pub w: usize,
    pub chunks: Vec<ChunkOutput>,
}

impl Explanation {
    pub fn masks(&self) -> impl Iterator<Item = &RleMask> {
        self.chunks.iter().flat_map(|c| c.masks.iter())
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.confidence).collect()
    }
}

/// Runs every chunk (in parallel) and returns per-frame masks in frame order.
pub fn explain_video(
    predictor: &dyn MaskPredictor,
    frames: &[GrayImage],
    text: &str,
    chunk: usize,
) -> Result<Explanation, SegError> {
    if chunk > DEFAULT_CHUNK {
        return Err(SegError::Argument(format!(
            "chunk size {chunk} exceeds the maximum of {DEFAULT_CHUNK}"
        )));
    }
    let ranges = chunk_frames(frames.len(), chunk)?;
    let (h, w) = frames.first().map_or((0, 0), |f| (f.height(), f.width()));
    let chunks = ranges
        .into_par_iter()
        .map(|r| explain_chunk(predictor, frames, r, text))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Explanation { h, w, chunks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactFrame {
    pub frame_index: u64,
    pub counts: Vec<u32>,
}

/// The JSON mask artifact returned by explain requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskArtifact {
    pub video_id: String,
    pub text: String,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub frames: Vec<ArtifactFrame>,
    pub confidences: Vec<f64>,
}

impl MaskArtifact {
    pub fn new(video_id: impl Into<String>, text: impl Into<String>, ex: &Explanation) -> Self {
        Self {
            video_id: video_id.into(),
            text: text.into(),
            h: ex.h,
            w: ex.w,
            frames: ex
                .masks()
                .enumerate()
                .map(|(i, m)| ArtifactFrame {
                    frame_index: i as u64,
                    counts: m.counts.clone(),
                })
                .collect(),
            confidences: ex.confidences(),
        }
    }

    /// Decodes every frame; fails on any malformed run-length list.
    pub fn decode(&self) -> Result<Vec<BinaryMask>, SegError> {
        self.frames
            .iter()
            .map(|f| {
                rle_decode(&RleMask {
                    h: self.h,
                    w: self.w,
                    counts: f.counts.clone(),
                })
                .map_err(|e| SegError::Format(format!("frame {}: {e}", f.frame_index)))
            })
            .collect()
    }
}

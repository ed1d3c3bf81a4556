//! Indexing-stage preprocessing: blur filtering, orientation normalization
//! and grouping of near-duplicate frames into segments.
//!
//! Blur filtering runs before embedding so dropped frames are never sent to
//! the encoder; grouping runs after embedding because it compares vectors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::normalize_f64;
use crate::image::GrayImage;
use crate::model::{EmbeddingVector, FrameRecord, SegmentGroup, VideoMetadata};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("image is {height}x{width}; the Laplacian needs at least 3x3")]
    TooSmall { height: usize, width: usize },
    #[error("rotation must be 0..=3 quarter turns, got {0}")]
    BadTurns(i64),
    #[error("frame {frame_index} of {video_id} has no embedding")]
    MissingEmbedding { video_id: String, frame_index: u64 },
    #[error("frame {frame_index} of {video_id} has dim {actual}, expected {expected}")]
    DimMismatch {
        video_id: String,
        frame_index: u64,
        expected: usize,
        actual: usize,
    },
    #[error(
        "frames must belong to one video ordered by frame_index (at {video_id}:{frame_index})"
    )]
    Unordered { video_id: String, frame_index: u64 },
    #[error("similarity threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Minimum Laplacian variance (8-bit scale) for a frame to be kept.
    pub blur_threshold: f64,
    /// Cosine similarity a frame needs against the running segment
    /// representative to join that segment.
    pub similarity_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            blur_threshold: 100.0,
            similarity_threshold: 0.95,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let t = self.similarity_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(PreprocessError::BadThreshold(t));
        }
        Ok(())
    }
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(img: &GrayImage) -> Result<f64, PreprocessError> {
    let (h, w) = (img.height(), img.width());
    if h < 3 || w < 3 {
        return Err(PreprocessError::TooSmall {
            height: h,
            width: w,
        });
    }
    let px = img.pixels();
    let n = ((h - 2) * (w - 2)) as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for r in 1..h - 1 {
        let row = r * w;
        for c in 1..w - 1 {
            let i = row + c;
            let v = i32::from(px[i - w])
                + i32::from(px[i + w])
                + i32::from(px[i - 1])
                + i32::from(px[i + 1])
                - 4 * i32::from(px[i]);
            let v = f64::from(v);
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    // Responses are integers, so sum_sq/n − mean² is exact enough; clamp
    // the tiny negative values rounding can leave.
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// Why a frame was removed by [`filter_blurry`]. Serialized as one JSON line
/// of the drop log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropLogEntry {
    pub video_id: String,
    pub frame_index: u64,
    pub sharpness: f64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Blurry,
    /// Smaller than 3x3; sharpness is reported as 0.
    TooSmall,
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<(FrameRecord, GrayImage)>,
    pub dropped: Vec<DropLogEntry>,
}

/// Keeps frames whose Laplacian variance is at least `cfg.blur_threshold`,
/// preserving input order. Every input record gets its `sharpness` filled.
pub fn filter_blurry(
    frames: Vec<(FrameRecord, GrayImage)>,
    cfg: &PreprocessConfig,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (mut rec, img) in frames {
        let (sharpness, reason) = match laplacian_variance(&img) {
            Ok(v) => (v, DropReason::Blurry),
            Err(_) => (0.0, DropReason::TooSmall),
        };
        rec.sharpness = sharpness;
        if sharpness >= cfg.blur_threshold {
            out.kept.push((rec, img));
        } else {
            out.dropped.push(DropLogEntry {
                video_id: rec.video_id.clone(),
                frame_index: rec.frame_index,
                sharpness,
                reason,
            });
        }
    }
    out
}

/// Rotates clockwise by `turns` quarter turns. One turn sends (r, c) of an
/// HxW image to (c, H-1-r) of the WxH result.
pub fn rotate_quarter_cw(img: &GrayImage, turns: i64) -> Result<GrayImage, PreprocessError> {
    if !(0..=3).contains(&turns) {
        return Err(PreprocessError::BadTurns(turns));
    }
    let mut cur = img.clone();
    for _ in 0..turns {
        cur = rotate_once(&cur);
    }
    Ok(cur)
}

fn rotate_once(img: &GrayImage) -> GrayImage {
    let (h, w) = (img.height(), img.width());
    let src = img.pixels();
    let mut dst = vec![0u8; h * w];
    // destination is w rows by h columns
    for r in 0..h {
        for c in 0..w {
            dst[c * h + (h - 1 - r)] = src[r * w + c];
        }
    }
    GrayImage::new(w, h, dst).expect("rotation preserves pixel count")
}

/// Undoes the clockwise rotation recorded in the metadata.
pub fn normalize_orientation(img: &GrayImage, meta: &VideoMetadata) -> GrayImage {
    let recorded = i64::from(meta.rotation_quarter_turns.get());
    rotate_quarter_cw(img, (4 - recorded) % 4).expect("turns reduced mod 4")
}

/// Greedy single pass over one video's frames: a frame joins the open
/// segment when its cosine similarity to the segment representative (the
/// re-normalized mean of the members so far) is at least the threshold;
/// otherwise it opens a new segment.
pub fn group_similar(
    frames: &[FrameRecord],
    cfg: &PreprocessConfig,
) -> Result<Vec<SegmentGroup>, PreprocessError> {
    cfg.validate()?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let dim = first.embedding.as_ref().map(|e| e.dim()).ok_or_else(|| {
        PreprocessError::MissingEmbedding {
            video_id: first.video_id.clone(),
            frame_index: first.frame_index,
        }
    })?;

    let mut groups = Vec::new();
    let mut open: Option<OpenGroup> = None;
    let mut prev: Option<&FrameRecord> = None;

    for frame in frames {
        let emb = frame
            .embedding
            .as_ref()
            .ok_or_else(|| PreprocessError::MissingEmbedding {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
            })?;
        if emb.dim() != dim {
            return Err(PreprocessError::DimMismatch {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
                expected: dim,
                actual: emb.dim(),
            });
        }
        if let Some(p) = prev {
            if p.video_id != frame.video_id || p.frame_index >= frame.frame_index {
                return Err(PreprocessError::Unordered {
                    video_id: frame.video_id.clone(),
                    frame_index: frame.frame_index,
                });
            }
        }
        prev = Some(frame);

        match open.as_mut() {
            Some(g) if g.similarity(emb) >= cfg.similarity_threshold => g.push(frame, emb),
            _ => {
                if let Some(g) = open.take() {
                    groups.push(g.finish());
                }
                open = Some(OpenGroup::start(frame, emb));
            }
        }
    }
    if let Some(g) = open {
        groups.push(g.finish());
    }
    Ok(groups)
}

struct OpenGroup {
    video_id: String,
    start: u64,
    end: u64,
    count: u64,
    sum: Vec<f64>,
    first: EmbeddingVector,
    representative: EmbeddingVector,
}

impl OpenGroup {
    fn start(frame: &FrameRecord, emb: &EmbeddingVector) -> Self {
        Self {
            video_id: frame.video_id.clone(),
            start: frame.frame_index,
            end: frame.frame_index,
            count: 1,
            sum: emb.values().iter().map(|&v| f64::from(v)).collect(),
            first: emb.clone(),
            representative: emb.clone(),
        }
    }

    fn similarity(&self, emb: &EmbeddingVector) -> f64 {
        self.representative
            .values()
            .iter()
            .zip(emb.values())
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }

    fn push(&mut self, frame: &FrameRecord, emb: &EmbeddingVector) {
        for (s, &v) in self.sum.iter_mut().zip(emb.values()) {
            *s += f64::from(v);
        }
        self.count += 1;
        self.end = frame.frame_index;
        let n = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        self.representative = match normalize_f64(&mean) {
            Some(v) => v,
            None => {
                log::warn!(
                    "segment {}:{} mean embedding has zero norm; using first member",
                    self.video_id,
                    self.start
                );
                self.first.clone()
            }
        };
    }

    fn finish(self) -> SegmentGroup {
        SegmentGroup {
            segment_id: format!("{}/{}", self.video_id, self.start),
            video_id: self.video_id,
            start_frame: self.start,
            end_frame: self.end,
            representative: self.representative,
            member_count: self.count,
        }
    }
}

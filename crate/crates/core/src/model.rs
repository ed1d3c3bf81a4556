//! Shared domain types.
//!
//! Everything here is immutable once constructed and can be shared across
//! threads freely.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `| ‖v‖₂ − 1 |` for a vector to count as unit-norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("embedding is not unit-norm (‖v‖ = {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("embedding has zero dimensions")]
    EmptyEmbedding,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("rotation must be 0..=3 quarter turns, got {0}")]
    BadRotation(i64),
}

/// A dense vector in the shared text/image space, guaranteed unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding", into = "RawEmbedding")]
pub struct EmbeddingVector(Vec<f32>);

#[derive(Serialize, Deserialize)]
struct RawEmbedding {
    dim: usize,
    values: Vec<f32>,
}

impl TryFrom<RawEmbedding> for EmbeddingVector {
    type Error = String;

    fn try_from(raw: RawEmbedding) -> Result<Self, Self::Error> {
        if raw.dim != raw.values.len() {
            return Err(format!(
                "dim {} does not match {} values",
                raw.dim,
                raw.values.len()
            ));
        }
        EmbeddingVector::from_unit(raw.values).map_err(|e| e.to_string())
    }
}

impl From<EmbeddingVector> for RawEmbedding {
    fn from(v: EmbeddingVector) -> Self {
        RawEmbedding {
            dim: v.0.len(),
            values: v.0,
        }
    }
}

impl EmbeddingVector {
    /// Wraps values that are already unit-norm. Use
    /// [`crate::embedding::unit_normalize`] for arbitrary input.
    pub fn from_unit(values: Vec<f32>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyEmbedding);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(ModelError::NotUnitNorm { norm });
        }
        Ok(Self(values))
    }

    /// Skips the norm check; only for values read back from a trusted index file.
    pub(crate) fn from_trusted(values: Vec<f32>) -> Self {
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
}

pub(crate) fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Clockwise rotation recorded for a video, in quarter turns (0..=3).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct QuarterTurns(u8);

impl QuarterTurns {
    pub fn new(turns: i64) -> Result<Self, ModelError> {
        if (0..=3).contains(&turns) {
            Ok(Self(turns as u8))
        } else {
            Err(ModelError::BadRotation(turns))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for QuarterTurns {
    type Error = ModelError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<QuarterTurns> for u8 {
    fn from(q: QuarterTurns) -> u8 {
        q.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoMetadata {
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub capture_time: Option<DateTime<Utc>>,
    #[serde(default)]
    pub depth_meters: Option<f64>,
    #[serde(default)]
    pub species_tags: BTreeSet<String>,
    #[serde(default)]
    pub behavior_tags: BTreeSet<String>,
    #[serde(default)]
    pub rotation_quarter_turns: QuarterTurns,
}

/// One row of the catalog (line-delimited JSON on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub video_id: String,
    pub source_uri: String,
    pub fps: f64,
    pub frame_count: u64,
    #[serde(default)]
    pub metadata: VideoMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub timestamp_s: f64,
    /// Laplacian variance; filled in by blur filtering.
    pub sharpness: f64,
    #[serde(default)]
    pub embedding: Option<EmbeddingVector>,
}

impl FrameRecord {
    pub fn new(video_id: impl Into<String>, frame_index: u64, fps: f64) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            timestamp_s: frame_index as f64 / fps,
            sharpness: 0.0,
            embedding: None,
        }
    }
}

/// A run of near-duplicate frames collapsed into one vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGroup {
    pub segment_id: String,
    pub video_id: String,
    pub start_frame: u64,
    /// Inclusive.
    pub end_frame: u64,
    pub representative: EmbeddingVector,
    pub member_count: u64,
}

impl SegmentGroup {
    pub fn to_ref(&self) -> SegmentRef {
        SegmentRef {
            segment_id: self.segment_id.clone(),
            video_id: self.video_id.clone(),
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            member_count: self.member_count,
        }
    }
}

/// A segment without its vector; what search results carry around.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment_id: String,
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub member_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub video_id: String,
    pub score: f32,
    pub best_segment: SegmentRef,
    pub best_timestamp_s: f64,
    pub rank: u32,
}

/// A single invariant breach found by [`validate_catalog`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateVideoId {
        video_id: String,
    },
    InvalidFps {
        video_id: String,
        fps: f64,
    },
    UnknownVideo {
        video_id: String,
        frame_index: u64,
    },
    DuplicateFrame {
        video_id: String,
        frame_index: u64,
    },
    TimestampMismatch {
        video_id: String,
        frame_index: u64,
        expected: f64,
        actual: f64,
    },
    FrameCountMismatch {
        video_id: String,
        declared: u64,
        observed: u64,
    },
    InvalidSharpness {
        video_id: String,
        frame_index: u64,
    },
    EmbeddingDimMismatch {
        video_id: String,
        frame_index: u64,
        expected: usize,
        actual: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVideoId { video_id } => {
                write!(f, "duplicate video_id {video_id:?}")
            }
            Violation::InvalidFps { video_id, fps } => {
                write!(f, "{video_id}: fps must be > 0, got {fps}")
            }
            Violation::UnknownVideo {
                video_id,
                frame_index,
            } => write!(
                f,
                "frame {frame_index} refers to unknown video {video_id:?}"
            ),
            Violation::DuplicateFrame {
                video_id,
                frame_index,
            } => write!(f, "{video_id}: frame {frame_index} appears more than once"),
            Violation::TimestampMismatch {
                video_id,
                frame_index,
                expected,
                actual,
            } => write!(
                f,
                "{video_id}: frame {frame_index} has timestamp {actual}, expected {expected}"
            ),
            Violation::FrameCountMismatch {
                video_id,
                declared,
                observed,
            } => write!(
                f,
                "{video_id}: frame_count is {declared} but {observed} frames were supplied"
            ),
            Violation::InvalidSharpness {
                video_id,
                frame_index,
            } => write!(f, "{video_id}: frame {frame_index} has negative sharpness"),
            Violation::EmbeddingDimMismatch {
                video_id,
                frame_index,
                expected,
                actual,
            } => write!(
                f,
                "{video_id}: frame {frame_index} embedding has dim {actual}, expected {expected}"
            ),
        }
    }
}

/// Checks the catalog and frame invariants. An empty report means the input
/// is consistent; violations are returned as data.
///
/// Frame counts are only compared for videos that have at least one frame
/// record in `frames`, so a catalog can be validated on its own.
pub fn validate_catalog(assets: &[VideoAsset], frames: &[FrameRecord]) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut by_id: HashMap<&str, &VideoAsset> = HashMap::new();

    for asset in assets {
        if by_id.insert(&asset.video_id, asset).is_some() {
            report.push(Violation::DuplicateVideoId {
                video_id: asset.video_id.clone(),
            });
        }
        if !(asset.fps.is_finite() && asset.fps > 0.0) {
            report.push(Violation::InvalidFps {
                video_id: asset.video_id.clone(),
                fps: asset.fps,
            });
        }
    }

    let mut seen: HashSet<(&str, u64)> = HashSet::new();
    let mut observed: HashMap<&str, u64> = HashMap::new();
    let mut embedding_dim: Option<usize> = None;

    for frame in frames {
        let Some(asset) = by_id.get(frame.video_id.as_str()) else {
            report.push(Violation::UnknownVideo {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
            });
            continue;
        };
        if !seen.insert((&frame.video_id, frame.frame_index)) {
            report.push(Violation::DuplicateFrame {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
            });
            continue;
        }
        *observed.entry(&frame.video_id).or_default() += 1;

        if asset.fps > 0.0 {
            let expected = frame.frame_index as f64 / asset.fps;
            if (frame.timestamp_s - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                report.push(Violation::TimestampMismatch {
                    video_id: frame.video_id.clone(),
                    frame_index: frame.frame_index,
                    expected,
                    actual: frame.timestamp_s,
                });
            }
        }
        if frame.sharpness.is_nan() || frame.sharpness < 0.0 {
            report.push(Violation::InvalidSharpness {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
            });
        }
        if let Some(emb) = &frame.embedding {
            let expected = *embedding_dim.get_or_insert(emb.dim());
            if emb.dim() != expected {
                report.push(Violation::EmbeddingDimMismatch {
                    video_id: frame.video_id.clone(),
                    frame_index: frame.frame_index,
                    expected,
                    actual: emb.dim(),
                });
            }
        }
    }

    for asset in assets {
        if let Some(&count) = observed.get(asset.video_id.as_str()) {
            if count != asset.frame_count {
                report.push(Violation::FrameCountMismatch {
                    video_id: asset.video_id.clone(),
                    declared: asset.frame_count,
                    observed: count,
                });
            }
        }
    }

    report
}

//! The indexing pipeline for one video: blur filter, orientation fix,
//! embedding and grouping. Insertion is a separate step so callers can
//! hold their index lock only for the final batch insert.

use thiserror::Error;

use crate::embedding::{EmbedError, Embedder};
use crate::image::GrayImage;
use crate::index::{IndexError, VectorIndex};
use crate::model::{validate_catalog, FrameRecord, SegmentGroup, VideoAsset, Violation};
use crate::preprocess::{
    filter_blurry, group_similar, normalize_orientation, DropLogEntry, PreprocessConfig,
    PreprocessError,
};

/// Frames per embedder call.
const EMBED_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("video {0} has no frames")]
    NoFrames(String),
    #[error("invalid input: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn join(vs: &[Violation]) -> String {
    vs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preprocessing,
    Embedding,
}

#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub asset: VideoAsset,
    pub frames_in: usize,
    pub dropped: Vec<DropLogEntry>,
    pub groups: Vec<SegmentGroup>,
}

/// Runs every stage up to (not including) insertion. `frames` are in frame
/// order as recorded; `on_stage` is called when each stage starts.
pub fn prepare_video(
    asset: &VideoAsset,
    frames: Vec<GrayImage>,
    embedder: &Embedder,
    cfg: &PreprocessConfig,
    mut on_stage: impl FnMut(Stage),
) -> Result<PreparedVideo, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames(asset.video_id.clone()));
    }
    cfg.validate()?;
    on_stage(Stage::Preprocessing);
    let records: Vec<FrameRecord> = (0..frames.len() as u64)
        .map(|i| FrameRecord::new(&asset.video_id, i, asset.fps))
        .collect();
    let violations = validate_catalog(std::slice::from_ref(asset), &records);
    if !violations.is_empty() {
        return Err(PipelineError::Invalid(violations));
    }
    let frames_in = frames.len();
    let outcome = filter_blurry(records.into_iter().zip(frames).collect(), cfg);
    let (mut kept, upright): (Vec<FrameRecord>, Vec<GrayImage>) = outcome
        .kept
        .into_iter()
        .map(|(rec, img)| {
            let img = normalize_orientation(&img, &asset.metadata);
            (rec, img)
        })
        .unzip();

    on_stage(Stage::Embedding);
    let mut vectors = Vec::with_capacity(upright.len());
    for batch in upright.chunks(EMBED_BATCH) {
        vectors.extend(embedder.embed_frames(batch)?);
    }
    for (rec, v) in kept.iter_mut().zip(vectors) {
        rec.embedding = Some(v);
    }
    let groups = group_similar(&kept, cfg)?;
    Ok(PreparedVideo {
        asset: asset.clone(),
        frames_in,
        dropped: outcome.dropped,
        groups,
    })
}

/// Inserts all groups or none: dimensions are checked before the first
/// insert. Returns the new entry ids.
pub fn insert_prepared(
    index: &mut VectorIndex,
    video: &PreparedVideo,
) -> Result<Vec<u64>, IndexError> {
    if let Some(g) = video
        .groups
        .iter()
        .find(|g| g.representative.dim() != index.dim())
    {
        return Err(IndexError::DimMismatch {
            expected: index.dim(),
            actual: g.representative.dim(),
        });
    }
    video
        .groups
        .iter()
        .map(|g| index.insert(g, video.asset.metadata.clone()))
        .collect()
}

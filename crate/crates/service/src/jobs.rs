//! Asynchronous ingest jobs. One worker drains the queue, so at most one
//! job holds the index writer role at a time.

use std::sync::Arc;

use mvrs_core::embedding::EmbedError;
use mvrs_core::pipeline::{insert_prepared, prepare_video, PipelineError, PreparedVideo, Stage};
use mvrs_core::{GrayImage, VideoAsset};
use serde::Serialize;
use tokio::sync::mpsc;

use crate::state::{write_frames, AppState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Preprocessing,
    Embedding,
    Indexed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobError {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestJob {
    pub job_id: String,
    pub video_id: String,
    pub state: JobState,
    pub frames_in: usize,
    pub frames_dropped_blurry: usize,
    pub segments: usize,
    pub error: Option<JobError>,
}

impl IngestJob {
    pub fn queued(job_id: String, video_id: String, frames_in: usize) -> Self {
        Self {
            job_id,
            video_id,
            state: JobState::Queued,
            frames_in,
            frames_dropped_blurry: 0,
            segments: 0,
            error: None,
        }
    }
}

pub(crate) struct QueuedIngest {
    pub job_id: String,
    pub asset: VideoAsset,
    pub frames: Vec<GrayImage>,
}

pub(crate) async fn run_worker(
    state: Arc<AppState>,
    mut rx: mpsc::UnboundedReceiver<QueuedIngest>,
) {
    while let Some(job) = rx.recv().await {
        let job_id = job.job_id.clone();
        let video_id = job.asset.video_id.clone();
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || process(&st, job)).await;
        let result = match outcome {
            Ok(r) => r,
            Err(e) => Err(JobError {
                code: "internal",
                message: format!("ingest task panicked: {e}"),
            }),
        };
        let mut jobs = state.lock_jobs();
        jobs.pending.remove(&video_id);
        if let Some(j) = jobs.by_id.get_mut(&job_id) {
            match result {
                Ok(p) => {
                    j.state = JobState::Indexed;
                    j.frames_dropped_blurry = p.dropped.len();
                    j.segments = p.groups.len();
                }
                Err(e) => {
                    log::warn!("ingest {job_id} for {video_id} failed: {}", e.message);
                    j.state = JobState::Failed;
                    j.error = Some(e);
                }
            }
        }
    }
}

fn set_state(state: &AppState, job_id: &str, s: JobState) {
    if let Some(j) = state.lock_jobs().by_id.get_mut(job_id) {
        j.state = s;
    }
}

fn process(state: &AppState, job: QueuedIngest) -> Result<PreparedVideo, JobError> {
    let QueuedIngest {
        job_id,
        asset,
        frames,
    } = job;
    let keep = state.cfg.retain_frames.then(|| frames.clone());
    let prepared = prepare_video(
        &asset,
        frames,
        &state.embedder,
        &state.cfg.preprocess,
        |stage| {
            let s = match stage {
                Stage::Preprocessing => JobState::Preprocessing,
                Stage::Embedding => JobState::Embedding,
            };
            set_state(state, &job_id, s);
        },
    )
    .map_err(pipeline_error)?;

    let dir = state.frames_dir(&asset.video_id);
    if let Some(frames) = keep {
        // stored upright so explain masks line up with what is displayed
        let upright: Vec<GrayImage> = frames
            .iter()
            .map(|f| mvrs_core::preprocess::normalize_orientation(f, &asset.metadata))
            .collect();
        write_frames(&dir, &upright).map_err(|e| JobError {
            code: "storage",
            message: format!("cannot store frames in {}: {e}", dir.display()),
        })?;
    }

    let mut store = state.write_store();
    let inserted = if store.catalog.contains_key(&asset.video_id) {
        Err(JobError {
            code: "conflict",
            message: format!("video {} is already indexed", asset.video_id),
        })
    } else {
        insert_prepared(&mut store.index, &prepared).map_err(|e| JobError {
            code: "index",
            message: e.to_string(),
        })
    };
    if let Err(e) = inserted {
        drop(store);
        if state.cfg.retain_frames {
            let _ = std::fs::remove_dir_all(&dir);
        }
        return Err(e);
    }
    store.catalog.insert(asset.video_id.clone(), asset);
    drop(store);

    let store = state.read_store();
    if let Err(e) = state.persist(&store) {
        // the in-memory index is already updated and keeps serving
        log::error!("cannot persist index after {job_id}: {e}");
    }
    Ok(prepared)
}

fn pipeline_error(e: PipelineError) -> JobError {
    let code = match &e {
        PipelineError::Embed(EmbedError::ProviderUnavailable { .. }) => "embedder_unavailable",
        PipelineError::Embed(_) => "embedder_error",
        PipelineError::NoFrames(_) | PipelineError::Invalid(_) | PipelineError::Preprocess(_) => {
            "invalid_input"
        }
    };
    JobError {
        code,
        message: e.to_string(),
    }
}

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use chrono::{DateTime, Utc};
use mvrs_core::refseg::{
    chunk_frames, explain_chunk, ArtifactFrame, ChunkOutput, SegError, DEFAULT_CHUNK,
};
use mvrs_core::{Engine, GrayImage, MetadataFilter, QueryRequest, VideoAsset};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::ApiError;
use crate::jobs::{IngestJob, QueuedIngest};
use crate::state::{frame_file, read_frames, valid_video_id, AppState};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let mut router = Router::new()
        .route("/api/health", get(health))
        .route("/api/ingest", post(ingest))
        .route("/api/jobs/{id}", get(job))
        .route("/api/search", get(search))
        .route("/api/explain", post(explain))
        .route("/api/videos/{id}", get(video))
        .route("/api/videos/{id}/frames/{n}", get(frame_png))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed",
            )
        })
        .layer(DefaultBodyLimit::max(state.cfg.max_upload_bytes));

    let origins = &state.cfg.cors_allowed_origins;
    if !origins.is_empty() {
        let allow = if origins.iter().any(|o| o == "*") {
            AllowOrigin::from(Any)
        } else {
            AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
        };
        router = router.layer(
            CorsLayer::new()
                .allow_origin(allow)
                .allow_methods(Any)
                .allow_headers(Any),
        );
    }
    router.with_state(state)
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    let store = st.read_store();
    Json(json!({
        "status": "ok",
        "index_entries": store.index.len(),
        "dim": store.index.dim(),
    }))
}

struct Upload {
    asset: Option<VideoAsset>,
    /// (file name, bytes) in arrival order
    frames: Vec<(String, Bytes)>,
}

async fn read_upload(mut mp: Multipart) -> ApiResult<Upload> {
    let mut up = Upload {
        asset: None,
        frames: Vec::new(),
    };
    let field_err = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_request"
        };
        ApiError::new(status, code, e.body_text())
    };
    while let Some(field) = mp.next_field().await.map_err(field_err)? {
        match field.name().unwrap_or_default() {
            "catalog" => {
                let text = field.text().await.map_err(field_err)?;
                let asset: VideoAsset = serde_json::from_str(&text)
                    .map_err(|e| ApiError::bad_request(format!("catalog entry: {e}")))?;
                up.asset = Some(asset);
            }
            "frames" | "frame" => {
                let name = field
                    .file_name()
                    .map(str::to_owned)
                    .unwrap_or_else(|| format!("#{}", up.frames.len()));
                let data = field.bytes().await.map_err(field_err)?;
                up.frames.push((name, data));
            }
            other => {
                return Err(ApiError::bad_request(format!(
                    "unexpected form field {other:?}"
                )));
            }
        }
    }
    Ok(up)
}

async fn ingest(
    State(st): State<Arc<AppState>>,
    mp: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult<Response> {
    let mp = mp.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut up = read_upload(mp).await?;
    let asset = up
        .asset
        .take()
        .ok_or_else(|| ApiError::bad_request("missing `catalog` field"))?;
    if !valid_video_id(&asset.video_id) {
        return Err(ApiError::bad_request(format!(
            "video_id {:?} must be non-empty and contain no path separators",
            asset.video_id
        )));
    }
    if up.frames.is_empty() {
        return Err(ApiError::bad_request(
            "at least one `frames` file is required",
        ));
    }
    // frame order follows file names when they are given
    up.frames.sort_by(|a, b| a.0.cmp(&b.0));
    let files = std::mem::take(&mut up.frames);
    let frames = tokio::task::spawn_blocking(move || {
        files
            .iter()
            .map(|(name, data)| {
                GrayImage::from_pgm(data)
                    .map_err(|e| ApiError::bad_request(format!("frame {name}: {e}")))
            })
            .collect::<ApiResult<Vec<_>>>()
    })
    .await??;

    let job_id = {
        let indexed = st.read_store().catalog.contains_key(&asset.video_id);
        let mut jobs = st.lock_jobs();
        if indexed || jobs.pending.contains(&asset.video_id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "conflict",
                format!("video {} already exists", asset.video_id),
            ));
        }
        let id = jobs.next_id();
        jobs.pending.insert(asset.video_id.clone());
        jobs.by_id.insert(
            id.clone(),
            IngestJob::queued(id.clone(), asset.video_id.clone(), frames.len()),
        );
        id
    };
    st.queue
        .send(QueuedIngest {
            job_id: job_id.clone(),
            asset,
            frames,
        })
        .map_err(|_| ApiError::internal("ingest worker has stopped"))?;
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id}))).into_response())
}

async fn job(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<IngestJob>> {
    st.lock_jobs()
        .by_id
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

fn parse_num<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    key: &str,
) -> ApiResult<Option<T>> {
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request(format!("`{key}` is not a valid number: {v:?}")))
        })
        .transpose()
}

fn parse_time(params: &HashMap<String, String>, key: &str) -> ApiResult<Option<DateTime<Utc>>> {
    params
        .get(key)
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_request(format!("`{key}` is not an RFC 3339 time: {e}")))
        })
        .transpose()
}

fn parse_tags(
    params: &HashMap<String, String>,
    key: &str,
) -> Option<std::collections::BTreeSet<String>> {
    params.get(key).map(|v| {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()
    })
}

/// Builds the metadata filter from query parameters. An open side of a
/// time or depth range is unbounded.
pub(crate) fn filter_from_params(params: &HashMap<String, String>) -> ApiResult<MetadataFilter> {
    let from = parse_time(params, "from")?;
    let to = parse_time(params, "to")?;
    let depth_min: Option<f64> = parse_num(params, "depth_min")?;
    let depth_max: Option<f64> = parse_num(params, "depth_max")?;
    let filter = MetadataFilter {
        location_equals: params.get("location").filter(|s| !s.is_empty()).cloned(),
        time_range: (from.is_some() || to.is_some()).then(|| {
            (
                from.unwrap_or(DateTime::<Utc>::MIN_UTC),
                to.unwrap_or(DateTime::<Utc>::MAX_UTC),
            )
        }),
        depth_range: (depth_min.is_some() || depth_max.is_some()).then(|| {
            (
                depth_min.unwrap_or(f64::NEG_INFINITY),
                depth_max.unwrap_or(f64::INFINITY),
            )
        }),
        species_any: parse_tags(params, "species"),
        behavior_any: parse_tags(params, "behavior"),
    };
    filter
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(filter)
}

async fn search(
    State(st): State<Arc<AppState>>,
    params: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let q = params
        .get("q")
        .filter(|q| !q.trim().is_empty())
        .cloned()
        .ok_or_else(|| ApiError::bad_request("query parameter `q` is required"))?;
    let k: usize = parse_num(&params, "k")?.unwrap_or(10);
    let filter = filter_from_params(&params)?;
    let req = QueryRequest {
        filter: (!filter.is_empty()).then_some(filter),
        ..QueryRequest::new(q, k)
    };

    let results = tokio::task::spawn_blocking(move || {
        let store = st.read_store();
        let engine = Engine {
            index: &store.index,
            embedder: &st.embedder,
            catalog: &store.catalog,
            mode: st.search_mode(),
        };
        engine.run_query(&req)
    })
    .await??;

    let results: Vec<Value> = results
        .into_iter()
        .map(|r| {
            json!({
                "video_id": r.video_id,
                "score": r.score,
                "rank": r.rank,
                "best_timestamp_s": r.best_timestamp_s,
                "segment_id": r.best_segment.segment_id,
            })
        })
        .collect();
    Ok(Json(json!({ "results": results })))
}

#[derive(Debug, Deserialize)]
struct ExplainRequest {
    video_id: String,
    query: String,
    chunk_size: Option<usize>,
}

fn seg_error(e: SegError) -> ApiError {
    match e {
        SegError::Predictor { .. } => ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "predictor_unavailable",
            e.to_string(),
        ),
        SegError::Argument(m) => ApiError::bad_request(m),
        other => ApiError::internal(other.to_string()),
    }
}

fn chunk_json(out: &ChunkOutput, first: bool) -> String {
    let mut s = String::new();
    for (i, (frame, mask)) in out.range.clone().zip(&out.masks).enumerate() {
        if !(first && i == 0) {
            s.push(',');
        }
        let entry = ArtifactFrame {
            frame_index: frame as u64,
            counts: mask.counts.clone(),
        };
        s.push_str(&serde_json::to_string(&entry).expect("plain struct serializes"));
    }
    s
}

/// Streams the mask artifact chunk by chunk. The first chunk is computed
/// before the response starts so predictor failures still get a status.
async fn explain(
    State(st): State<Arc<AppState>>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("`query` must be non-empty"));
    }
    let chunk = req.chunk_size.unwrap_or(st.cfg.chunk_size);
    if !(1..=DEFAULT_CHUNK).contains(&chunk) {
        return Err(ApiError::bad_request(format!(
            "chunk_size must be in 1..={DEFAULT_CHUNK}, got {chunk}"
        )));
    }
    if !st.read_store().catalog.contains_key(&req.video_id) {
        return Err(ApiError::not_found(format!("no video {}", req.video_id)));
    }
    let dir = st.frames_dir(&req.video_id);
    let frames = tokio::task::spawn_blocking(move || read_frames(&dir))
        .await?
        .map_err(|e| ApiError::internal(format!("cannot read stored frames: {e}")))?;
    if frames.is_empty() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "frames_not_retained",
            format!("frames of {} were not retained", req.video_id),
        ));
    }
    let ranges: Vec<Range<usize>> = chunk_frames(frames.len(), chunk).map_err(seg_error)?;
    let (h, w) = (frames[0].height(), frames[0].width());

    let predictor = st.predictor.clone();
    let frames = Arc::new(frames);
    let text = req.query.clone();
    let first = {
        let (p, f, t, r) = (
            predictor.clone(),
            frames.clone(),
            text.clone(),
            ranges[0].clone(),
        );
        tokio::task::spawn_blocking(move || explain_chunk(p.as_ref(), &f, r, &t))
            .await?
            .map_err(seg_error)?
    };

    let head = format!(
        "{{\"video_id\":{},\"text\":{},\"H\":{h},\"W\":{w},\"frames\":[",
        serde_json::to_string(&req.video_id).expect("string"),
        serde_json::to_string(&text).expect("string"),
    );
    let (tx, rx) = mpsc::channel::<Result<Bytes, std::io::Error>>(4);
    tokio::task::spawn_blocking(move || {
        let send = |s: String| tx.blocking_send(Ok(Bytes::from(s))).is_ok();
        let mut confidences = vec![first.confidence];
        if !send(head + &chunk_json(&first, true)) {
            return;
        }
        for r in ranges.into_iter().skip(1) {
            match explain_chunk(predictor.as_ref(), &frames, r, &text) {
                Ok(out) => {
                    confidences.push(out.confidence);
                    if !send(chunk_json(&out, false)) {
                        return;
                    }
                }
                Err(e) => {
                    log::error!("explain aborted mid-stream: {e}");
                    let _ = tx.blocking_send(Err(std::io::Error::other(e.to_string())));
                    return;
                }
            }
        }
        let tail = format!(
            "],\"confidences\":{}}}",
            serde_json::to_string(&confidences).expect("floats serialize")
        );
        send(tail);
    });

    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|item| (item, rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        Body::from_stream(stream),
    )
        .into_response())
}

async fn video(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let store = st.read_store();
    let asset = store
        .catalog
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no video {id}")))?;
    let segments: Vec<Value> = store
        .index
        .segments_of(&id)
        .into_iter()
        .map(|(entry_id, s)| {
            json!({
                "entry_id": entry_id,
                "segment_id": s.segment_id,
                "start_frame": s.start_frame,
                "end_frame": s.end_frame,
                "member_count": s.member_count,
            })
        })
        .collect();
    let retained = frame_file(&st.frames_dir(&id), 0).exists();
    Ok(Json(json!({
        "video": asset,
        "segments": segments,
        "frames_retained": retained,
    })))
}

/// A retained frame as PNG, for thumbnails and overlays in a browser.
async fn frame_png(
    State(st): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
) -> ApiResult<Response> {
    if !st.read_store().catalog.contains_key(&id) {
        return Err(ApiError::not_found(format!("no video {id}")));
    }
    let path = frame_file(&st.frames_dir(&id), n);
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        if !path.exists() {
            return Err(ApiError::not_found(format!("no stored frame {n}")));
        }
        let img = GrayImage::read_pgm(&path).map_err(|e| ApiError::internal(e.to_string()))?;
        let buf = image::GrayImage::from_raw(
            img.width() as u32,
            img.height() as u32,
            img.pixels().to_vec(),
        )
        .ok_or_else(|| ApiError::internal("frame buffer size mismatch"))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(out.into_inner())
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

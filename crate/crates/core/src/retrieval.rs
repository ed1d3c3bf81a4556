//! Query path: text → embedding → segment hits → ranked videos.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder};
use crate::index::{AnnParams, IndexError, MetadataFilter, SearchHit, VectorIndex};
use crate::model::{QueryResult, VideoAsset};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("invalid query: {0}")]
    Argument(String),
    #[error("hit refers to video {0:?} which is not in the catalog")]
    UnknownVideo(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryRequest {
    pub text: String,
    pub k_videos: usize,
    pub filter: Option<MetadataFilter>,
    /// Segment hits fetched per requested video, so that `k_videos`
    /// distinct videos survive when several hits share a video.
    pub candidate_multiplier: usize,
}

impl Default for QueryRequest {
    fn default() -> Self {
        Self {
            text: String::new(),
            k_videos: 10,
            filter: None,
            candidate_multiplier: 8,
        }
    }
}

impl QueryRequest {
    pub fn new(text: impl Into<String>, k_videos: usize) -> Self {
        Self {
            text: text.into(),
            k_videos,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Exact,
    Ann(AnnParams),
}

/// Borrowed view of everything a query needs.
pub struct Engine<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a Embedder,
    pub catalog: &'a HashMap<String, VideoAsset>,
    pub mode: SearchMode,
}

/// Max-pools segment scores per video. Ties in score are ordered by
/// `video_id`; the best timestamp is the start of the argmax segment.
pub fn aggregate_video_scores(
    hits: &[SearchHit],
    fps_of: impl Fn(&str) -> Option<f64>,
) -> Result<Vec<QueryResult>, RetrievalError> {
    let mut best: HashMap<&str, &SearchHit> = HashMap::new();
    for hit in hits {
        best.entry(hit.segment.video_id.as_str())
            .and_modify(|cur| {
                let better = hit.score > cur.score
                    || (hit.score == cur.score && hit.entry_id < cur.entry_id);
                if better {
                    *cur = hit;
                }
            })
            .or_insert(hit);
    }
    let mut ranked: Vec<&SearchHit> = best.into_values().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.segment.video_id.cmp(&b.segment.video_id))
    });
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, hit)| {
            let vid = &hit.segment.video_id;
            let fps = fps_of(vid).ok_or_else(|| RetrievalError::UnknownVideo(vid.clone()))?;
            Ok(QueryResult {
                video_id: vid.clone(),
                score: hit.score,
                best_segment: hit.segment.clone(),
                best_timestamp_s: hit.segment.start_frame as f64 / fps,
                rank: i as u32 + 1,
            })
        })
        .collect()
}

impl Engine<'_> {
    /// Segment-level hits before aggregation.
    pub fn segment_hits(&self, req: &QueryRequest) -> Result<Vec<SearchHit>, RetrievalError> {
        if req.candidate_multiplier == 0 {
            return Err(RetrievalError::Argument(
                "candidate_multiplier must be at least 1".into(),
            ));
        }
        let query = self.embedder.embed_text(&req.text)?;
        let k = req.k_videos.saturating_mul(req.candidate_multiplier);
        let filter = req.filter.as_ref();
        Ok(match self.mode {
            SearchMode::Exact => self.index.search_exact(&query, k, filter)?,
            SearchMode::Ann(params) => {
                let params = AnnParams {
                    ef_search: params.ef_search.max(k),
                    ..params
                };
                self.index.search_ann(&query, k, filter, &params)?
            }
        })
    }

    pub fn run_query(&self, req: &QueryRequest) -> Result<Vec<QueryResult>, RetrievalError> {
        let hits = self.segment_hits(req)?;
        let mut results = aggregate_video_scores(&hits, |v| self.catalog.get(v).map(|a| a.fps))?;
        results.truncate(req.k_videos);
        Ok(results)
    }
}

/// Convenience wrapper for [`Engine::run_query`].
pub fn run_query(
    engine: &Engine<'_>,
    req: &QueryRequest,
) -> Result<Vec<QueryResult>, RetrievalError> {
    engine.run_query(req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SegmentRef;

    fn hit(entry_id: u64, video: &str, start: u64, score: f32) -> SearchHit {
        SearchHit {
            entry_id,
            score,
            segment: SegmentRef {
                segment_id: format!("{video}/{start}"),
                video_id: video.into(),
                start_frame: start,
                end_frame: start,
                member_count: 1,
            },
        }
    }

    #[test]
    fn max_pool_per_video() {
        let hits = vec![
            hit(0, "v1", 10, 0.9),
            hit(2, "v2", 0, 0.7),
            hit(1, "v1", 50, 0.4),
        ];
        let res = aggregate_video_scores(&hits, |_| Some(10.0)).unwrap();
        assert_eq!(res.len(), 2);
        assert_eq!(
            (res[0].video_id.as_str(), res[0].score, res[0].rank),
            ("v1", 0.9, 1)
        );
        assert_eq!(res[0].best_timestamp_s, 1.0);
        assert_eq!(
            (res[1].video_id.as_str(), res[1].score, res[1].rank),
            ("v2", 0.7, 2)
        );
    }

    #[test]
    fn empty_and_ties() {
        assert!(aggregate_video_scores(&[], |_| Some(1.0))
            .unwrap()
            .is_empty());
        let hits = vec![hit(0, "zeta", 0, 0.5), hit(1, "alpha", 0, 0.5)];
        let res = aggregate_video_scores(&hits, |_| Some(1.0)).unwrap();
        assert_eq!(res[0].video_id, "alpha");
        assert_eq!(res[1].video_id, "zeta");
    }

    #[test]
    fn unknown_video_is_error() {
        let hits = vec![hit(0, "ghost", 0, 0.5)];
        assert!(matches!(
            aggregate_video_scores(&hits, |_| None),
            Err(RetrievalError::UnknownVideo(_))
        ));
    }
}

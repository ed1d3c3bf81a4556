//! In-memory vector index over segment representatives with metadata
//! pre-filtering, exact and graph-based approximate top-k search, and a
//! binary on-disk format (see [`persist`]).
//!
//! The index has no internal locking. Shared use follows the usual
//! reader-writer rule (`&VectorIndex` for searches, `&mut` for inserts), so
//! wrapping it in an `RwLock` gives every search a consistent snapshot.

mod filter;
mod hnsw;
pub mod persist;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingVector, SegmentGroup, SegmentRef, VideoMetadata};

pub use filter::MetadataFilter;
use hnsw::Hnsw;

/// Below this many eligible entries a filtered ANN query scans them directly.
const FILTERED_SCAN_CUTOFF: usize = 1024;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: index has dim {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("index is sealed for writing")]
    Sealed,
    #[error("corrupt index at byte offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("corrupt metadata sidecar line {line}: {reason}")]
    CorruptSidecar { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnParams {
    /// Max neighbours per node on upper layers; layer 0 allows twice this.
    pub graph_degree: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            graph_degree: 16,
            ef_construction: 200,
            ef_search: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entry_id: u64,
    pub segment: SegmentRef,
    pub vector: EmbeddingVector,
    pub metadata: VideoMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: u64,
    pub score: f32,
    pub segment: SegmentRef,
}

/// Dot product accumulated in f64, rounded once to f32.
///
/// Products of f32 values are exact in f64, so the result is independent of
/// summation order for all practical inputs.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (x, y) in chunks_a.zip(chunks_b) {
        for l in 0..8 {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += f64::from(*x) * f64::from(*y);
    }
    s as f32
}

/// Cosine similarity of unit vectors: their dot product clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f32, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(dot(a.values(), b.values()).clamp(-1.0, 1.0))
}

/// Score descending, then entry id ascending.
pub(crate) fn hit_order(a: &(f32, u64), b: &(f32, u64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

#[derive(Debug, Clone)]
struct EntryInfo {
    segment: SegmentRef,
    metadata: VideoMetadata,
}

pub struct VectorIndex {
    dim: usize,
    params: AnnParams,
    /// Row-major `len × dim`.
    vectors: Vec<f32>,
    entries: Vec<EntryInfo>,
    /// `None` for a flat index, which answers ANN queries by full scan.
    graph: Option<Hnsw>,
    sealed: bool,
}

impl std::fmt::Debug for VectorIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorIndex")
            .field("dim", &self.dim)
            .field("len", &self.entries.len())
            .field("params", &self.params)
            .field("sealed", &self.sealed)
            .finish()
    }
}

impl VectorIndex {
    pub fn new(dim: usize, params: AnnParams) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::Argument("dim must be at least 1".into()));
        }
        if params.graph_degree < 2 || params.ef_construction == 0 {
            return Err(IndexError::Argument(
                "graph_degree must be >= 2 and ef_construction >= 1".into(),
            ));
        }
        Ok(Self {
            dim,
            params,
            vectors: Vec::new(),
            entries: Vec::new(),
            graph: Some(Hnsw::new(params.graph_degree, params.ef_construction)),
            sealed: false,
        })
    }

    /// An index without the search graph: inserts are cheap and
    /// [`Self::search_ann`] degrades to [`Self::search_exact`].
    pub fn flat(dim: usize) -> Result<Self, IndexError> {
        let mut idx = Self::new(dim, AnnParams::default())?;
        idx.graph = None;
        Ok(idx)
    }

    pub fn is_flat(&self) -> bool {
        self.graph.is_none()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    /// Rejects every further insert.
    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn vector(&self, entry_id: u64) -> Option<&[f32]> {
        let i = usize::try_from(entry_id).ok()?;
        (i < self.entries.len()).then(|| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn entry(&self, entry_id: u64) -> Option<IndexEntry> {
        let info = self.entries.get(usize::try_from(entry_id).ok()?)?;
        Some(IndexEntry {
            entry_id,
            segment: info.segment.clone(),
            vector: EmbeddingVector::from_trusted(self.vector(entry_id)?.to_vec()),
            metadata: info.metadata.clone(),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = IndexEntry> + '_ {
        (0..self.len() as u64).filter_map(|id| self.entry(id))
    }

    /// Segments belonging to one video, in entry order.
    pub fn segments_of(&self, video_id: &str) -> Vec<(u64, SegmentRef)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.segment.video_id == video_id)
            .map(|(i, e)| (i as u64, e.segment.clone()))
            .collect()
    }

    pub fn insert(
        &mut self,
        segment: &SegmentGroup,
        metadata: VideoMetadata,
    ) -> Result<u64, IndexError> {
        if self.sealed {
            return Err(IndexError::Sealed);
        }
        let v = &segment.representative;
        if v.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        Ok(self.push_unchecked(v.values(), segment.to_ref(), metadata))
    }

    fn push_unchecked(
        &mut self,
        values: &[f32],
        segment: SegmentRef,
        metadata: VideoMetadata,
    ) -> u64 {
        let id = self.entries.len() as u64;
        self.vectors.extend_from_slice(values);
        self.entries.push(EntryInfo { segment, metadata });
        if let Some(g) = &mut self.graph {
            g.insert(id as u32, &self.vectors, self.dim);
        }
        id
    }

    fn check_query(
        &self,
        query: &EmbeddingVector,
        filter: Option<&MetadataFilter>,
    ) -> Result<(), IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if let Some(f) = filter {
            f.validate()?;
        }
        Ok(())
    }

    #[inline]
    fn score(&self, query: &[f32], id: usize) -> f32 {
        dot(query, &self.vectors[id * self.dim..(id + 1) * self.dim]).clamp(-1.0, 1.0)
    }

    fn eligible(&self, id: usize, filter: Option<&MetadataFilter>) -> bool {
        filter.is_none_or(|f| f.matches(&self.entries[id].metadata))
    }

    fn to_hits(&self, mut scored: Vec<(f32, u64)>, k: usize) -> Vec<SearchHit> {
        if scored.len() > k {
            if k == 0 {
                return Vec::new();
            }
            scored.select_nth_unstable_by(k - 1, hit_order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(hit_order);
        scored
            .into_iter()
            .map(|(score, entry_id)| SearchHit {
                entry_id,
                score,
                segment: self.entries[entry_id as usize].segment.clone(),
            })
            .collect()
    }

    fn scan(&self, query: &[f32], ids: impl Iterator<Item = usize>, k: usize) -> Vec<SearchHit> {
        let scored = ids.map(|i| (self.score(query, i), i as u64)).collect();
        self.to_hits(scored, k)
    }

    /// Full scan: the `min(k, eligible)` best entries passing the filter.
    pub fn search_exact(
        &self,
        query: &EmbeddingVector,
        k: usize,
        filter: Option<&MetadataFilter>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.check_query(query, filter)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let ids = (0..self.len()).filter(|&i| self.eligible(i, filter));
        Ok(self.scan(query.values(), ids, k))
    }

    /// Approximate top-k over the navigable small-world graph. Output has the
    /// same shape and ordering rules as [`Self::search_exact`].
    pub fn search_ann(
        &self,
        query: &EmbeddingVector,
        k: usize,
        filter: Option<&MetadataFilter>,
        params: &AnnParams,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.check_query(query, filter)?;
        if params.ef_search < k {
            return Err(IndexError::Argument(format!(
                "ef_search ({}) must be >= k ({k})",
                params.ef_search
            )));
        }
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let graph = match &self.graph {
            Some(g) if params.ef_search < self.len() => g,
            _ => return self.search_exact(query, k, filter),
        };
        let q = query.values();
        let found = match filter.filter(|f| !f.is_empty()) {
            None => graph.search(q, &self.vectors, self.dim, params.ef_search, |_| true),
            Some(f) => {
                let eligible: Vec<usize> = (0..self.len())
                    .filter(|&i| self.eligible(i, Some(f)))
                    .collect();
                if eligible.len() <= FILTERED_SCAN_CUTOFF.max(params.ef_search) {
                    return Ok(self.scan(q, eligible.into_iter(), k));
                }
                graph.search(q, &self.vectors, self.dim, params.ef_search, |id| {
                    self.eligible(id as usize, Some(f))
                })
            }
        };
        let scored = found
            .into_iter()
            .map(|id| (self.score(q, id as usize), u64::from(id)))
            .collect();
        Ok(self.to_hits(scored, k))
    }
}

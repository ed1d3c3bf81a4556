//! Shared server state and its on-disk layout under `data_dir`:
//!
//! ```text
//! index.mvrs, index.mvrs.meta.jsonl   vector index + sidecar
//! videos.jsonl                        catalog of indexed videos
//! frames/<video_id>/000000.pgm        retained upright frames
//! ```

use std::collections::{HashMap, HashSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use mvrs_core::catalog::{read_catalog, write_jsonl};
use mvrs_core::refseg::{MaskPredictor, StubPredictor};
use mvrs_core::{Embedder, GrayImage, SearchMode, VectorIndex, VideoAsset};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::config::{SearchKind, ServiceConfig};
use crate::jobs::{IngestJob, QueuedIngest};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("{0}")]
    Config(String),
    #[error("cannot use data_dir {path}: {source}")]
    DataDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot load index: {0}")]
    Index(#[from] mvrs_core::index::IndexError),
    #[error("cannot load catalog: {0}")]
    Catalog(#[from] mvrs_core::catalog::CatalogError),
}

/// Index and catalog change together under one lock, so a reader never
/// sees index entries for a video missing from the catalog.
pub struct Store {
    pub index: VectorIndex,
    pub catalog: HashMap<String, VideoAsset>,
}

pub struct AppState {
    pub cfg: ServiceConfig,
    pub store: RwLock<Store>,
    pub embedder: Arc<Embedder>,
    pub predictor: Arc<dyn MaskPredictor>,
    pub jobs: Mutex<Jobs>,
    pub(crate) queue: mpsc::UnboundedSender<QueuedIngest>,
}

#[derive(Default)]
pub struct Jobs {
    pub by_id: HashMap<String, IngestJob>,
    /// Video ids of jobs not yet finished, to reject duplicates early.
    pub pending: HashSet<String>,
    next: u64,
}

impl Jobs {
    pub fn next_id(&mut self) -> String {
        self.next += 1;
        format!("job-{:06}", self.next)
    }
}

impl AppState {
    /// Opens (or creates) the data directory, loads any existing index and
    /// catalog, and starts the ingest worker on the current runtime.
    pub fn open(cfg: ServiceConfig) -> Result<Arc<Self>, StartupError> {
        let predictor = Arc::new(StubPredictor::new(cfg.embedder.dim));
        Self::open_with_predictor(cfg, predictor)
    }

    pub fn open_with_predictor(
        cfg: ServiceConfig,
        predictor: Arc<dyn MaskPredictor>,
    ) -> Result<Arc<Self>, StartupError> {
        cfg.validate()
            .map_err(|e| StartupError::Config(e.to_string()))?;
        let embedder =
            Embedder::new(cfg.embedder.clone()).map_err(|e| StartupError::Config(e.to_string()))?;
        std::fs::create_dir_all(&cfg.data_dir).map_err(|source| StartupError::DataDir {
            path: cfg.data_dir.display().to_string(),
            source,
        })?;

        let index_path = cfg.index_path();
        let index = if index_path.exists() {
            let idx = VectorIndex::load_with(&index_path, cfg.ann)?;
            if idx.dim() != cfg.embedder.dim {
                return Err(StartupError::Config(format!(
                    "index {} has dim {} but embedder.dim is {}",
                    index_path.display(),
                    idx.dim(),
                    cfg.embedder.dim
                )));
            }
            idx
        } else {
            VectorIndex::new(cfg.embedder.dim, cfg.ann)?
        };
        let catalog_path = catalog_path(&cfg.data_dir);
        let catalog = if catalog_path.exists() {
            let file =
                std::fs::File::open(&catalog_path).map_err(mvrs_core::catalog::CatalogError::Io)?;
            read_catalog(BufReader::new(file))?
                .into_iter()
                .map(|a| (a.video_id.clone(), a))
                .collect()
        } else {
            HashMap::new()
        };

        let (tx, rx) = mpsc::unbounded_channel();
        let state = Arc::new(Self {
            cfg,
            store: RwLock::new(Store { index, catalog }),
            embedder: Arc::new(embedder),
            predictor,
            jobs: Mutex::new(Jobs::default()),
            queue: tx,
        });
        tokio::spawn(crate::jobs::run_worker(state.clone(), rx));
        Ok(state)
    }

    pub fn search_mode(&self) -> SearchMode {
        match self.cfg.search {
            SearchKind::Exact => SearchMode::Exact,
            SearchKind::Ann => SearchMode::Ann(self.cfg.ann),
        }
    }

    pub fn frames_dir(&self, video_id: &str) -> PathBuf {
        self.cfg.data_dir.join("frames").join(video_id)
    }

    pub fn read_store(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write_store(&self) -> std::sync::RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn lock_jobs(&self) -> std::sync::MutexGuard<'_, Jobs> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Writes the index and catalog. Called with the store read-locked so
    /// the two files describe the same snapshot.
    pub fn persist(&self, store: &Store) -> std::io::Result<()> {
        store
            .index
            .save(&self.cfg.index_path())
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let mut assets: Vec<&VideoAsset> = store.catalog.values().collect();
        assets.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        let path = catalog_path(&self.cfg.data_dir);
        let tmp = path.with_extension("jsonl.tmp");
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &assets)?;
        std::fs::write(&tmp, buf)?;
        std::fs::rename(&tmp, &path)
    }
}

fn catalog_path(data_dir: &Path) -> PathBuf {
    data_dir.join("videos.jsonl")
}

pub fn frame_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.pgm"))
}

pub fn write_frames(dir: &Path, frames: &[GrayImage]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.write_pgm(&frame_file(dir, i))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(())
}

/// Loads `000000.pgm, 000001.pgm, ...` until the first gap.
pub fn read_frames(dir: &Path) -> std::io::Result<Vec<GrayImage>> {
    let mut out = Vec::new();
    loop {
        let path = frame_file(dir, out.len());
        if !path.exists() {
            return Ok(out);
        }
        out.push(GrayImage::read_pgm(&path).map_err(|e| std::io::Error::other(e.to_string()))?);
    }
}

/// Ids become directory names, so path syntax is rejected.
pub fn valid_video_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.len() <= 200
        && !id.chars().any(|c| c == '/' || c == '\\' || c.is_control())
}

//! Files written next to an index by `mvrs ingest`:
//!
//! ```text
//! <index>                 vector index
//! <index>.meta.jsonl      index sidecar
//! <index>.videos.jsonl    catalog rows, each with the frame directory used
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvrs_core::catalog::{read_jsonl, write_jsonl};
use mvrs_core::{AnnParams, GrayImage, VectorIndex, VideoAsset};
use mvrs_service::ServiceConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogRow {
    #[serde(flatten)]
    pub asset: VideoAsset,
    pub frames_dir: PathBuf,
}

pub fn catalog_path(index: &Path) -> PathBuf {
    let mut s = index.as_os_str().to_owned();
    s.push(".videos.jsonl");
    PathBuf::from(s)
}

pub struct Loaded {
    pub index: VectorIndex,
    pub rows: Vec<CatalogRow>,
}

impl Loaded {
    /// `ann: None` skips building the search graph for exact-only use.
    pub fn open(index_path: &Path, ann: Option<AnnParams>) -> Result<Self> {
        let index = match ann {
            Some(p) => VectorIndex::load_with(index_path, p),
            None => VectorIndex::load_flat(index_path),
        }
        .with_context(|| format!("cannot open index {}", index_path.display()))?;
        let path = catalog_path(index_path);
        let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        let rows =
            read_jsonl(BufReader::new(file)).with_context(|| format!("in {}", path.display()))?;
        Ok(Self { index, rows })
    }

    pub fn catalog(&self) -> HashMap<String, VideoAsset> {
        self.rows
            .iter()
            .map(|r| (r.asset.video_id.clone(), r.asset.clone()))
            .collect()
    }

    pub fn save(&self, index_path: &Path) -> Result<()> {
        self.index
            .save(index_path)
            .with_context(|| format!("cannot write index {}", index_path.display()))?;
        let path = catalog_path(index_path);
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
        );
        write_jsonl(&mut w, &self.rows)?;
        w.flush()?;
        Ok(())
    }
}

/// `--config` is the server's TOML file; only its embedder, preprocess and
/// ann sections matter to the offline commands.
pub fn settings(config: Option<&Path>) -> Result<ServiceConfig> {
    match config {
        Some(p) => Ok(ServiceConfig::load(p)?),
        None => Ok(ServiceConfig::default()),
    }
}

/// `*.pgm` files in `dir`, sorted by file name.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<GrayImage>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read frame directory {}", dir.display()))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
            paths.push(p);
        }
    }
    if paths.is_empty() {
        bail!("no .pgm frames in {}", dir.display());
    }
    paths.sort();
    paths
        .iter()
        .map(|p| GrayImage::read_pgm(p).with_context(|| format!("frame {}", p.display())))
        .collect()
}

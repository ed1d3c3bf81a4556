//! On-disk index format (all integers little-endian):
//!
//! ```text
//! "MVRS" | version: u16 = 1 | dim: u32 | count: u64
//! count × dim × f32                       vectors, entry order
//! count × { entry_id: u64,
//!           segment_id: u32 len + UTF-8,
//!           video_id:   u32 len + UTF-8 }  entry table
//! ```
//!
//! Segment extents and metadata live in a sidecar at `<path>.meta.jsonl`,
//! one JSON object per entry keyed by `entry_id`. The ANN graph is not
//! stored; it is rebuilt deterministically on load.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{SegmentRef, VideoMetadata};

use super::{AnnParams, IndexError, VectorIndex};

pub const MAGIC: &[u8; 4] = b"MVRS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct SidecarLine {
    entry_id: u64,
    start_frame: u64,
    end_frame: u64,
    member_count: u64,
    metadata: VideoMetadata,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_parts(path: &Path) -> Result<(Vec<u8>, String), IndexError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let side_path = sidecar_path(path);
    let sidecar = std::fs::read_to_string(&side_path).map_err(io_err(&side_path))?;
    Ok((bytes, sidecar))
}

/// Writes to a temporary sibling and renames over the target.
fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), IndexError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io_err(&tmp))?;
    w.into_inner()
        .map_err(|e| io_err(&tmp)(e.into_error()))?
        .sync_all()
        .map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u32::try_from(s.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "string too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

impl VectorIndex {
    /// The index bytes (without the sidecar).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.vectors.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (i, e) in self.entries.iter().enumerate() {
            out.extend_from_slice(&(i as u64).to_le_bytes());
            put_str(&mut out, &e.segment.segment_id).expect("writing to a Vec");
            put_str(&mut out, &e.segment.video_id).expect("writing to a Vec");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let bytes = self.to_bytes();
        write_atomic(path, |w| w.write_all(&bytes))?;
        write_atomic(&sidecar_path(path), |w| {
            for (i, e) in self.entries.iter().enumerate() {
                let line = SidecarLine {
                    entry_id: i as u64,
                    start_frame: e.segment.start_frame,
                    end_frame: e.segment.end_frame,
                    member_count: e.segment.member_count,
                    metadata: e.metadata.clone(),
                };
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::load_with(path, AnnParams::default())
    }

    pub fn load_with(path: &Path, params: AnnParams) -> Result<Self, IndexError> {
        let (bytes, sidecar) = read_parts(path)?;
        Self::from_parts(&bytes, &sidecar, params)
    }

    /// Loads without building the search graph; see [`VectorIndex::flat`].
    pub fn load_flat(path: &Path) -> Result<Self, IndexError> {
        let (bytes, sidecar) = read_parts(path)?;
        Self::parse(&bytes, &sidecar, None)
    }

    /// Parses index bytes and sidecar text.
    pub fn from_parts(bytes: &[u8], sidecar: &str, params: AnnParams) -> Result<Self, IndexError> {
        Self::parse(bytes, sidecar, Some(params))
    }

    fn parse(bytes: &[u8], sidecar: &str, params: Option<AnnParams>) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(IndexError::Corrupt {
                offset: 0,
                reason: format!("bad magic {magic:?}"),
            });
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(IndexError::Corrupt {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let dim = u32::from_le_bytes(r.array("dim")?) as usize;
        if dim == 0 {
            return Err(IndexError::Corrupt {
                offset: 6,
                reason: "dim is zero".into(),
            });
        }
        let count = u64::from_le_bytes(r.array("entry count")?);
        let floats = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .filter(|f| f.checked_mul(4).is_some())
            .ok_or(IndexError::Corrupt {
                offset: 10,
                reason: format!("entry count {count} is implausible"),
            })?;
        let block = r.take(floats * 4, "vector block")?;
        let vectors: Vec<f32> = block
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let mut table = Vec::with_capacity(count as usize);
        for i in 0..count {
            let at = r.pos as u64;
            let id = u64::from_le_bytes(r.array("entry id")?);
            if id != i {
                return Err(IndexError::Corrupt {
                    offset: at,
                    reason: format!("entry id {id} out of sequence (expected {i})"),
                });
            }
            let segment_id = r.string("segment id")?;
            let video_id = r.string("video id")?;
            table.push((segment_id, video_id));
        }
        if r.pos != bytes.len() {
            return Err(IndexError::Corrupt {
                offset: r.pos as u64,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }

        let mut lines = Vec::with_capacity(table.len());
        for (n, line) in sidecar.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SidecarLine =
                serde_json::from_str(line).map_err(|e| IndexError::CorruptSidecar {
                    line: n + 1,
                    reason: e.to_string(),
                })?;
            if parsed.entry_id != lines.len() as u64 {
                return Err(IndexError::CorruptSidecar {
                    line: n + 1,
                    reason: format!(
                        "entry_id {} out of sequence (expected {})",
                        parsed.entry_id,
                        lines.len()
                    ),
                });
            }
            lines.push(parsed);
        }
        if lines.len() != table.len() {
            return Err(IndexError::CorruptSidecar {
                line: lines.len() + 1,
                reason: format!("{} sidecar rows for {} entries", lines.len(), table.len()),
            });
        }

        let mut index = match params {
            Some(p) => VectorIndex::new(dim, p)?,
            None => VectorIndex::flat(dim)?,
        };
        for (i, ((segment_id, video_id), side)) in table.into_iter().zip(lines).enumerate() {
            let segment = SegmentRef {
                segment_id,
                video_id,
                start_frame: side.start_frame,
                end_frame: side.end_frame,
                member_count: side.member_count,
            };
            index.push_unchecked(&vectors[i * dim..(i + 1) * dim], segment, side.metadata);
        }
        Ok(index)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(IndexError::Corrupt {
                offset: self.bytes.len() as u64,
                reason: format!(
                    "truncated {what}: needs {n} bytes from offset {}, file ends at {}",
                    self.pos,
                    self.bytes.len()
                ),
            }),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], IndexError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn string(&mut self, what: &str) -> Result<String, IndexError> {
        let at = self.pos as u64;
        let len = u32::from_le_bytes(self.array(what)?) as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IndexError::Corrupt {
            offset: at,
            reason: format!("{what} is not valid UTF-8"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::unit_normalize;
    use crate::index::tests::seg;

    fn sample() -> VectorIndex {
        let mut idx = VectorIndex::new(3, AnnParams::default()).unwrap();
        let meta = VideoMetadata {
            location: Some("HK".into()),
            depth_meters: Some(4.0),
            ..Default::default()
        };
        idx.insert(&seg("a", 0, &[1.0, 2.0, 3.0]), meta.clone())
            .unwrap();
        idx.insert(&seg("a", 7, &[-1.0, 0.5, 0.0]), meta).unwrap();
        idx.insert(&seg("b", 0, &[0.2, 0.2, -0.9]), VideoMetadata::default())
            .unwrap();
        idx
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"MVRS");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[10..18].try_into().unwrap()), 3);
        // first vector component
        let first = sample().vector(0).unwrap()[0];
        assert_eq!(f32::from_le_bytes(b[18..22].try_into().unwrap()), first);
    }

    #[test]
    fn round_trip_gives_identical_results() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.mvrs");
        let idx = sample();
        idx.save(&path).unwrap();
        let back = VectorIndex::load(&path).unwrap();
        assert_eq!(back.len(), 3);
        let q = unit_normalize(&[0.3, 0.1, 0.5]).unwrap();
        let a = idx.search_exact(&q, 3, None).unwrap();
        let b = back.search_exact(&q, 3, None).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.score.to_bits(), y.score.to_bits());
        }
        assert_eq!(
            back.entry(1).unwrap().metadata.location.as_deref(),
            Some("HK")
        );
        assert_eq!(back.entry(1).unwrap().segment.start_frame, 7);
    }

    #[test]
    fn wrong_magic_is_corrupt() {
        let mut b = sample().to_bytes();
        b[0] = b'X';
        let err = VectorIndex::from_parts(&b, "", AnnParams::default()).unwrap_err();
        assert!(matches!(err, IndexError::Corrupt { offset: 0, .. }));
    }

    #[test]
    fn truncated_vector_block_reports_offset() {
        let b = sample().to_bytes();
        // header (18) + 3×3 f32 = 54; cut in the middle of the block
        let cut = &b[..40];
        match VectorIndex::from_parts(cut, "", AnnParams::default()).unwrap_err() {
            IndexError::Corrupt { offset, reason } => {
                assert_eq!(offset, 40);
                assert!(reason.contains("vector block"), "{reason}");
                assert!(reason.contains("offset 18"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_mismatch_is_reported() {
        let b = sample().to_bytes();
        assert!(matches!(
            VectorIndex::from_parts(&b, "", AnnParams::default()),
            Err(IndexError::CorruptSidecar { .. })
        ));
    }
}

//! Hash-seeded embedder: FNV-1a over the input bytes seeds a splitmix64
//! stream, each output maps to [-1, 1), and the vector is unit-normalized.
//! Pure function of its input on every platform. It carries no semantics.

use crate::image::GrayImage;
use crate::model::EmbeddingVector;

use super::normalize_f64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Advances `state` and returns the next splitmix64 output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn embed_seed(&self, seed: u64) -> EmbeddingVector {
        let mut state = seed;
        let raw: Vec<f64> = (0..self.dim)
            .map(|_| {
                let u = splitmix64(&mut state) as f64 / 18_446_744_073_709_551_616.0;
                u * 2.0 - 1.0
            })
            .collect();
        // An all-zero draw needs every output to be exactly 2^63; not reachable.
        normalize_f64(&raw).expect("splitmix64 stream is never all 2^63")
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        self.embed_seed(fnv1a64(text.bytes()))
    }

    /// Seed covers the height and width (u64 little-endian) followed by the
    /// row-major pixel bytes.
    pub fn embed_frame(&self, img: &GrayImage) -> EmbeddingVector {
        let h = (img.height() as u64).to_le_bytes();
        let w = (img.width() as u64).to_le_bytes();
        let bytes = h.into_iter().chain(w).chain(img.pixels().iter().copied());
        self.embed_seed(fnv1a64(bytes))
    }
}

//! Run-length encoding of binary frames: row-major scan, alternating run
//! lengths that always start with a background run (0 when the first pixel
//! is foreground).

use serde::{Deserialize, Serialize};

use super::{BinaryMask, SegError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            counts: vec![(h * w) as u32],
        }
    }

    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| u64::from(c))
            .sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &b in &mask.bits {
        if b != current {
            counts.push(run);
            run = 0;
            current = b;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        h: mask.h,
        w: mask.w,
        counts,
    }
}

pub fn rle_decode(r: &RleMask) -> Result<BinaryMask, SegError> {
    let n = r.h * r.w;
    if n == 0 {
        return Err(SegError::Format(format!(
            "mask dims {}x{} are empty",
            r.h, r.w
        )));
    }
    let total: u64 = r.counts.iter().map(|&c| u64::from(c)).sum();
    if total != n as u64 {
        return Err(SegError::Format(format!(
            "run lengths sum to {total}, expected {n} for {}x{}",
            r.h, r.w
        )));
    }
    let mut bits = Vec::with_capacity(n);
    for (i, &c) in r.counts.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Ok(BinaryMask {
        h: r.h,
        w: r.w,
        bits,
    })
}

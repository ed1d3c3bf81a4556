//! Region (J, IoU) and contour (F) accuracy for mask sequences.

use super::{same_dims, BinaryMask, BinaryMaskVolume, Dims, SegError};

fn iou_bits(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union; 1.0 when both volumes are empty.
pub fn iou(a: &BinaryMaskVolume, b: &BinaryMaskVolume) -> Result<f64, SegError> {
    same_dims(a.dims(), b.dims())?;
    Ok(iou_bits(a.bits(), b.bits()))
}

fn frame_dims(m: &BinaryMask) -> Dims {
    Dims {
        t: 1,
        h: m.h,
        w: m.w,
    }
}

/// Conventional tolerance: `ceil(0.0075 · diagonal)` pixels.
pub fn default_boundary_radius(h: usize, w: usize) -> usize {
    (0.0075 * ((h * h + w * w) as f64).sqrt()).ceil() as usize
}

/// Foreground pixels touching background through a 4-neighbour or lying on
/// the image edge.
fn boundary(m: &BinaryMask) -> Vec<bool> {
    let (h, w) = (m.h, m.w);
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            if !m.get(r, c) {
                continue;
            }
            out[r * w + c] = r == 0
                || c == 0
                || r == h - 1
                || c == w - 1
                || !m.get(r - 1, c)
                || !m.get(r + 1, c)
                || !m.get(r, c - 1)
                || !m.get(r, c + 1);
        }
    }
    out
}

/// Summed-area table over a boolean map, `(h+1)×(w+1)`.
struct Integral {
    w1: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(map: &[bool], h: usize, w: usize) -> Self {
        let w1 = w + 1;
        let mut sums = vec![0u32; (h + 1) * w1];
        for r in 0..h {
            let mut row = 0u32;
            for c in 0..w {
                row += u32::from(map[r * w + c]);
                sums[(r + 1) * w1 + c + 1] = sums[r * w1 + c + 1] + row;
            }
        }
        Self { w1, sums }
    }

    /// Count in rows `r0..r1`, cols `c0..c1` (half-open).
    fn count(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> u32 {
        let s = |r: usize, c: usize| self.sums[r * self.w1 + c];
        s(r1, c1) + s(r0, c0) - s(r0, c1) - s(r1, c0)
    }
}

/// Fraction of `from` boundary pixels with a `to` boundary pixel within
/// Chebyshev distance `radius`.
fn matched_fraction(from: &[bool], to: &Integral, h: usize, w: usize, radius: usize) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for r in 0..h {
        for c in 0..w {
            if !from[r * w + c] {
                continue;
            }
            total += 1;
            let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
            let (c0, c1) = (c.saturating_sub(radius), (c + radius + 1).min(w));
            if to.count(r0, r1, c0, c1) > 0 {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

/// Boundary F-measure between two frames.
pub fn boundary_f(pred: &BinaryMask, gt: &BinaryMask, radius: usize) -> Result<f64, SegError> {
    same_dims(frame_dims(pred), frame_dims(gt))?;
    let (h, w) = (pred.h, pred.w);
    let pb = boundary(pred);
    let gb = boundary(gt);
    let (p_any, g_any) = (pb.contains(&true), gb.contains(&true));
    match (p_any, g_any) {
        (false, false) => return Ok(1.0),
        (false, true) | (true, false) => return Ok(0.0),
        _ => {}
    }
    let precision = matched_fraction(&pb, &Integral::new(&gb, h, w), h, w, radius);
    let recall = matched_fraction(&gb, &Integral::new(&pb, h, w), h, w, radius);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JandF {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

/// Mean per-frame IoU (J), mean per-frame boundary F, and their average.
pub fn j_and_f(preds: &[BinaryMask], gts: &[BinaryMask], radius: usize) -> Result<JandF, SegError> {
    if preds.len() != gts.len() {
        return Err(SegError::DimMismatch(format!(
            "{} predicted frames vs {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(SegError::Argument("no frames to evaluate".into()));
    }
    let mut j = 0.0;
    let mut f = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        same_dims(frame_dims(p), frame_dims(g))?;
        j += iou_bits(&p.bits, &g.bits);
        f += boundary_f(p, g, radius)?;
    }
    let n = preds.len() as f64;
    let (j, f) = (j / n, f / n);
    Ok(JandF {
        j,
        f,
        jf: (j + f) / 2.0,
    })
}

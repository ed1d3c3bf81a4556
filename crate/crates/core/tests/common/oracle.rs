//! Independent reference implementations used as test oracles. They are
//! written from the definitions and share no code with the library.

use mvrs_core::refseg::{
    BinaryMask, BinaryMaskVolume, PredictionCandidate, PredictionSet, SoftMaskVolume,
};
use mvrs_core::{EmbeddingVector, MetadataFilter, VideoMetadata};
use rand::Rng;

pub fn naive_score(a: &[f32], b: &[f32]) -> f32 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum();
    (s as f32).clamp(-1.0, 1.0)
}

pub fn oracle_passes(f: &MetadataFilter, m: &VideoMetadata) -> bool {
    let loc = f
        .location_equals
        .as_ref()
        .is_none_or(|l| m.location.as_deref() == Some(l.as_str()));
    let time = f
        .time_range
        .is_none_or(|(a, b)| m.capture_time.is_some_and(|t| a <= t && t <= b));
    let depth = f
        .depth_range
        .is_none_or(|(a, b)| m.depth_meters.is_some_and(|d| a <= d && d <= b));
    let species = f
        .species_any
        .as_ref()
        .is_none_or(|s| s.iter().any(|x| m.species_tags.contains(x)));
    let behavior = f
        .behavior_any
        .as_ref()
        .is_none_or(|s| s.iter().any(|x| m.behavior_tags.contains(x)));
    loc && time && depth && species && behavior
}

/// Brute force: score everything, keep what passes, sort, cut.
pub fn oracle_search(
    corpus: &[(EmbeddingVector, VideoMetadata)],
    q: &EmbeddingVector,
    k: usize,
    f: Option<&MetadataFilter>,
) -> Vec<(u64, f32)> {
    let mut all: Vec<(u64, f32)> = corpus
        .iter()
        .enumerate()
        .filter(|(_, (_, m))| f.is_none_or(|f| oracle_passes(f, m)))
        .map(|(i, (v, _))| (i as u64, naive_score(v.values(), q.values())))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// A random instance in plain nested vectors: per-candidate (confidence,
/// probabilities) plus the ground-truth bits and the volume shape.
pub struct Instance {
    pub shape: (usize, usize, usize),
    pub cands: Vec<(f64, Vec<f64>)>,
    pub gt: Vec<bool>,
}

impl Instance {
    pub fn random(rng: &mut impl Rng, max_n: usize, p_range: (f64, f64)) -> Self {
        let shape = (
            rng.gen_range(1..=2),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
        );
        let len = shape.0 * shape.1 * shape.2;
        let n = rng.gen_range(1..=max_n);
        let cands = (0..n)
            .map(|_| {
                let conf = rng.gen_range(p_range.0..=p_range.1);
                let probs = (0..len)
                    .map(|_| rng.gen_range(p_range.0..=p_range.1))
                    .collect();
                (conf, probs)
            })
            .collect();
        let fg = rng.gen_range(0.0..1.0);
        let gt = (0..len).map(|_| rng.gen_bool(fg)).collect();
        Self { shape, cands, gt }
    }

    pub fn set(&self) -> PredictionSet {
        let (t, h, w) = self.shape;
        PredictionSet::new(
            self.cands
                .iter()
                .map(|(c, p)| {
                    PredictionCandidate::new(*c, SoftMaskVolume::new(t, h, w, p.clone()).unwrap())
                        .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    pub fn gt(&self) -> BinaryMaskVolume {
        let (t, h, w) = self.shape;
        BinaryMaskVolume::new(t, h, w, self.gt.clone()).unwrap()
    }
}

/// Loss terms written straight from their definitions.
pub mod loss {
    use mvrs_core::refseg::LossWeights;

    pub fn ce(p: f64, y: bool, clamp: f64) -> f64 {
        let p = p.max(clamp).min(1.0 - clamp);
        if y {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    }

    pub fn mask_ce(p: &[f64], g: &[bool], clamp: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..p.len() {
            total += ce(p[i], g[i], clamp);
        }
        total / p.len() as f64
    }

    pub fn dice(p: &[f64], g: &[bool], eps: f64) -> f64 {
        let mut pg = 0.0;
        let mut ps = 0.0;
        let mut gs = 0.0;
        for i in 0..p.len() {
            let gi = if g[i] { 1.0 } else { 0.0 };
            pg += p[i] * gi;
            ps += p[i];
            gs += gi;
        }
        1.0 - (2.0 * pg + eps) / (ps + gs + eps)
    }

    pub fn cost(p: &[f64], g: &[bool], gm: f64, gd: f64, clamp: f64, eps: f64) -> f64 {
        gm * mask_ce(p, g, clamp) + gd * dice(p, g, eps)
    }

    /// Loss with the matched index given.
    pub fn loss_at(cands: &[(f64, Vec<f64>)], g: &[bool], m: usize, w: &LossWeights) -> f64 {
        let mut l = cost(
            &cands[m].1,
            g,
            w.gamma_mask,
            w.gamma_dice,
            w.prob_clamp,
            w.dice_epsilon,
        );
        for (j, (c, _)) in cands.iter().enumerate() {
            if j != m {
                l += w.gamma_cls * ce(*c, false, w.prob_clamp);
            }
        }
        l
    }

    pub fn loss(cands: &[(f64, Vec<f64>)], g: &[bool], w: &LossWeights) -> (f64, usize) {
        let costs: Vec<f64> = cands
            .iter()
            .map(|(_, p)| {
                cost(
                    p,
                    g,
                    w.gamma_mask,
                    w.gamma_dice,
                    w.prob_clamp,
                    w.dice_epsilon,
                )
            })
            .collect();
        let mut m = 0;
        for j in 1..costs.len() {
            if costs[j] < costs[m] {
                m = j;
            }
        }
        (loss_at(cands, g, m, w), m)
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

pub fn random_mask(rng: &mut impl Rng) -> BinaryMask {
    let (h, w) = (rng.gen_range(1..20), rng.gen_range(1..20));
    let fg = rng.gen_range(0.0..1.0);
    BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(fg))
}

/// Boundary F by comparing every boundary pixel pair.
pub fn brute_force_f(pred: &BinaryMask, gt: &BinaryMask, radius: usize) -> f64 {
    let edge = |m: &BinaryMask| {
        let mut out = Vec::new();
        for r in 0..m.h as i64 {
            for c in 0..m.w as i64 {
                if !m.get(r as usize, c as usize) {
                    continue;
                }
                let bg = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                    .iter()
                    .any(|&(y, x)| {
                        y < 0
                            || x < 0
                            || y >= m.h as i64
                            || x >= m.w as i64
                            || !m.get(y as usize, x as usize)
                    });
                if bg {
                    out.push((r, c));
                }
            }
        }
        out
    };
    let (pb, gb) = (edge(pred), edge(gt));
    if pb.is_empty() && gb.is_empty() {
        return 1.0;
    }
    if pb.is_empty() || gb.is_empty() {
        return 0.0;
    }
    let near = |a: &(i64, i64), set: &[(i64, i64)]| {
        set.iter()
            .any(|b| (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= radius as i64)
    };
    let p = pb.iter().filter(|x| near(x, &gb)).count() as f64 / pb.len() as f64;
    let r = gb.iter().filter(|x| near(x, &pb)).count() as f64 / gb.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

//! Hierarchical navigable small-world graph over the index's vectors.
//!
//! The graph stores only adjacency; vectors live in the owning
//! [`super::VectorIndex`] and are passed in by reference. Node levels are a
//! hash of the node id, so a rebuilt graph is identical to the original.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::embedding::splitmix64;

use super::dot;

const MAX_LEVEL: usize = 16;
const LEVEL_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    sim: f32,
    id: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    /// Higher similarity first; lower id wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    /// Marks `id`; returns true if it was not yet marked.
    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

pub(crate) struct Hnsw {
    m: usize,
    m0: usize,
    ef_construction: usize,
    level_mult: f64,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    top_level: usize,
}

#[inline]
fn row(vectors: &[f32], dim: usize, id: u32) -> &[f32] {
    let i = id as usize * dim;
    &vectors[i..i + dim]
}

impl Hnsw {
    pub(crate) fn new(m: usize, ef_construction: usize) -> Self {
        Self {
            m,
            m0: 2 * m,
            ef_construction,
            level_mult: 1.0 / (m as f64).ln(),
            links: Vec::new(),
            entry: None,
            top_level: 0,
        }
    }

    fn level_for(&self, id: u32) -> usize {
        let mut s = u64::from(id) ^ LEVEL_SALT;
        let u = (splitmix64(&mut s) >> 11) as f64 / (1u64 << 53) as f64;
        let level = (-(1.0 - u).ln() * self.level_mult).floor() as usize;
        level.min(MAX_LEVEL)
    }

    /// Adds node `id`, which must equal the current node count and already
    /// have its vector stored in `vectors`.
    pub(crate) fn insert(&mut self, id: u32, vectors: &[f32], dim: usize) {
        debug_assert_eq!(id as usize, self.links.len());
        let level = self.level_for(id);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(mut ep) = self.entry else {
            self.entry = Some(id);
            self.top_level = level;
            return;
        };
        let q = row(vectors, dim, id);
        let n = self.links.len();

        for layer in (level + 1..=self.top_level).rev() {
            ep = self.greedy(q, ep, layer, vectors, dim);
        }

        let mut eps = vec![ep];
        for layer in (0..=level.min(self.top_level)).rev() {
            let found = self.search_layer(
                q,
                &eps,
                self.ef_construction,
                layer,
                vectors,
                dim,
                n,
                |_| true,
            );
            let chosen = self.select(&found, self.m, vectors, dim);
            let cap = if layer == 0 { self.m0 } else { self.m };
            for c in &chosen {
                let nb = c.id as usize;
                self.links[nb][layer].push(id);
                if self.links[nb][layer].len() > cap {
                    self.shrink(c.id, layer, cap, vectors, dim);
                }
            }
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();
            eps = found.iter().map(|c| c.id).collect();
        }

        if level > self.top_level {
            self.top_level = level;
            self.entry = Some(id);
        }
    }

    /// Re-selects the neighbours of `node` on `layer` down to `cap`.
    fn shrink(&mut self, node: u32, layer: usize, cap: usize, vectors: &[f32], dim: usize) {
        let base = row(vectors, dim, node);
        let mut cands: Vec<Cand> = self.links[node as usize][layer]
            .iter()
            .map(|&id| Cand {
                sim: dot(base, row(vectors, dim, id)),
                id,
            })
            .collect();
        cands.sort_unstable_by(|a, b| b.cmp(a));
        let kept = self.select(&cands, cap, vectors, dim);
        self.links[node as usize][layer] = kept.into_iter().map(|c| c.id).collect();
    }

    /// Diversity heuristic: walk candidates best-first and keep one only if
    /// it is closer to the base point than to every already-kept neighbour.
    /// Leftover slots are filled with the best pruned candidates.
    fn select(&self, sorted: &[Cand], m: usize, vectors: &[f32], dim: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.len() == m {
                break;
            }
            let v = row(vectors, dim, c.id);
            let diverse = kept.iter().all(|k| dot(v, row(vectors, dim, k.id)) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() == m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy(&self, q: &[f32], start: u32, layer: usize, vectors: &[f32], dim: usize) -> u32 {
        let mut cur = Cand {
            sim: dot(q, row(vectors, dim, start)),
            id: start,
        };
        loop {
            let mut best = cur;
            for &nb in &self.links[cur.id as usize][layer] {
                let c = Cand {
                    sim: dot(q, row(vectors, dim, nb)),
                    id: nb,
                };
                if c > best {
                    best = c;
                }
            }
            if best == cur {
                return cur.id;
            }
            cur = best;
        }
    }

    /// Beam search on one layer. Every reachable node may be expanded but
    /// only nodes passing `keep` enter the result set. Results are sorted
    /// best-first.
    #[allow(clippy::too_many_arguments)]
    fn search_layer(
        &self,
        q: &[f32],
        eps: &[u32],
        ef: usize,
        layer: usize,
        vectors: &[f32],
        dim: usize,
        n: usize,
        keep: impl Fn(u32) -> bool,
    ) -> Vec<Cand> {
        let mut visited = Visited::new(n);
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();

        for &ep in eps {
            if !visited.insert(ep) {
                continue;
            }
            let c = Cand {
                sim: dot(q, row(vectors, dim, ep)),
                id: ep,
            };
            frontier.push(c);
            if keep(ep) {
                results.push(Reverse(c));
                if results.len() > ef {
                    results.pop();
                }
            }
        }

        while let Some(c) = frontier.pop() {
            if results.len() >= ef {
                if let Some(Reverse(worst)) = results.peek() {
                    if c < *worst {
                        break;
                    }
                }
            }
            for &nb in &self.links[c.id as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let e = Cand {
                    sim: dot(q, row(vectors, dim, nb)),
                    id: nb,
                };
                let worst = results.peek().map(|r| r.0);
                if results.len() < ef || worst.is_none_or(|w| e > w) {
                    frontier.push(e);
                    if keep(nb) {
                        results.push(Reverse(e));
                        if results.len() > ef {
                            results.pop();
                        }
                    }
                }
            }
        }

        let mut out: Vec<Cand> = results.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Returns up to `ef` node ids passing `keep`, best-first.
    pub(crate) fn search(
        &self,
        q: &[f32],
        vectors: &[f32],
        dim: usize,
        ef: usize,
        keep: impl Fn(u32) -> bool,
    ) -> Vec<u32> {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        for layer in (1..=self.top_level).rev() {
            ep = self.greedy(q, ep, layer, vectors, dim);
        }
        self.search_layer(q, &[ep], ef, 0, vectors, dim, self.links.len(), keep)
            .into_iter()
            .map(|c| c.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_deterministic_and_mostly_zero() {
        let g = Hnsw::new(16, 100);
        let levels: Vec<_> = (0..10_000).map(|i| g.level_for(i)).collect();
        let again: Vec<_> = (0..10_000).map(|i| g.level_for(i)).collect();
        assert_eq!(levels, again);
        let zeros = levels.iter().filter(|&&l| l == 0).count();
        // P(level 0) = 1 - 1/16
        assert!((9_100..9_650).contains(&zeros), "{zeros}");
    }

    #[test]
    fn finds_exact_match_in_small_graph() {
        let dim = 2;
        let mut vectors = Vec::new();
        let mut g = Hnsw::new(4, 16);
        for i in 0..50u32 {
            let a = i as f32 * 0.1;
            vectors.extend_from_slice(&[a.cos(), a.sin()]);
            g.insert(i, &vectors, dim);
        }
        let q = [2.0f32.cos(), 2.0f32.sin()];
        let got = g.search(&q, &vectors, dim, 8, |_| true);
        assert_eq!(got[0], 20);
        let odd_only = g.search(&q, &vectors, dim, 8, |id| id % 2 == 1);
        assert!(odd_only.iter().all(|id| id % 2 == 1));
        assert!(odd_only[..2].contains(&19) && odd_only[..2].contains(&21));
    }
}

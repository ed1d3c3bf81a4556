mod common;

use std::collections::{HashMap, HashSet};

use common::*;
use mvrs_core::{
    AnnParams, Embedder, EmbedderConfig, Engine, MetadataFilter, QueryRequest, SearchMode,
    VectorIndex, VideoAsset, VideoMetadata,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Corpus {
    index: VectorIndex,
    catalog: HashMap<String, VideoAsset>,
    /// (video_id, start_frame, vector) for every segment
    segments: Vec<(String, u64, Vec<f32>)>,
}

fn asset(id: &str, fps: f64) -> VideoAsset {
    VideoAsset {
        video_id: id.into(),
        source_uri: format!("file:///videos/{id}.mp4"),
        fps,
        frame_count: 1000,
        metadata: VideoMetadata::default(),
    }
}

fn corpus(rng: &mut ChaCha8Rng, videos: usize, per_video: usize, dim: usize) -> Corpus {
    let mut index = VectorIndex::new(dim, AnnParams::default()).unwrap();
    let mut catalog = HashMap::new();
    let mut segments = Vec::new();
    for v in 0..videos {
        let id = format!("video-{v:02}");
        catalog.insert(id.clone(), asset(&id, [24.0, 25.0, 30.0][v % 3]));
        for s in 0..per_video {
            let vec = random_unit(rng, dim);
            let start = s as u64 * 10;
            index
                .insert(&segment(&id, start, vec.clone()), VideoMetadata::default())
                .unwrap();
            segments.push((id.clone(), start, vec.into_values()));
        }
    }
    Corpus {
        index,
        catalog,
        segments,
    }
}

/// Scores every segment, max-pools per video and sorts.
fn oracle_ranking(c: &Corpus, q: &[f32]) -> Vec<(String, f32)> {
    let mut best: HashMap<&str, f32> = HashMap::new();
    for (vid, _, v) in &c.segments {
        let s = (v
            .iter()
            .zip(q)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum::<f64>() as f32)
            .clamp(-1.0, 1.0);
        let e = best.entry(vid).or_insert(f32::NEG_INFINITY);
        *e = e.max(s);
    }
    let mut out: Vec<(String, f32)> = best.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

#[test]
fn planted_video_ranks_first() {
    let dim = 64;
    let embedder = Embedder::new(EmbedderConfig::deterministic(dim)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..100 {
        let mut c = corpus(&mut rng, 20, 5, dim);
        let text = format!("a shark circling the reef {trial}");
        let planted = format!("video-{:02}", rng.gen_range(0..20));
        let q = embedder.embed_text(&text).unwrap();
        c.index
            .insert(&segment(&planted, 500, q.clone()), VideoMetadata::default())
            .unwrap();
        let engine = Engine {
            index: &c.index,
            embedder: &embedder,
            catalog: &c.catalog,
            mode: SearchMode::Exact,
        };
        let res = engine.run_query(&QueryRequest::new(text, 5)).unwrap();
        assert_eq!(res[0].video_id, planted);
        assert_eq!(res[0].score, 1.0);
        assert_eq!(res[0].best_segment.start_frame, 500);
        assert_eq!(res[0].best_timestamp_s, 500.0 / c.catalog[&planted].fps);
    }
}

#[test]
fn run_query_agrees_with_brute_force() {
    let dim = 32;
    let embedder = Embedder::new(EmbedderConfig::deterministic(dim)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..30 {
        let videos = rng.gen_range(1..40);
        let per_video = rng.gen_range(1..25);
        let c = corpus(&mut rng, videos, per_video, dim);
        let engine = Engine {
            index: &c.index,
            embedder: &embedder,
            catalog: &c.catalog,
            mode: SearchMode::Exact,
        };
        let text = format!("query {trial}");
        let q = embedder.embed_text(&text).unwrap();
        let want = oracle_ranking(&c, q.values());
        // a multiplier covering the whole corpus makes the ranking complete
        let req = QueryRequest {
            candidate_multiplier: c.segments.len(),
            ..QueryRequest::new(text, videos)
        };
        let got: Vec<(String, f32)> = engine
            .run_query(&req)
            .unwrap()
            .into_iter()
            .map(|r| (r.video_id, r.score))
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn results_are_distinct_ranked_and_stable_under_overfetch() {
    let dim = 16;
    let embedder = Embedder::new(EmbedderConfig::deterministic(dim)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = corpus(&mut rng, 15, 20, dim);
    let mut ann = c;
    for mode in [SearchMode::Exact, SearchMode::Ann(AnnParams::default())] {
        let engine = Engine {
            index: &ann.index,
            embedder: &embedder,
            catalog: &ann.catalog,
            mode,
        };
        for i in 0..20 {
            let text = format!("turtle {i}");
            let res = engine.run_query(&QueryRequest::new(&text, 10)).unwrap();
            let ids: HashSet<_> = res.iter().map(|r| &r.video_id).collect();
            assert_eq!(ids.len(), res.len());
            for (i, r) in res.iter().enumerate() {
                assert_eq!(r.rank as usize, i + 1);
            }
            for w in res.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
            if mode == SearchMode::Exact {
                let top = |m: usize| {
                    let req = QueryRequest {
                        candidate_multiplier: m,
                        ..QueryRequest::new(&text, 3)
                    };
                    engine.run_query(&req).unwrap()[0].video_id.clone()
                };
                let first = top(1);
                for m in [2, 4, 8, 32, 300] {
                    assert_eq!(top(m), first);
                }
            }
        }
    }
    ann.catalog.clear();
    let engine = Engine {
        index: &ann.index,
        embedder: &embedder,
        catalog: &ann.catalog,
        mode: SearchMode::Exact,
    };
    assert!(engine.run_query(&QueryRequest::new("x", 3)).is_err());
}

#[test]
fn trivial_queries() {
    let dim = 8;
    let embedder = Embedder::new(EmbedderConfig::deterministic(dim)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = corpus(&mut rng, 4, 3, dim);
    let engine = Engine {
        index: &c.index,
        embedder: &embedder,
        catalog: &c.catalog,
        mode: SearchMode::Exact,
    };
    assert!(engine
        .run_query(&QueryRequest::new("fish", 0))
        .unwrap()
        .is_empty());
    let none = MetadataFilter {
        location_equals: Some("mars".into()),
        ..Default::default()
    };
    let req = QueryRequest {
        filter: Some(none),
        ..QueryRequest::new("fish", 5)
    };
    assert!(engine.run_query(&req).unwrap().is_empty());
    assert!(engine.run_query(&QueryRequest::new("", 5)).is_err());
}

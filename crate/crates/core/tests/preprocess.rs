mod common;

use common::random_unit;
use mvrs_core::embedding::unit_normalize;
use mvrs_core::model::QuarterTurns;
use mvrs_core::preprocess::{
    filter_blurry, group_similar, laplacian_variance, normalize_orientation, rotate_quarter_cw,
};
use mvrs_core::{EmbeddingVector, FrameRecord, GrayImage, PreprocessConfig, VideoMetadata};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image_strategy() -> impl Strategy<Value = GrayImage> {
    (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<u8>(), h * w)
            .prop_map(move |px| GrayImage::new(h, w, px).unwrap())
    })
}

fn frames_with(vectors: Vec<EmbeddingVector>) -> Vec<FrameRecord> {
    vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut f = FrameRecord::new("vid", i as u64 * 2, 10.0);
            f.embedding = Some(v);
            f
        })
        .collect()
}

/// A slow random walk on the sphere, so neighbouring frames are similar
/// and the threshold actually decides where segments break.
fn walk(rng: &mut ChaCha8Rng, n: usize, dim: usize, step: f32) -> Vec<EmbeddingVector> {
    let mut cur = random_unit(rng, dim);
    (0..n)
        .map(|_| {
            let nudge = random_unit(rng, dim);
            let next: Vec<f32> = cur
                .values()
                .iter()
                .zip(nudge.values())
                .map(|(a, b)| a + step * b)
                .collect();
            cur = unit_normalize(&next).unwrap();
            cur.clone()
        })
        .collect()
}

proptest! {
    #[test]
    fn rotation_permutes_pixels(img in image_strategy(), turns in 0i64..4) {
        let r = rotate_quarter_cw(&img, turns).unwrap();
        let (h, w) = (img.height(), img.width());
        if turns % 2 == 1 {
            prop_assert_eq!((r.height(), r.width()), (w, h));
        } else {
            prop_assert_eq!((r.height(), r.width()), (h, w));
        }
        let mut a = img.pixels().to_vec();
        let mut b = r.pixels().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        let back = rotate_quarter_cw(&r, (4 - turns) % 4).unwrap();
        prop_assert_eq!(back, img.clone());
        // one quarter turn moves (r, c) to (c, H-1-r)
        let q = rotate_quarter_cw(&img, 1).unwrap();
        for row in 0..h {
            for col in 0..w {
                prop_assert_eq!(q.get(col, h - 1 - row), img.get(row, col));
            }
        }
    }

    #[test]
    fn orientation_undoes_recorded_rotation(img in image_strategy(), turns in 0i64..4) {
        let recorded = rotate_quarter_cw(&img, turns).unwrap();
        let meta = VideoMetadata { rotation_quarter_turns: QuarterTurns::new(turns).unwrap(), ..Default::default() };
        prop_assert_eq!(normalize_orientation(&recorded, &meta), img);
    }

    #[test]
    fn blur_filter_is_idempotent(seed in any::<u64>(), threshold in 0.0f64..3000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<_> = (0..20)
            .map(|i| {
                let (h, w) = (rng.gen_range(1..8), rng.gen_range(1..8));
                let spread = rng.gen_range(1..=255u16);
                let px = (0..h * w).map(|_| rng.gen_range(0..spread) as u8).collect();
                (FrameRecord::new("v", i, 5.0), GrayImage::new(h, w, px).unwrap())
            })
            .collect();
        let cfg = PreprocessConfig { blur_threshold: threshold, ..PreprocessConfig::default() };
        let once = filter_blurry(frames, &cfg);
        for (f, img) in &once.kept {
            prop_assert!(laplacian_variance(img).unwrap() >= threshold);
            prop_assert_eq!(f.sharpness, laplacian_variance(img).unwrap());
        }
        let twice = filter_blurry(once.kept.clone(), &cfg);
        prop_assert!(twice.dropped.is_empty());
        prop_assert_eq!(twice.kept, once.kept);
    }

    #[test]
    fn groups_partition_frames(seed in any::<u64>(), n in 1usize..80, theta in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = frames_with(walk(&mut rng, n, 8, 0.3));
        let groups = group_similar(&frames, &PreprocessConfig { similarity_threshold: theta, ..Default::default() }).unwrap();
        let mut next = 0usize;
        for g in &groups {
            prop_assert_eq!(g.start_frame, frames[next].frame_index);
            let members = g.member_count as usize;
            prop_assert!(members >= 1);
            prop_assert_eq!(g.end_frame, frames[next + members - 1].frame_index);
            let norm: f64 = g.representative.values().iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-6);
            next += members;
        }
        prop_assert_eq!(next, frames.len());
        for w in groups.windows(2) {
            prop_assert!(w[0].end_frame < w[1].start_frame);
        }
    }
}

#[test]
fn grouping_examples() {
    let v = |x: &[f32]| EmbeddingVector::from_unit(x.to_vec()).unwrap();
    let cfg = PreprocessConfig::default();
    let same = group_similar(&frames_with(vec![v(&[0.6, 0.8]); 5]), &cfg).unwrap();
    assert_eq!(same.len(), 1);
    assert_eq!(same[0].member_count, 5);
    assert_eq!(same[0].representative, v(&[0.6, 0.8]));

    let split = group_similar(
        &frames_with(vec![v(&[1.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])]),
        &cfg,
    )
    .unwrap();
    assert_eq!(split.len(), 2);
    assert_eq!((split[0].start_frame, split[0].end_frame), (0, 2));
    assert_eq!((split[1].start_frame, split[1].end_frame), (4, 4));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let positive: Vec<_> = (0..30)
        .map(|_| {
            let x: Vec<f32> = (0..6).map(|_| rng.gen_range(0.1f32..1.0)).collect();
            unit_normalize(&x).unwrap()
        })
        .collect();
    let tiny = PreprocessConfig {
        similarity_threshold: 1e-9,
        ..cfg
    };
    assert_eq!(
        group_similar(&frames_with(positive), &tiny).unwrap().len(),
        1
    );
}

/// Grouping at threshold 1 only merges runs of identical vectors, and a run
/// of identical vectors is never split at any threshold, so no threshold
/// yields more groups than 1.0 does.
#[test]
fn no_threshold_beats_exact_match_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..200 {
        let dim = [2, 4, 8, 16][trial % 4];
        let pool: Vec<_> = (0..6).map(|_| random_unit(&mut rng, dim)).collect();
        let vectors: Vec<_> = (0..60)
            .map(|_| pool[rng.gen_range(0..pool.len())].clone())
            .collect();
        let frames = frames_with(vectors);
        let at = |theta: f64| {
            let cfg = PreprocessConfig {
                similarity_threshold: theta,
                ..Default::default()
            };
            group_similar(&frames, &cfg).unwrap().len()
        };
        let ceiling = at(1.0);
        for step in 1..20 {
            assert!(at(step as f64 / 20.0) <= ceiling);
        }
    }
}

/// The running mean makes grouping path-dependent: merging an early frame
/// at a lower threshold can pull the representative away from a later
/// frame that a stricter threshold would have accepted.
#[test]
fn greedy_grouping_is_not_threshold_monotone() {
    let deg = |a: f64| {
        let r = a.to_radians();
        unit_normalize(&[r.cos() as f32, r.sin() as f32]).unwrap()
    };
    let frames = frames_with([20.0, 60.0, 90.0, 42.0].into_iter().map(deg).collect());
    let count = |theta_deg: f64| {
        let cfg = PreprocessConfig {
            similarity_threshold: theta_deg.to_radians().cos(),
            ..Default::default()
        };
        group_similar(&frames, &cfg).unwrap().len()
    };
    // strict: [20] [60 90 42]; loose: [20 60] [90] [42]
    assert_eq!(count(35.0), 2);
    assert_eq!(count(45.0), 3);
}

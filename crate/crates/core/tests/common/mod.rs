#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;

use mvrs_core::embedding::unit_normalize;
use mvrs_core::{EmbeddingVector, SegmentGroup, VideoMetadata};
use rand::Rng;

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        if let Ok(u) = unit_normalize(&v) {
            return u;
        }
    }
}

pub fn segment(video: &str, start: u64, v: EmbeddingVector) -> SegmentGroup {
    SegmentGroup {
        segment_id: format!("{video}/{start}"),
        video_id: video.into(),
        start_frame: start,
        end_frame: start,
        representative: v,
        member_count: 1,
    }
}

pub fn tags(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub const LOCATIONS: [&str; 3] = ["reef-a", "reef-b", "trench"];
pub const SPECIES: [&str; 4] = ["shark", "turtle", "ray", "eel"];
pub const BEHAVIORS: [&str; 3] = ["feeding", "resting", "hunting"];

/// Metadata drawn from small domains so filters hit and miss often.
pub fn random_metadata(rng: &mut impl Rng) -> VideoMetadata {
    use chrono::{TimeZone, Utc};
    let mut m = VideoMetadata::default();
    if rng.gen_bool(0.8) {
        m.location = Some(LOCATIONS[rng.gen_range(0..LOCATIONS.len())].into());
    }
    if rng.gen_bool(0.8) {
        m.capture_time = Some(
            Utc.timestamp_opt(1_600_000_000 + rng.gen_range(0..1_000_000), 0)
                .unwrap(),
        );
    }
    if rng.gen_bool(0.8) {
        m.depth_meters = Some(rng.gen_range(0.0..100.0));
    }
    for s in SPECIES {
        if rng.gen_bool(0.3) {
            m.species_tags.insert(s.into());
        }
    }
    for b in BEHAVIORS {
        if rng.gen_bool(0.3) {
            m.behavior_tags.insert(b.into());
        }
    }
    m
}

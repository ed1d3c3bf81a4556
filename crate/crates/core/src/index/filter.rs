use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::VideoMetadata;

use super::IndexError;

/// Conjunctive metadata constraints. Absent clauses do not constrain;
/// absent metadata fields never satisfy a present clause.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetadataFilter {
    pub location_equals: Option<String>,
    /// Inclusive `[from, to]`.
    pub time_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Inclusive `[min, max]` in meters.
    pub depth_range: Option<(f64, f64)>,
    pub species_any: Option<BTreeSet<String>>,
    pub behavior_any: Option<BTreeSet<String>>,
}

impl MetadataFilter {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if let Some((from, to)) = self.time_range {
            if from > to {
                return Err(IndexError::Argument(format!(
                    "time range is inverted: {from} > {to}"
                )));
            }
        }
        if let Some((lo, hi)) = self.depth_range {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(IndexError::Argument(format!(
                    "depth range is inverted or NaN: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, meta: &VideoMetadata) -> bool {
        if let Some(loc) = &self.location_equals {
            if meta.location.as_ref() != Some(loc) {
                return false;
            }
        }
        if let Some((from, to)) = self.time_range {
            match meta.capture_time {
                Some(t) if t >= from && t <= to => {}
                _ => return false,
            }
        }
        if let Some((lo, hi)) = self.depth_range {
            match meta.depth_meters {
                Some(d) if d >= lo && d <= hi => {}
                _ => return false,
            }
        }
        if let Some(any) = &self.species_any {
            if meta.species_tags.is_disjoint(any) {
                return false;
            }
        }
        if let Some(any) = &self.behavior_any {
            if meta.behavior_tags.is_disjoint(any) {
                return false;
            }
        }
        true
    }
}

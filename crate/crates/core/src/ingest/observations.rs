//! Line-delimited observation records.
//!
//! One JSON object per line:
//!
//! ```text
//! {"stamp":1.0,"track_id":7,"u_min":100,"v_min":100,"u_max":200,"v_max":200,"depth":1.5,"classes":{"cup":1.0}}
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. Records sharing a
//! stamp form one frame and must be contiguous; stamps never decrease.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Frame, IngestError, ObservationStream};
use crate::model::{ClassDistribution, PixelBox, Timestamp, TrackedObservation};

/// Class distributions within this much of unit mass are renormalized.
pub const CLASS_SUM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub stamp: Timestamp,
    pub track_id: u64,
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub depth: f64,
    pub classes: BTreeMap<String, f64>,
}

impl ObservationRecord {
    pub fn from_observation(o: &TrackedObservation) -> Self {
        ObservationRecord {
            stamp: o.stamp,
            track_id: o.track_id,
            u_min: o.bbox.u_min,
            v_min: o.bbox.v_min,
            u_max: o.bbox.u_max,
            v_max: o.bbox.v_max,
            depth: o.depth,
            classes: o.class_dist.entries().clone(),
        }
    }

    fn into_observation(self, line: usize) -> Result<TrackedObservation, IngestError> {
        let value = |message: String| IngestError::Value { line, message };
        if !(self.depth > 0.0) || !self.depth.is_finite() {
            return Err(value(format!("depth {} must be > 0", self.depth)));
        }
        let bbox = PixelBox {
            u_min: self.u_min,
            v_min: self.v_min,
            u_max: self.u_max,
            v_max: self.v_max,
        };
        if !bbox.is_valid() {
            return Err(value(format!(
                "bbox ({}, {}, {}, {}) needs u_min<u_max and v_min<v_max",
                self.u_min, self.v_min, self.u_max, self.v_max
            )));
        }
        let class_dist = ClassDistribution::normalized(self.classes, CLASS_SUM_TOL)
            .map_err(|e| value(e.to_string()))?;
        Ok(TrackedObservation {
            stamp: self.stamp,
            track_id: self.track_id,
            bbox,
            class_dist,
            depth: self.depth,
        })
    }
}

pub fn parse_observations(text: &str) -> Result<ObservationStream, IngestError> {
    let mut frames: Vec<Frame> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: ObservationRecord = serde_json::from_str(trimmed).map_err(|e| IngestError::Parse {
            line,
            message: e.to_string(),
        })?;
        let obs = record.into_observation(line)?;
        match frames.last_mut() {
            Some(f) if f.stamp == obs.stamp => {
                if f.observations.iter().any(|o| o.track_id == obs.track_id) {
                    return Err(IngestError::Value {
                        line,
                        message: format!("track {} repeated at {}", obs.track_id, obs.stamp),
                    });
                }
                f.observations.push(obs);
            }
            Some(f) if obs.stamp < f.stamp => {
                return Err(IngestError::Ordering {
                    line,
                    message: format!("stamp {} precedes frame {}", obs.stamp, f.stamp),
                });
            }
            _ => frames.push(Frame {
                stamp: obs.stamp,
                observations: vec![obs],
            }),
        }
    }
    ObservationStream::new(frames)
}

/// Serializes a stream as one record per line. Empty frames leave no trace.
pub fn write_observations(stream: &ObservationStream) -> String {
    let mut out = String::new();
    for f in stream.frames() {
        for o in &f.observations {
            let rec = ObservationRecord::from_observation(o);
            out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            out.push('\n');
        }
    }
    out
}

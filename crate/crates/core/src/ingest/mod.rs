//! Pose and detection streams: file parsing, validation, and synthetic
//! scene generation.

mod observations;
mod synthetic;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use observations::{parse_observations, write_observations, ObservationRecord};
pub use synthetic::{
    generate_synthetic, parse_ground_truth, write_ground_truth, CameraPath, GroundTruthFrame,
    ObjectSpec, SensorSettings, SyntheticRun, SyntheticSceneSpec, Triple,
};
pub use trajectory::{parse_trajectory, write_trajectory, PoseConvention};

use crate::model::{GeometryError, Pose, Timestamp, TrackedObservation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: ordering error: {message}")]
    Ordering { line: usize, message: String },
    #[error("line {line}: invalid rotation, quaternion norm {norm}")]
    InvalidRotation { line: usize, norm: f64 },
    #[error("line {line}: value error: {message}")]
    Value { line: usize, message: String },
    #[error("pose stream is empty")]
    EmptyStream,
    #[error("synthetic scene has no objects")]
    EmptyScene,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Time-ordered poses with strictly increasing stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseStream {
    poses: Vec<Pose>,
}

impl PoseStream {
    pub fn new(poses: Vec<Pose>) -> Result<Self, IngestError> {
        if poses.is_empty() {
            return Err(IngestError::EmptyStream);
        }
        for (i, w) in poses.windows(2).enumerate() {
            if w[1].stamp <= w[0].stamp {
                return Err(IngestError::Ordering {
                    line: i + 2,
                    message: format!("pose stamp {} does not follow {}", w[1].stamp, w[0].stamp),
                });
            }
        }
        Ok(PoseStream { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// All observations sharing one frame stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub stamp: Timestamp,
    pub observations: Vec<TrackedObservation>,
}

/// Time-ordered frames with strictly increasing stamps. May be empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationStream {
    frames: Vec<Frame>,
}

impl ObservationStream {
    pub fn new(frames: Vec<Frame>) -> Result<Self, IngestError> {
        for (i, w) in frames.windows(2).enumerate() {
            if w[1].stamp <= w[0].stamp {
                return Err(IngestError::Ordering {
                    line: i + 2,
                    message: format!("frame stamp {} does not follow {}", w[1].stamp, w[0].stamp),
                });
            }
        }
        for f in &frames {
            let mut ids = std::collections::BTreeSet::new();
            for o in &f.observations {
                if o.stamp != f.stamp {
                    return Err(IngestError::Value {
                        line: 0,
                        message: format!("observation stamp {} differs from frame {}", o.stamp, f.stamp),
                    });
                }
                if !ids.insert(o.track_id) {
                    return Err(IngestError::Value {
                        line: 0,
                        message: format!("track {} appears twice at {}", o.track_id, f.stamp),
                    });
                }
            }
        }
        Ok(ObservationStream { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.stamp.seconds_since(a.stamp),
            _ => 0.0,
        }
    }
}

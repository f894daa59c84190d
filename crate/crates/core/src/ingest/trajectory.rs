//! Whitespace-separated trajectory files: `timestamp tx ty tz qx qy qz qw`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{IngestError, PoseStream};
use crate::model::{Pose, Timestamp, Vec3, UNIT_NORM_TOL};

/// Quaternions whose norm deviates from one by at most this much are
/// accepted (and renormalized); larger deviations are rejected.
pub const RENORMALIZE_TOL: f64 = 1e-3;

pub fn parse_trajectory(text: &str) -> Result<PoseStream, IngestError> {
    let mut poses: Vec<Pose> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let stamp: Timestamp = fields[0].parse().map_err(|e| IngestError::Parse {
            line: line_no,
            message: format!("{e}"),
        })?;
        let mut nums = [0.0f64; 7];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| IngestError::Parse {
                line: line_no,
                message: format!("'{f}' is not a number"),
            })?;
            if !slot.is_finite() {
                return Err(IngestError::Value {
                    line: line_no,
                    message: format!("non-finite value '{f}'"),
                });
            }
        }
        let q = [nums[3], nums[4], nums[5], nums[6]];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > RENORMALIZE_TOL {
            return Err(IngestError::InvalidRotation { line: line_no, norm });
        }
        // already unit within the pose tolerance: keep the written values so
        // written files round trip bit-exactly
        let rotation = if (norm - 1.0).abs() <= UNIT_NORM_TOL {
            q
        } else {
            q.map(|c| c / norm)
        };
        let pose = Pose {
            stamp,
            rotation,
            translation: [nums[0], nums[1], nums[2]],
        };
        if let Some(prev) = poses.last() {
            if pose.stamp <= prev.stamp {
                return Err(IngestError::Ordering {
                    line: line_no,
                    message: format!("timestamp {} does not follow {}", pose.stamp, prev.stamp),
                });
            }
        }
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(IngestError::EmptyStream);
    }
    PoseStream::new(poses)
}

/// Writes poses with shortest round-trip precision, so a written file replays bit-exactly.
pub fn write_trajectory(stream: &PoseStream) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in stream.poses() {
        let [tx, ty, tz] = p.translation;
        let [qx, qy, qz, qw] = p.rotation;
        out.push_str(&format!(
            "{} {tx} {ty} {tz} {qx} {qy} {qz} {qw}\n",
            p.stamp
        ));
    }
    out
}

/// Axis convention of an input trajectory's world frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    /// World frame already z-up.
    #[default]
    ZUp,
    /// World frame is the first camera frame (x right, y down, z forward).
    CameraForward,
}

impl PoseConvention {
    /// Maps world coordinates of this convention into the z-up world frame.
    pub fn to_z_up(self) -> Matrix3<f64> {
        match self {
            PoseConvention::ZUp => Matrix3::identity(),
            // x -> x, z (forward) -> y, y (down) -> -z
            PoseConvention::CameraForward => {
                Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
            }
        }
    }

    pub fn apply(self, stream: &PoseStream) -> Result<PoseStream, IngestError> {
        if self == PoseConvention::ZUp {
            return Ok(stream.clone());
        }
        let perm = Rotation3::from_matrix_unchecked(self.to_z_up());
        let pq = UnitQuaternion::from_rotation_matrix(&perm);
        let poses = stream
            .poses()
            .iter()
            .map(|p| {
                let q = pq * p.unit_quaternion()?;
                let t = perm * Vec3::from(p.translation);
                let c = q.quaternion().coords;
                Ok(Pose {
                    stamp: p.stamp,
                    rotation: [c.x, c.y, c.z, c.w],
                    translation: [t.x, t.y, t.z],
                })
            })
            .collect::<Result<Vec<_>, IngestError>>()?;
        PoseStream::new(poses)
    }
}

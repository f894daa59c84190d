use serde::{Deserialize, Serialize};

use super::{DropLog, PipelineError};
use crate::ingest::{ObservationStream, PoseStream};
use crate::model::{Pose, Timestamp, TrackedObservation};

/// Maximum |t_frame - t_pose| for a pairing, in seconds.
pub const DEFAULT_SYNC_GATE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncedFrame {
    pub frame_stamp: Timestamp,
    pub pose: Pose,
    pub observations: Vec<TrackedObservation>,
    /// seconds
    pub pose_gap: f64,
}

/// Pairs each frame with its nearest pose (two-pointer merge, O(n + m)).
///
/// Frames whose nearest pose is `gate` seconds or more away are dropped and
/// counted in `stale_pose_drops`. Equidistant poses resolve to the earlier one.
pub fn synchronize(
    frames: &ObservationStream,
    poses: &PoseStream,
    gate: f64,
) -> Result<(Vec<SyncedFrame>, DropLog), PipelineError> {
    if poses.is_empty() {
        return Err(PipelineError::Config("pose stream is empty".into()));
    }
    if !(gate > 0.0) {
        return Err(PipelineError::Config(format!("sync gate must be > 0, got {gate}")));
    }
    let gate_us = gate * 1e6;
    let ps = poses.poses();
    let mut log = DropLog::default();
    let mut out = Vec::with_capacity(frames.len());
    let mut j = 0usize;
    for f in frames.frames() {
        let t = f.stamp.micros();
        // advance while the next pose is at least as close
        while j + 1 < ps.len() && (ps[j + 1].stamp.micros() - t).abs() < (ps[j].stamp.micros() - t).abs() {
            j += 1;
        }
        let gap_us = (ps[j].stamp.micros() - t).abs();
        if gap_us as f64 >= gate_us {
            log.stale_pose_drops += 1;
            continue;
        }
        out.push(SyncedFrame {
            frame_stamp: f.stamp,
            pose: ps[j],
            observations: f.observations.clone(),
            pose_gap: gap_us as f64 / 1e6,
        });
    }
    Ok((out, log))
}

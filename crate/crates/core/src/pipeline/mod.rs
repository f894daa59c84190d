//! Temporal machinery: frame-rate subsampling, pose synchronization, and an
//! in-process publish/subscribe bus with per-topic QoS.

mod bus;
mod subsample;
mod sync;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{Bus, PublishOutcome, QosPolicy, Reliability, Subscriber, TopicStats, CAMERA_POSE, SCENE_GRAPH, TRACKED_OBJECTS};
pub use subsample::{subsample, subsample_with_stats};
pub use sync::{synchronize, SyncedFrame, DEFAULT_SYNC_GATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown topic '{0}'")]
    UnknownTopic(String),
    #[error("topic '{0}' is already registered")]
    DuplicateTopic(String),
    #[error("topic '{0}' is closed")]
    Closed(String),
}

/// Counters for everything the pipeline discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropLog {
    pub stale_pose_drops: u64,
    pub qos_drops: BTreeMap<String, u64>,
    pub subsample_rejections: u64,
}

impl DropLog {
    pub fn merge(&mut self, other: &DropLog) {
        self.stale_pose_drops += other.stale_pose_drops;
        self.subsample_rejections += other.subsample_rejections;
        for (k, v) in &other.qos_drops {
            *self.qos_drops.entry(k.clone()).or_default() += v;
        }
    }

    pub fn total_qos_drops(&self) -> u64 {
        self.qos_drops.values().sum()
    }
}

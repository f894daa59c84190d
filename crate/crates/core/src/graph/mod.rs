//! Temporally indexed scene graph: object nodes, relation edges, and an
//! append-only memory of snapshots.

mod builder;
mod log;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::ReasoningTrace;
use crate::model::{Aabb3, ClassDistribution, GeometryError, PixelBox, Timestamp, Vec3};
use crate::ontology::ViolationCode;

pub use builder::{associate, fuse_class, Assignment, GraphConfig, SceneGraphBuilder};
pub use log::{parse_snapshot_log, read_snapshot_log, snapshot_record, write_snapshot_log};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("snapshot at {got} does not follow the last stored stamp {last}")]
    Ordering { last: Timestamp, got: Timestamp },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("snapshot log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph config: {0}")]
    Config(String),
    #[error("snapshot log i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Where an observation came from, kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRef {
    pub track_id: u64,
    pub stamp: Timestamp,
    pub bbox: PixelBox,
    /// meters
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub node_id: u64,
    pub track_id: u64,
    pub fused_class: ClassDistribution,
    pub obs_count: u64,
    pub world_box: Aabb3,
    pub centroid: Vec3,
    /// meters, depth noise at the last observed depth
    pub position_sigma: f64,
    pub last_seen: Timestamp,
    pub last_observation: ObservationRef,
}

impl ObjectNode {
    /// A node seen once with a certain class, for fixtures and tools. The
    /// placeholder observation has a unit-pixel box at unit depth.
    pub fn from_box(node_id: u64, class: &str, world_box: Aabb3, stamp: Timestamp) -> Self {
        ObjectNode {
            node_id,
            track_id: node_id,
            fused_class: ClassDistribution::certain(class),
            obs_count: 1,
            world_box,
            centroid: world_box.center(),
            position_sigma: 0.0,
            last_seen: stamp,
            last_observation: ObservationRef {
                track_id: node_id,
                stamp,
                bbox: PixelBox {
                    u_min: 0.0,
                    v_min: 0.0,
                    u_max: 1.0,
                    v_max: 1.0,
                },
                depth: 1.0,
            },
        }
    }

    pub fn class(&self) -> &str {
        self.fused_class.argmax()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub edge_id: u64,
    pub subject: u64,
    pub relation: String,
    pub object: u64,
    pub confidence: f64,
    pub trace_id: u64,
    pub stamp: Timestamp,
    #[serde(default)]
    pub violation_flags: Vec<ViolationCode>,
}

impl RelationEdge {
    /// Unflagged edge with full confidence whose trace id equals its edge id.
    pub fn new(edge_id: u64, subject: u64, relation: &str, object: u64, stamp: Timestamp) -> Self {
        RelationEdge {
            edge_id,
            subject,
            relation: relation.to_string(),
            object,
            confidence: 1.0,
            trace_id: edge_id,
            stamp,
            violation_flags: Vec::new(),
        }
    }

    pub fn key(&self) -> (u64, &str, u64) {
        (self.subject, self.relation.as_str(), self.object)
    }

    pub fn is_flagged(&self) -> bool {
        !self.violation_flags.is_empty()
    }
}

/// The graph at one pipeline tick, with one reasoning trace per edge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphSnapshot {
    pub stamp: Timestamp,
    pub nodes: Vec<ObjectNode>,
    pub edges: Vec<RelationEdge>,
    #[serde(default)]
    pub traces: Vec<ReasoningTrace>,
}

impl SceneGraphSnapshot {
    pub fn empty(stamp: Timestamp) -> Self {
        SceneGraphSnapshot {
            stamp,
            ..Default::default()
        }
    }

    pub fn node(&self, node_id: u64) -> Option<&ObjectNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn edge(&self, edge_id: u64) -> Option<&RelationEdge> {
        self.edges.iter().find(|e| e.edge_id == edge_id)
    }

    pub fn trace(&self, trace_id: u64) -> Option<&ReasoningTrace> {
        self.traces.iter().find(|t| t.trace_id == trace_id)
    }

    /// Drops flagged edges together with their traces.
    pub fn remove_flagged(&mut self) {
        let gone: BTreeSet<u64> = self.edges.iter().filter(|e| e.is_flagged()).map(|e| e.trace_id).collect();
        self.edges.retain(|e| !e.is_flagged());
        self.traces.retain(|t| !gone.contains(&t.trace_id));
    }

    /// Unique node ids, live edge endpoints, and exactly one trace per edge.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.node_id) {
                return Err(GraphError::Integrity(format!("duplicate node id {}", n.node_id)));
            }
        }
        let mut edge_ids = BTreeSet::new();
        for e in &self.edges {
            if !edge_ids.insert(e.edge_id) {
                return Err(GraphError::Integrity(format!("duplicate edge id {}", e.edge_id)));
            }
            for end in [e.subject, e.object] {
                if !ids.contains(&end) {
                    return Err(GraphError::Integrity(format!(
                        "edge {} references missing node {end}",
                        e.edge_id
                    )));
                }
            }
        }
        if self.traces.len() != self.edges.len() {
            return Err(GraphError::Integrity(format!(
                "{} traces for {} edges",
                self.traces.len(),
                self.edges.len()
            )));
        }
        let by_trace: BTreeMap<u64, u64> = self.traces.iter().map(|t| (t.trace_id, t.edge_id)).collect();
        for e in &self.edges {
            if by_trace.get(&e.trace_id) != Some(&e.edge_id) {
                return Err(GraphError::Integrity(format!("edge {} has no matching trace", e.edge_id)));
            }
        }
        Ok(())
    }
}

/// Append-only, time-ordered snapshot log.
///
/// Snapshots are shared behind `Arc`, so readers can hold entries while the
/// writer keeps appending.
#[derive(Debug, Clone, Default)]
pub struct SemanticMemory {
    snapshots: Vec<Arc<SceneGraphSnapshot>>,
}

impl SemanticMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, snapshot: SceneGraphSnapshot) -> Result<(), GraphError> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.stamp <= last.stamp {
                return Err(GraphError::Ordering {
                    last: last.stamp,
                    got: snapshot.stamp,
                });
            }
        }
        self.snapshots.push(Arc::new(snapshot));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Arc<SceneGraphSnapshot>] {
        &self.snapshots
    }

    /// Latest snapshot with `stamp <= instant`.
    pub fn query(&self, instant: Timestamp) -> Result<Arc<SceneGraphSnapshot>, GraphError> {
        let idx = self.snapshots.partition_point(|s| s.stamp <= instant);
        if idx == 0 {
            return Err(GraphError::NotFound(format!("no snapshot at or before {instant}")));
        }
        Ok(Arc::clone(&self.snapshots[idx - 1]))
    }

    /// Every stored state of one node, oldest first.
    pub fn node_history(&self, node_id: u64) -> Vec<(Timestamp, &ObjectNode)> {
        self.snapshots
            .iter()
            .filter_map(|s| s.node(node_id).map(|n| (s.stamp, n)))
            .collect()
    }

    /// The snapshot that emitted `edge_id`.
    pub fn find_edge(&self, edge_id: u64) -> Option<Arc<SceneGraphSnapshot>> {
        self.snapshots
            .iter()
            .find(|s| s.edge(edge_id).is_some())
            .map(Arc::clone)
    }
}

impl FromIterator<SceneGraphSnapshot> for Result<SemanticMemory, GraphError> {
    fn from_iter<I: IntoIterator<Item = SceneGraphSnapshot>>(iter: I) -> Self {
        let mut m = SemanticMemory::new();
        for s in iter {
            m.append(s)?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(us: i64) -> Timestamp {
        Timestamp::from_micros(us).unwrap()
    }

    #[test]
    fn append_and_query() {
        let mut m = SemanticMemory::new();
        assert!(matches!(m.query(ts(0)), Err(GraphError::NotFound(_))));
        m.append(SceneGraphSnapshot::empty(ts(100))).unwrap();
        assert_eq!(m.len(), 1);
        assert!(matches!(
            m.append(SceneGraphSnapshot::empty(ts(100))),
            Err(GraphError::Ordering { .. })
        ));
        m.append(SceneGraphSnapshot::empty(ts(200))).unwrap();
        assert_eq!(m.query(ts(100)).unwrap().stamp, ts(100));
        assert_eq!(m.query(ts(150)).unwrap().stamp, ts(100));
        assert_eq!(m.query(ts(10_000)).unwrap().stamp, ts(200));
        assert!(matches!(m.query(ts(99)), Err(GraphError::NotFound(_))));
    }

    #[test]
    fn append_order_is_log_order() {
        let mut m = SemanticMemory::new();
        for i in 1..=100 {
            m.append(SceneGraphSnapshot::empty(ts(i * 10))).unwrap();
        }
        let stamps: Vec<i64> = m.snapshots().iter().map(|s| s.stamp.micros()).collect();
        assert_eq!(stamps, (1..=100).map(|i| i * 10).collect::<Vec<_>>());
    }
}

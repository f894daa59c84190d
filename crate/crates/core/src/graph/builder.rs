use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GraphError, ObjectNode, ObservationRef, RelationEdge, SceneGraphSnapshot};
use crate::explain::{capture_trace, Provenance};
use crate::model::{
    cmp_f64, observation_to_world_aabb, Aabb3, CameraIntrinsics, ClassDistribution, DepthNoise, Timestamp,
    TrackedObservation,
};
use crate::pipeline::SyncedFrame;
use crate::relations::{Body, RelationModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// meters; re-binding radius for observations with an unseen track id
    pub match_radius: f64,
    /// seconds a node survives without observations
    pub expiry: f64,
    /// meters; centroid distance beyond which pairs are not related
    pub pairing_radius: f64,
    /// remove flagged edges after validation instead of only flagging them
    pub drop_violations: bool,
    pub intrinsics: CameraIntrinsics,
    pub depth_noise: DepthNoise,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            match_radius: 0.3,
            expiry: 2.0,
            pairing_radius: 3.0,
            drop_violations: false,
            intrinsics: CameraIntrinsics::default(),
            depth_noise: DepthNoise::default(),
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.match_radius >= 0.0) {
            return Err(GraphError::Config(format!("match_radius must be >= 0, got {}", self.match_radius)));
        }
        if !(self.expiry > 0.0) {
            return Err(GraphError::Config(format!("expiry must be > 0, got {}", self.expiry)));
        }
        if !(self.pairing_radius > 0.0) {
            return Err(GraphError::Config(format!(
                "pairing_radius must be > 0, got {}",
                self.pairing_radius
            )));
        }
        self.intrinsics.validate()?;
        Ok(())
    }
}

/// Running mean over `obs_count + 1` observations. Classes missing from one
/// side count as zero.
pub fn fuse_class(running: &ClassDistribution, obs_count: u64, incoming: &ClassDistribution) -> ClassDistribution {
    let n1 = (obs_count.max(1) + 1) as f64;
    let names: BTreeSet<&String> = running.entries().keys().chain(incoming.entries().keys()).collect();
    let mut fused: BTreeMap<String, f64> = names
        .into_iter()
        .map(|c| {
            let r = running.prob(c);
            (c.clone(), r + (incoming.prob(c) - r) / n1)
        })
        .collect();
    let sum: f64 = fused.values().sum();
    for p in fused.values_mut() {
        *p = (*p / sum).clamp(0.0, 1.0);
    }
    ClassDistribution::from_raw(fused)
}

/// Where each observation of a frame goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// existing node with the same track id
    Track(u64),
    /// existing node re-bound to a new track id
    Rebind(u64),
    New,
}

/// Assigns observations (with their world boxes) to nodes.
///
/// Track id is the primary key. An observation with an unseen track id
/// re-binds to the nearest unmatched node of the same argmax class whose
/// centroid lies within `match_radius`; otherwise it opens a new node.
pub fn associate(nodes: &[ObjectNode], observations: &[(TrackedObservation, Aabb3)], match_radius: f64) -> Vec<Assignment> {
    let by_track: BTreeMap<u64, u64> = nodes.iter().map(|n| (n.track_id, n.node_id)).collect();
    let mut out = vec![Assignment::New; observations.len()];
    let mut matched = BTreeSet::new();
    for (i, (obs, _)) in observations.iter().enumerate() {
        if let Some(&node) = by_track.get(&obs.track_id) {
            out[i] = Assignment::Track(node);
            matched.insert(node);
        }
    }
    let mut pending: Vec<usize> = (0..observations.len()).filter(|&i| out[i] == Assignment::New).collect();
    pending.sort_by_key(|&i| observations[i].0.track_id);
    for i in pending {
        let (obs, aabb) = &observations[i];
        let class = obs.class_dist.argmax();
        let c = aabb.center();
        let best = nodes
            .iter()
            .filter(|n| !matched.contains(&n.node_id) && n.class() == class)
            .map(|n| ((n.centroid - c).norm(), n.node_id))
            .filter(|(d, _)| *d <= match_radius)
            .min_by(|a, b| cmp_f64(a.0, b.0).then(a.1.cmp(&b.1)));
        if let Some((_, node)) = best {
            out[i] = Assignment::Rebind(node);
            matched.insert(node);
        }
    }
    out
}

/// Incremental graph construction, one synchronized frame at a time.
pub struct SceneGraphBuilder {
    config: GraphConfig,
    relations: Arc<dyn RelationModel>,
    nodes: Vec<ObjectNode>,
    next_node_id: u64,
    next_edge_id: u64,
    last_stamp: Option<Timestamp>,
}

impl SceneGraphBuilder {
    pub fn new(config: GraphConfig, relations: Arc<dyn RelationModel>) -> Result<Self, GraphError> {
        config.validate()?;
        Ok(SceneGraphBuilder {
            config,
            relations,
            nodes: Vec::new(),
            next_node_id: 1,
            next_edge_id: 1,
            last_stamp: None,
        })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn relations(&self) -> &Arc<dyn RelationModel> {
        &self.relations
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    /// Associates and fuses the frame, expires stale nodes, and recomputes
    /// every edge. Traces carry no ontology checks yet.
    pub fn update(&mut self, frame: &SyncedFrame) -> Result<SceneGraphSnapshot, GraphError> {
        let stamp = frame.frame_stamp;
        if let Some(last) = self.last_stamp {
            if stamp <= last {
                return Err(GraphError::Ordering { last, got: stamp });
            }
        }
        let k = &self.config.intrinsics;
        let boxed = frame
            .observations
            .iter()
            .map(|o| Ok((o.clone(), observation_to_world_aabb(o, &frame.pose, k)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        let assignment = associate(&self.nodes, &boxed, self.config.match_radius);

        for ((obs, aabb), a) in boxed.into_iter().zip(assignment) {
            let sigma = self.config.depth_noise.sigma(obs.depth)?;
            let obs_ref = ObservationRef {
                track_id: obs.track_id,
                stamp: obs.stamp,
                bbox: obs.bbox,
                depth: obs.depth,
            };
            match a {
                Assignment::Track(id) | Assignment::Rebind(id) => {
                    let n = self
                        .nodes
                        .iter_mut()
                        .find(|n| n.node_id == id)
                        .expect("assigned node exists");
                    n.fused_class = fuse_class(&n.fused_class, n.obs_count, &obs.class_dist);
                    n.obs_count += 1;
                    n.track_id = obs.track_id;
                    n.world_box = aabb;
                    n.centroid = aabb.center();
                    n.position_sigma = sigma;
                    n.last_seen = stamp;
                    n.last_observation = obs_ref;
                }
                Assignment::New => {
                    self.nodes.push(ObjectNode {
                        node_id: self.next_node_id,
                        track_id: obs.track_id,
                        fused_class: obs.class_dist.clone(),
                        obs_count: 1,
                        world_box: aabb,
                        centroid: aabb.center(),
                        position_sigma: sigma,
                        last_seen: stamp,
                        last_observation: obs_ref,
                    });
                    self.next_node_id += 1;
                }
            }
        }
        let expiry = self.config.expiry;
        self.nodes.retain(|n| stamp.seconds_since(n.last_seen) <= expiry);
        self.last_stamp = Some(stamp);

        let mut snapshot = SceneGraphSnapshot::empty(stamp);
        snapshot.nodes = self.nodes.clone();
        let bodies: Vec<Body> = self
            .nodes
            .iter()
            .map(|n| Body {
                aabb: n.world_box,
                sigma: n.position_sigma,
            })
            .collect();
        for (i, s) in self.nodes.iter().enumerate() {
            for (j, o) in self.nodes.iter().enumerate() {
                if i == j || (s.centroid - o.centroid).norm() > self.config.pairing_radius {
                    continue;
                }
                for cand in self.relations.relate(&bodies[i], &bodies[j]) {
                    let edge = RelationEdge {
                        edge_id: self.next_edge_id,
                        subject: s.node_id,
                        relation: cand.relation.clone(),
                        object: o.node_id,
                        confidence: cand.confidence,
                        trace_id: self.next_edge_id,
                        stamp,
                        violation_flags: Vec::new(),
                    };
                    self.next_edge_id += 1;
                    let provenance = Provenance {
                        pose_stamp: frame.pose.stamp,
                        subject_observation: s.last_observation,
                        object_observation: o.last_observation,
                    };
                    let trace = capture_trace(&edge, Some(&cand.record), Vec::new(), provenance)
                        .expect("record supplied");
                    snapshot.edges.push(edge);
                    snapshot.traces.push(trace);
                }
            }
        }
        Ok(snapshot)
    }
}

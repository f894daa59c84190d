use std::collections::{BTreeMap, BTreeSet};

use petgraph::graphmap::UnGraphMap;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::graph::{RelationEdge, SceneGraphSnapshot};
use crate::model::Timestamp;

/// Shannon entropy in bits of the relation-type frequencies.
pub fn relation_entropy(edges: &[RelationEdge]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in edges {
        *counts.entry(e.relation.as_str()).or_default() += 1;
    }
    entropy_bits(counts.values().copied())
}

/// Entropy in bits of a histogram; 0 for an empty one.
pub fn entropy_bits<I: IntoIterator<Item = usize>>(counts: I) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_degree: f64,
    pub clustering: f64,
}

/// Counts plus degree and clustering of the undirected simple projection
/// (reciprocal and parallel edges collapse, self-loops are ignored).
pub fn structural_complexity(snapshot: &SceneGraphSnapshot) -> Complexity {
    let mut g = UnGraphMap::<u64, ()>::new();
    for n in &snapshot.nodes {
        g.add_node(n.node_id);
    }
    for e in &snapshot.edges {
        if e.subject != e.object {
            g.add_edge(e.subject, e.object, ());
        }
    }
    let v = g.node_count();
    let avg_degree = if v == 0 {
        0.0
    } else {
        2.0 * g.edge_count() as f64 / v as f64
    };
    let mut local = Vec::new();
    for n in g.nodes() {
        let nbrs: Vec<u64> = g.neighbors(n).collect();
        let k = nbrs.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, a) in nbrs.iter().enumerate() {
            for b in &nbrs[i + 1..] {
                if g.contains_edge(*a, *b) {
                    links += 1;
                }
            }
        }
        local.push(2.0 * links as f64 / (k * (k - 1)) as f64);
    }
    let clustering = if local.is_empty() {
        0.0
    } else {
        local.iter().sum::<f64>() / local.len() as f64
    };
    Complexity {
        node_count: snapshot.nodes.len(),
        edge_count: snapshot.edges.len(),
        avg_degree,
        clustering,
    }
}

/// Jaccard similarity of (subject, relation, object) keys; 1 when both are empty.
pub fn stability(current: &[RelationEdge], previous: &[RelationEdge]) -> f64 {
    let a: BTreeSet<_> = current.iter().map(RelationEdge::key).collect();
    let b: BTreeSet<_> = previous.iter().map(RelationEdge::key).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrqiWeights {
    pub w_consistency: f64,
    pub w_entropy: f64,
    pub w_stability: f64,
}

impl Default for SrqiWeights {
    fn default() -> Self {
        SrqiWeights {
            w_consistency: 0.4,
            w_entropy: 0.3,
            w_stability: 0.3,
        }
    }
}

impl SrqiWeights {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let w = [self.w_consistency, self.w_entropy, self.w_stability];
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(AnalyticsError::Config(format!("SRQI weights must be non-negative, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AnalyticsError::Config(format!("SRQI weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// `w_c (1 - V) + w_e H / log2|R| + w_s S`.
pub fn srqi(
    mean_violation: f64,
    mean_entropy: f64,
    mean_stability: f64,
    weights: &SrqiWeights,
    vocabulary_size: usize,
) -> Result<f64, AnalyticsError> {
    weights.validate()?;
    if vocabulary_size < 2 {
        return Err(AnalyticsError::Config(format!(
            "vocabulary size must be >= 2 to normalize entropy, got {vocabulary_size}"
        )));
    }
    let h_max = (vocabulary_size as f64).log2();
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !in_unit(mean_violation) || !in_unit(mean_stability) || !(0.0..=h_max + 1e-12).contains(&mean_entropy) {
        return Err(AnalyticsError::Domain(format!(
            "SRQI inputs out of range: V={mean_violation}, H={mean_entropy}, S={mean_stability}"
        )));
    }
    let s = weights.w_consistency * (1.0 - mean_violation)
        + weights.w_entropy * (mean_entropy / h_max).min(1.0)
        + weights.w_stability * mean_stability;
    Ok(s.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    pub stamp: Timestamp,
    pub node_count: usize,
    pub edge_count: usize,
    pub violation_rate: f64,
    pub entropy: f64,
    pub avg_degree: f64,
    pub clustering: f64,
    /// against the previous snapshot; absent on the first tick
    pub stability: Option<f64>,
}

impl SnapshotMetrics {
    pub fn compute(snapshot: &SceneGraphSnapshot, previous: Option<&SceneGraphSnapshot>, violation_rate: f64) -> Self {
        let c = structural_complexity(snapshot);
        SnapshotMetrics {
            stamp: snapshot.stamp,
            node_count: c.node_count,
            edge_count: c.edge_count,
            violation_rate,
            entropy: relation_entropy(&snapshot.edges),
            avg_degree: c.avg_degree,
            clustering: c.clustering,
            stability: previous.map(|p| stability(&snapshot.edges, &p.edges)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fps: f64,
    pub trial_seed: u64,
    pub ticks: usize,
    pub violation_rate: f64,
    pub entropy: f64,
    pub node_count: f64,
    pub edge_count: f64,
    pub avg_degree: f64,
    pub clustering: f64,
    pub stability: f64,
    pub srqi: f64,
}

impl RunMetrics {
    /// Means over the run's ticks. Stability averages ticks that have a
    /// predecessor and is 1 for single-tick runs.
    pub fn aggregate(
        fps: f64,
        trial_seed: u64,
        ticks: &[SnapshotMetrics],
        weights: &SrqiWeights,
        vocabulary_size: usize,
    ) -> Result<Self, AnalyticsError> {
        let mean = |f: &dyn Fn(&SnapshotMetrics) -> f64| {
            if ticks.is_empty() {
                0.0
            } else {
                ticks.iter().map(f).sum::<f64>() / ticks.len() as f64
            }
        };
        let stab: Vec<f64> = ticks.iter().filter_map(|t| t.stability).collect();
        let stability = if stab.is_empty() {
            1.0
        } else {
            stab.iter().sum::<f64>() / stab.len() as f64
        };
        let violation_rate = mean(&|t| t.violation_rate);
        let entropy = mean(&|t| t.entropy);
        Ok(RunMetrics {
            fps,
            trial_seed,
            ticks: ticks.len(),
            violation_rate,
            entropy,
            node_count: mean(&|t| t.node_count as f64),
            edge_count: mean(&|t| t.edge_count as f64),
            avg_degree: mean(&|t| t.avg_degree),
            clustering: mean(&|t| t.clustering),
            stability,
            srqi: srqi(violation_rate, entropy, stability, weights, vocabulary_size)?,
        })
    }
}

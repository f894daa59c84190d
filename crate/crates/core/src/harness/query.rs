use std::fmt::Write;
use std::path::Path;

use super::{HarnessError, Stage};
use crate::explain::Explainer;
use crate::graph::{parse_snapshot_log, snapshot_record, GraphError, SceneGraphSnapshot, SemanticMemory};
use crate::model::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryTarget {
    /// latest snapshot at or before the instant
    At(Timestamp),
    Node(u64),
    Edge(u64),
}

/// Loads a snapshot log into memory.
pub fn load_memory(path: &Path) -> Result<SemanticMemory, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::new(Stage::Query, format!("cannot read {}: {e}", path.display())))?;
    let snapshots =
        parse_snapshot_log(&text).map_err(|e| HarnessError::new(Stage::Query, format!("{}: {e}", path.display())))?;
    snapshots
        .into_iter()
        .collect::<Result<SemanticMemory, GraphError>>()
        .map_err(|e| HarnessError::new(Stage::Query, format!("{}: {e}", path.display())))
}

/// Snapshot record for `At`, one line per stored state for `Node`, the
/// rendered explanation for `Edge`.
pub fn query(memory: &SemanticMemory, target: QueryTarget, explainer: &Explainer) -> Result<String, HarnessError> {
    match target {
        QueryTarget::At(t) => {
            let snap = memory.query(t).map_err(|e| match e {
                GraphError::NotFound(m) => HarnessError::not_found(Stage::Query, m),
                other => HarnessError::new(Stage::Query, other),
            })?;
            Ok(snapshot_record(&snap) + "\n")
        }
        QueryTarget::Node(id) => {
            let history = memory.node_history(id);
            if history.is_empty() {
                return Err(HarnessError::not_found(Stage::Query, format!("node {id} never appears")));
            }
            let mut s = String::from("stamp,class,track_id,obs_count,x,y,z\n");
            for (stamp, n) in history {
                let _ = writeln!(
                    s,
                    "{stamp},{},{},{},{},{},{}",
                    n.class(),
                    n.track_id,
                    n.obs_count,
                    n.centroid.x,
                    n.centroid.y,
                    n.centroid.z
                );
            }
            Ok(s)
        }
        QueryTarget::Edge(id) => {
            let snap = memory
                .find_edge(id)
                .ok_or_else(|| HarnessError::not_found(Stage::Query, format!("edge {id} not in the log")))?;
            let trace = snap
                .traces
                .iter()
                .find(|t| t.edge_id == id)
                .ok_or_else(|| HarnessError::new(Stage::Explain, format!("edge {id} has no trace")))?;
            let text = explainer.render(trace, &snap).map_err(|e| HarnessError::new(Stage::Explain, e))?;
            Ok(text.sentence + "\n")
        }
    }
}

/// Every edge of one snapshot rendered, one sentence per line prefixed by
/// the edge id.
pub fn explain_snapshot(snapshot: &SceneGraphSnapshot, explainer: &Explainer) -> Result<String, HarnessError> {
    let mut s = String::new();
    for e in &snapshot.edges {
        let trace = snapshot
            .traces
            .iter()
            .find(|t| t.edge_id == e.edge_id)
            .ok_or_else(|| HarnessError::new(Stage::Explain, format!("edge {} has no trace", e.edge_id)))?;
        let text = explainer.render(trace, snapshot).map_err(|e| HarnessError::new(Stage::Explain, e))?;
        let _ = writeln!(s, "[{}] {}", e.edge_id, text.sentence);
    }
    Ok(s)
}

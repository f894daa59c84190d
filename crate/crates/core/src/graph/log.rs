//! Snapshot log: one JSON object per line, one line per snapshot.
//!
//! Line layout: `{"stamp": s, "nodes": [...], "edges": [...], "traces": [...]}`
//! with stamps as decimal seconds. Floats are written in shortest round-trip
//! form, so parsing a line restores the snapshot exactly.

use std::io::Write;
use std::path::Path;

use super::{GraphError, SceneGraphSnapshot};

pub fn snapshot_record(snapshot: &SceneGraphSnapshot) -> String {
    serde_json::to_string(snapshot).expect("snapshot serializes")
}

pub fn write_snapshot_log<'a, W, I>(mut out: W, snapshots: I) -> Result<(), GraphError>
where
    W: Write,
    I: IntoIterator<Item = &'a SceneGraphSnapshot>,
{
    for s in snapshots {
        out.write_all(snapshot_record(s).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_snapshot_log(text: &str) -> Result<Vec<SceneGraphSnapshot>, GraphError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GraphError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_snapshot_log(path: &Path) -> Result<Vec<SceneGraphSnapshot>, GraphError> {
    parse_snapshot_log(&std::fs::read_to_string(path)?)
}

mod common;

use std::sync::Arc;

use semmap_core::graph::{parse_snapshot_log, snapshot_record, write_snapshot_log, GraphConfig, SceneGraphBuilder};
use semmap_core::ingest::{generate_synthetic, SensorSettings, SyntheticSceneSpec};
use semmap_core::model::Pose;
use semmap_core::pipeline::SyncedFrame;
use semmap_core::relations::RelationEngine;

const CUP_ON_TABLE: &str = r#"
duration = 1.0
native_rate = 10.0
seed = 5
depth_noise = { sigma0 = 0.0, k = 0.0 }

[camera]
position = [0.0, -3.0, 1.0]

[[objects]]
class = "table"
min = [-0.6, 0.6, 0.0]
max = [0.6, 1.4, 0.7]

[[objects]]
class = "cup"
min = [-0.1, 0.9, 0.7]
max = [-0.02, 0.98, 0.8]
"#;

fn run_scene(text: &str) -> Vec<semmap_core::graph::SceneGraphSnapshot> {
    let spec = SyntheticSceneSpec::from_toml(text).unwrap();
    let sensor = SensorSettings::default();
    let run = generate_synthetic(&spec, &sensor).unwrap();
    let mut builder = SceneGraphBuilder::new(GraphConfig::default(), Arc::new(RelationEngine::default())).unwrap();
    let poses = run.poses.poses();
    run.observations
        .frames()
        .iter()
        .map(|f| {
            let pose: Pose = *poses.iter().find(|p| p.stamp == f.stamp).unwrap();
            let frame = SyncedFrame {
                frame_stamp: f.stamp,
                pose,
                observations: f.observations.clone(),
                pose_gap: 0.0,
            };
            builder.update(&frame).unwrap()
        })
        .collect()
}

#[test]
fn cup_on_table() {
    let snaps = run_scene(CUP_ON_TABLE);
    let last = snaps.last().unwrap();
    assert_eq!(last.nodes.len(), 2);
    let class = |id: u64| last.node(id).unwrap().class().to_string();
    let triples: Vec<(String, String, String)> = last
        .edges
        .iter()
        .map(|e| (class(e.subject), e.relation.clone(), class(e.object)))
        .collect();
    assert!(triples.contains(&("cup".into(), "on_top_of".into(), "table".into())), "{triples:?}");
    assert!(!triples.iter().any(|t| t.0 == "table" && t.1 == "on_top_of"));
    assert_eq!(last.traces.len(), last.edges.len());
    last.check_integrity().unwrap();
}

#[test]
fn snapshot_log_round_trips_field_exactly() {
    let snaps = run_scene(CUP_ON_TABLE);
    let mut buf = Vec::new();
    write_snapshot_log(&mut buf, snaps.iter()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let parsed = parse_snapshot_log(&text).unwrap();
    assert_eq!(parsed, snaps);
    for (line, s) in text.lines().zip(&parsed) {
        assert_eq!(line, snapshot_record(s));
    }
}

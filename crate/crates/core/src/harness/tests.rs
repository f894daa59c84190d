use std::path::{Path, PathBuf};

use super::*;
use crate::explain::Explainer;
use crate::model::Timestamp;
use crate::pipeline::QosPolicy;

const SMALL_SCENE: &str = r#"
duration = 2.0
native_rate = 30.0
start_time = 1.0
seed = 3
depth_noise = { sigma0 = 0.0, k = 0.0 }

[[objects]]
class = "table"
min = [-0.6, 0.6, 0.0]
max = [0.6, 1.4, 0.7]

[[objects]]
class = "cup"
min = [-0.3, 0.9, 0.7]
max = [-0.22, 0.98, 0.8]

[[objects]]
class = "cabinet"
min = [1.0, 1.0, 0.0]
max = [1.6, 1.6, 0.9]

[[objects]]
class = "bowl"
min = [1.15, 1.2, 0.3]
max = [1.35, 1.4, 0.4]
"#;

const NOISY_SCENE: &str = r#"
duration = 3.0
native_rate = 30.0
seed = 11
detection_noise = 2.0
class_confusion = 0.3
dropout = 0.1
track_switch = 0.02

[camera]
sweep_amplitude = [1.0, 0.0, 0.0]
sweep_period = 2.0

[[objects]]
class = "table"
min = [-0.6, 0.6, 0.0]
max = [0.6, 1.4, 0.7]

[[objects]]
class = "cup"
min = [-0.3, 0.9, 0.7]
max = [-0.22, 0.98, 0.8]
confuser = "vase"

[[objects]]
class = "cabinet"
min = [1.0, 1.0, 0.0]
max = [1.6, 1.6, 0.9]

[[objects]]
class = "bowl"
min = [1.15, 1.2, 0.3]
max = [1.35, 1.4, 0.4]
"#;

fn scene_config(dir: &Path, scene: &str) -> RunConfig {
    let path = dir.join("scene.toml");
    std::fs::write(&path, scene).unwrap();
    RunConfig {
        synthetic: Some(path),
        timing: Timing::Off,
        ..RunConfig::default()
    }
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn config_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scene.toml"), SMALL_SCENE).unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "synthetic = \"scene.toml\"\nfps = 15.0\ntrials = 2\n[trials_per_fps]\n\"30\" = 5\n[qos.tracked_objects]\nreliability = \"reliable\"\nhistory_depth = 3\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.synthetic.as_deref(), Some(dir.path().join("scene.toml").as_path()));
    assert_eq!(cfg.fps, 15.0);
    assert_eq!(cfg.trials_for(30.0), 5);
    assert_eq!(cfg.trials_for(10.0), 2);
    assert_eq!(cfg.qos_table()["tracked_objects"], QosPolicy::reliable(3));
    assert_eq!(cfg.qos_table()["camera_pose"], QosPolicy::reliable(5));
    cfg.validate().unwrap();
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = RunConfig {
        synthetic: Some("a.toml".into()),
        seed: Some(9),
        ..RunConfig::default()
    };
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn missing_ontology_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), SMALL_SCENE);
    cfg.ontology = Some(dir.path().join("nope.toml"));
    let err = Session::new(cfg).err().unwrap();
    assert_eq!(err.stage, Stage::Config);
    assert!(err.to_string().starts_with("stage=config"));
    assert!(err.message.contains("nope.toml"), "{err}");
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = scene_config(dir.path(), SMALL_SCENE);
    let cases = [
        RunConfig { fps: 0.0, ..base.clone() },
        RunConfig { fps_list: vec![], ..base.clone() },
        RunConfig { trials: 0, ..base.clone() },
        RunConfig { synthetic: None, ..base.clone() },
        RunConfig {
            poses: Some("p.txt".into()),
            ..base.clone()
        },
    ];
    for c in cases {
        assert_eq!(c.validate().unwrap_err().stage, Stage::Config);
    }
    let unknown = RunConfig::from_toml("fpz = 3").unwrap_err();
    assert_eq!(unknown.stage, Stage::Config);
}

#[test]
fn noiseless_run_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::new(scene_config(dir.path(), SMALL_SCENE)).unwrap();
    let inputs = s.inputs(s.base_seed()).unwrap();
    let mut stabilities = Vec::new();
    let o = run_pipeline(&s, &inputs, 30.0, 3, &mut |_, t| {
        stabilities.push(t.metrics.stability);
        Ok(())
    })
    .unwrap();
    assert_eq!(o.metrics.violation_rate, 0.0);
    assert_eq!(o.metrics.stability, 1.0);
    assert_eq!(stabilities[0], None);
    assert!(stabilities[1..].iter().all(|s| *s == Some(1.0)));
    let f = o.fidelity.unwrap();
    assert_eq!((f.precision(), f.recall()), (1.0, 1.0));
    assert_eq!(f.exact_ticks, f.ticks);
    assert_eq!(o.coverage.ratio(), 1.0);
    assert_eq!(o.coverage.complete_traces, o.coverage.edges);
}

#[test]
fn run_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::new(scene_config(dir.path(), NOISY_SCENE)).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_to_dir(&s, &a).unwrap();
    run_to_dir(&s, &b).unwrap();
    let fa = files(&a);
    assert_eq!(
        fa.iter().map(|f| f.0.to_str().unwrap()).collect::<Vec<_>>(),
        ["drops.json", "metrics.csv", "report.json", "snapshots.jsonl", "traces.jsonl"]
    );
    assert_eq!(fa, files(&b));
}

#[test]
fn threaded_mode_matches_sequential_when_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), NOISY_SCENE);
    cfg.qos.insert("tracked_objects".into(), QosPolicy::reliable(4));
    let seq = Session::new(cfg.clone()).unwrap();
    cfg.mode = ExecutionMode::Threaded;
    let thr = Session::new(cfg).unwrap();
    let collect = |s: &Session| {
        let inputs = s.inputs(s.base_seed()).unwrap();
        let mut snaps = Vec::new();
        let o = run_pipeline(s, &inputs, 20.0, 0, &mut |snap, _| {
            snaps.push(snap.clone());
            Ok(())
        })
        .unwrap();
        (o, snaps)
    };
    let (a, sa) = collect(&seq);
    let (b, sb) = collect(&thr);
    assert!(!sa.is_empty());
    assert_eq!(sa, sb);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(b.drops.total_qos_drops(), 0);
}

#[test]
fn threaded_mode_reports_sink_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), SMALL_SCENE);
    cfg.mode = ExecutionMode::Threaded;
    let s = Session::new(cfg).unwrap();
    let inputs = s.inputs(0).unwrap();
    let mut n = 0;
    let err = run_pipeline(&s, &inputs, 30.0, 0, &mut |_, _| {
        n += 1;
        if n == 5 {
            Err(HarnessError::new(Stage::Output, "disk full"))
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert_eq!(err.stage, Stage::Output);
}

#[test]
fn drop_log_counts_subsampling() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::new(scene_config(dir.path(), SMALL_SCENE)).unwrap();
    let inputs = s.inputs(0).unwrap();
    let o = run_pipeline(&s, &inputs, 10.0, 0, &mut |_, _| Ok(())).unwrap();
    assert_eq!(o.frames_in, 21);
    assert_eq!(o.drops.subsample_rejections, 0);
    // every other 60 Hz tick finds no 30 Hz frame
    let o = run_pipeline(&s, &inputs, 60.0, 0, &mut |_, _| Ok(())).unwrap();
    assert_eq!(o.frames_in, 61);
    assert_eq!(o.drops.subsample_rejections, 60);
    assert_eq!(o.drops.total_qos_drops(), 0);
}

#[test]
fn single_trial_sweep_has_no_tests() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), SMALL_SCENE);
    cfg.trials = 1;
    cfg.fps_list = vec![10.0, 30.0];
    let s = Session::new(cfg).unwrap();
    let r = sweep(&s, None).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.tests.is_empty());
    assert!(r.notes.iter().any(|n| n.contains("no Kruskal-Wallis output")));
    write_sweep_outputs(&r, &dir.path().join("out")).unwrap();
    assert!(!dir.path().join("out/kruskal_wallis.csv").exists());
}

#[test]
fn single_condition_sweep_aggregates_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), NOISY_SCENE);
    cfg.trials = 3;
    cfg.fps_list = vec![15.0];
    let s = Session::new(cfg).unwrap();
    let r = sweep(&s, None).unwrap();
    assert_eq!(r.aggregates.len(), 1);
    assert_eq!(r.aggregates[0].trials, 3);
    assert!(r.tests.is_empty());
    let seeds: Vec<u64> = r.rows.iter().map(|x| x.seed).collect();
    assert_eq!(seeds, [11, 12, 13]);
}

#[test]
fn sweep_outputs_and_runs_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scene_config(dir.path(), NOISY_SCENE);
    cfg.trials = 2;
    cfg.fps_list = vec![10.0, 15.0, 30.0];
    cfg.trials_per_fps.insert("30".into(), 3);
    let s = Session::new(cfg).unwrap();
    let r = sweep(&s, None).unwrap();
    assert_eq!(r.rows.len(), 2 + 2 + 3);
    let out = dir.path().join("out");
    write_sweep_outputs(&r, &out).unwrap();
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(summary.lines().count(), 4);
    let kw = std::fs::read_to_string(out.join("kruskal_wallis.csv")).unwrap();
    // omnibus plus three pairs, for three metrics
    assert_eq!(kw.lines().count(), 1 + 3 * 4);
    for f in ["srqi_vs_fps.svg", "violation_entropy.svg", "kde_srqi.csv", "violation_entropy.csv", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rows = read_runs_csv(&out.join("runs.csv")).unwrap();
    assert_eq!(rows, r.rows);
    let again = aggregate_rows(&r.fps_list, &rows);
    assert_eq!(again, r.aggregates);
}

fn memory_fixture(dir: &Path) -> (crate::graph::SemanticMemory, PathBuf) {
    let s = Session::new(scene_config(dir, SMALL_SCENE)).unwrap();
    let run = dir.join("run");
    run_to_dir(&s, &run).unwrap();
    let log = run.join("snapshots.jsonl");
    (load_memory(&log).unwrap(), log)
}

#[test]
fn query_by_instant_node_and_edge() {
    let dir = tempfile::tempdir().unwrap();
    let (mem, _) = memory_fixture(dir.path());
    let ex = Explainer::default();
    let third = &mem.snapshots()[3];
    let text = query(&mem, QueryTarget::At(third.stamp), &ex).unwrap();
    assert_eq!(text.trim_end(), crate::graph::snapshot_record(third));
    let between = Timestamp::from_micros(third.stamp.micros() + 1).unwrap();
    assert_eq!(query(&mem, QueryTarget::At(between), &ex).unwrap(), text);

    let early = Timestamp::from_micros(mem.snapshots()[0].stamp.micros() - 1).unwrap();
    let err = query(&mem, QueryTarget::At(early), &ex).unwrap_err();
    assert!(err.is_not_found());

    let node = third.nodes[0].node_id;
    let hist = query(&mem, QueryTarget::Node(node), &ex).unwrap();
    assert_eq!(hist.lines().count(), 1 + mem.len());
    assert!(query(&mem, QueryTarget::Node(9999), &ex).unwrap_err().is_not_found());

    let edge = third.edges.iter().find(|e| e.relation == "on_top_of").unwrap();
    let sentence = query(&mem, QueryTarget::Edge(edge.edge_id), &ex).unwrap();
    assert!(sentence.starts_with("The cup is on top of the table because"), "{sentence}");
    assert!(query(&mem, QueryTarget::Edge(u64::MAX), &ex).unwrap_err().is_not_found());

    let all = explain_snapshot(third, &ex).unwrap();
    assert_eq!(all.lines().count(), third.edges.len());
    assert!(all.contains("The bowl is inside the cabinet because"));
}

#[test]
fn corrupt_log_is_not_a_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    std::fs::write(&p, "{not json}\n").unwrap();
    let err = load_memory(&p).unwrap_err();
    assert!(!err.is_not_found());
    assert_eq!(err.stage, Stage::Query);
}

#[test]
fn svg_is_deterministic() {
    let s = vec![Series {
        name: "a < b".into(),
        style: SeriesStyle::Line,
        points: vec![(10.0, 0.5), (30.0, 0.7)],
    }];
    let a = line_chart("t", "x", "y", &s);
    assert_eq!(a, line_chart("t", "x", "y", &s));
    assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    assert!(a.contains("<polyline") && a.contains("a &lt; b"));
    let empty = line_chart("t", "x", "y", &[]);
    assert!(empty.contains("</svg>"));
}

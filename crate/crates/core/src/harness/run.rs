use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExecutionMode, Session, Timing};
use super::{at, HarnessError, Stage};
use crate::analytics::{mean_std, quantile, RunMetrics, SnapshotMetrics};
use crate::explain::{ReasoningTrace, TraceCoverage};
use crate::graph::{snapshot_record, SceneGraphBuilder, SceneGraphSnapshot};
use crate::ingest::{GroundTruthFrame, ObservationStream, PoseStream, Triple};
use crate::model::{Pose, Timestamp};
use crate::ontology::violation_rate;
use crate::pipeline::{
    subsample_with_stats, synchronize, Bus, DropLog, Subscriber, SyncedFrame, CAMERA_POSE, SCENE_GRAPH,
    TRACKED_OBJECTS,
};
use crate::relations::RelationModel;

/// Streams for one trial.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub poses: Arc<PoseStream>,
    pub observations: Arc<ObservationStream>,
    pub ground_truth: Option<Arc<Vec<GroundTruthFrame>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub metrics: SnapshotMetrics,
    /// graph update + validation + metrics, milliseconds
    pub latency_ms: f64,
}

/// Micro-averaged agreement of emitted triples with the ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// ticks whose triple sets match exactly
    pub exact_ticks: u64,
    pub ticks: u64,
}

impl Fidelity {
    pub fn precision(&self) -> f64 {
        let d = self.true_positives + self.false_positives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.true_positives + self.false_negatives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub drops: DropLog,
    pub coverage: TraceCoverage,
    pub fidelity: Option<Fidelity>,
    pub frames_in: usize,
    pub frames_processed: usize,
    pub latency_ms_mean: f64,
    pub latency_ms_p95: f64,
    pub peak_nodes: usize,
    pub peak_edges: usize,
    pub ticks: Vec<SnapshotMetrics>,
}

/// Emitted triples named through the ground-truth track table; nodes whose
/// track is unknown get a `node{id}` placeholder.
pub fn frame_triples(snapshot: &SceneGraphSnapshot, truth: &GroundTruthFrame) -> BTreeSet<Triple> {
    let names: BTreeMap<u64, String> = snapshot
        .nodes
        .iter()
        .map(|n| {
            let name = truth
                .tracks
                .get(&n.track_id)
                .cloned()
                .unwrap_or_else(|| format!("node{}", n.node_id));
            (n.node_id, name)
        })
        .collect();
    snapshot
        .edges
        .iter()
        .map(|e| Triple {
            subject: names[&e.subject].clone(),
            relation: e.relation.clone(),
            object: names[&e.object].clone(),
        })
        .collect()
}

enum Message {
    Pose(Pose),
    Frame(SyncedFrame),
    Snapshot(Box<(SceneGraphSnapshot, TickRecord)>),
}

/// Graph stage state: builder, validation and metrics for one run.
struct GraphStage<'a> {
    session: &'a Session,
    builder: SceneGraphBuilder,
    previous: Option<SceneGraphSnapshot>,
    pending_poses: Vec<Pose>,
}

impl<'a> GraphStage<'a> {
    fn new(session: &'a Session) -> Result<Self, HarnessError> {
        let relations: Arc<dyn RelationModel> = session.engine.clone();
        Ok(GraphStage {
            session,
            builder: SceneGraphBuilder::new(session.config.graph, relations).map_err(at(Stage::Graph))?,
            previous: None,
            pending_poses: Vec::new(),
        })
    }

    /// Drains the pose topic and checks the frame's pose has arrived.
    fn take_pose(&mut self, poses: &Subscriber<Message>, frame: &SyncedFrame) -> Result<(), HarnessError> {
        while let Some(m) = poses.try_recv() {
            if let Message::Pose(p) = m {
                self.pending_poses.push(p);
            }
        }
        let stamp = frame.pose.stamp;
        self.pending_poses.retain(|p| p.stamp >= stamp);
        if self.pending_poses.first().map(|p| p.stamp) != Some(stamp) {
            return Err(HarnessError::new(
                Stage::Bus,
                format!("pose {stamp} for frame {} never arrived", frame.frame_stamp),
            ));
        }
        Ok(())
    }

    fn process(&mut self, frame: &SyncedFrame) -> Result<(SceneGraphSnapshot, TickRecord), HarnessError> {
        let started = Instant::now();
        let mut snap = self.builder.update(frame).map_err(at(Stage::Graph))?;
        let reports = self.session.ontology.annotate(&mut snap).map_err(at(Stage::Validate))?;
        let vr = violation_rate(&snap, &reports);
        if self.session.config.graph.drop_violations {
            snap.remove_flagged();
        }
        snap.check_integrity().map_err(at(Stage::Graph))?;
        let metrics = SnapshotMetrics::compute(&snap, self.previous.as_ref(), vr);
        let latency_ms = match self.session.config.timing {
            Timing::Wall => started.elapsed().as_secs_f64() * 1e3,
            Timing::Off => 0.0,
        };
        self.previous = Some(snap.clone());
        Ok((snap, TickRecord { metrics, latency_ms }))
    }
}

struct Collector<'g> {
    ticks: Vec<SnapshotMetrics>,
    latencies: Vec<f64>,
    coverage: TraceCoverage,
    fidelity: Option<Fidelity>,
    truth: Option<BTreeMap<Timestamp, &'g GroundTruthFrame>>,
    peak_nodes: usize,
    peak_edges: usize,
}

impl<'g> Collector<'g> {
    fn new(truth: Option<&'g [GroundTruthFrame]>) -> Self {
        Collector {
            ticks: Vec::new(),
            latencies: Vec::new(),
            coverage: TraceCoverage::default(),
            fidelity: truth.map(|_| Fidelity::default()),
            truth: truth.map(|t| t.iter().map(|f| (f.stamp, f)).collect()),
            peak_nodes: 0,
            peak_edges: 0,
        }
    }

    fn accept(&mut self, snap: &SceneGraphSnapshot, tick: &TickRecord, session: &Session) {
        self.coverage.merge(&TraceCoverage::of(snap, session.engine.config()));
        self.peak_nodes = self.peak_nodes.max(snap.nodes.len());
        self.peak_edges = self.peak_edges.max(snap.edges.len());
        if let (Some(fid), Some(truth)) = (self.fidelity.as_mut(), self.truth.as_ref()) {
            if let Some(gt) = truth.get(&snap.stamp) {
                let emitted = frame_triples(snap, gt);
                let expected: BTreeSet<Triple> = gt.relations.iter().cloned().collect();
                let tp = emitted.intersection(&expected).count() as u64;
                fid.true_positives += tp;
                fid.false_positives += emitted.len() as u64 - tp;
                fid.false_negatives += expected.len() as u64 - tp;
                fid.exact_ticks += u64::from(emitted == expected);
                fid.ticks += 1;
            }
        }
        self.ticks.push(tick.metrics);
        self.latencies.push(tick.latency_ms);
    }
}

/// Runs ingest → subsample → synchronize → graph update → validate →
/// metrics for one trial. `sink` sees every snapshot in order.
pub fn run_pipeline(
    session: &Session,
    inputs: &Inputs,
    fps: f64,
    trial_seed: u64,
    sink: &mut dyn FnMut(&SceneGraphSnapshot, &TickRecord) -> Result<(), HarnessError>,
) -> Result<RunOutcome, HarnessError> {
    if !(fps > 0.0) {
        return Err(HarnessError::new(Stage::Subsample, format!("fps must be > 0, got {fps}")));
    }
    let cfg = &session.config;
    let (stream, rejected) = subsample_with_stats(&inputs.observations, fps);
    let (frames, mut drops) = synchronize(&stream, &inputs.poses, cfg.sync_gate).map_err(at(Stage::Sync))?;
    drops.subsample_rejections = rejected;

    let bus: Bus<Message> = Bus::with_policies(&cfg.qos_table()).map_err(at(Stage::Bus))?;
    let objects = bus.subscribe(TRACKED_OBJECTS).map_err(at(Stage::Bus))?;
    let poses = bus.subscribe(CAMERA_POSE).map_err(at(Stage::Bus))?;
    let graphs = bus.subscribe(SCENE_GRAPH).map_err(at(Stage::Bus))?;
    let mut stage = GraphStage::new(session)?;
    let mut collector = Collector::new(inputs.ground_truth.as_deref().map(Vec::as_slice));

    match cfg.mode {
        ExecutionMode::Sequential => {
            for frame in &frames {
                bus.publish(CAMERA_POSE, Message::Pose(frame.pose)).map_err(at(Stage::Bus))?;
                bus.publish(TRACKED_OBJECTS, Message::Frame(frame.clone()))
                    .map_err(at(Stage::Bus))?;
                while let Some(Message::Frame(f)) = objects.try_recv() {
                    stage.take_pose(&poses, &f)?;
                    let out = stage.process(&f)?;
                    bus.publish(SCENE_GRAPH, Message::Snapshot(Box::new(out)))
                        .map_err(at(Stage::Bus))?;
                }
                while let Some(Message::Snapshot(b)) = graphs.try_recv() {
                    let (snap, tick) = *b;
                    collector.accept(&snap, &tick, session);
                    sink(&snap, &tick)?;
                }
            }
        }
        ExecutionMode::Threaded => {
            std::thread::scope(|scope| -> Result<(), HarnessError> {
                let bus = &bus;
                let frames = &frames;
                let producer = scope.spawn(move || -> Result<(), HarnessError> {
                    for frame in frames {
                        bus.publish(CAMERA_POSE, Message::Pose(frame.pose)).map_err(at(Stage::Bus))?;
                        bus.publish(TRACKED_OBJECTS, Message::Frame(frame.clone()))
                            .map_err(at(Stage::Bus))?;
                    }
                    bus.close(TRACKED_OBJECTS).map_err(at(Stage::Bus))?;
                    bus.close(CAMERA_POSE).map_err(at(Stage::Bus))
                });
                let stage = &mut stage;
                let worker = scope.spawn(move || -> Result<(), HarnessError> {
                    let result = (|| -> Result<(), HarnessError> {
                        while let Some(m) = objects.recv() {
                            if let Message::Frame(f) = m {
                                stage.take_pose(&poses, &f)?;
                                let out = stage.process(&f)?;
                                bus.publish(SCENE_GRAPH, Message::Snapshot(Box::new(out)))
                                    .map_err(at(Stage::Bus))?;
                            }
                        }
                        Ok(())
                    })();
                    // unblock the other stages whatever happened
                    bus.close_all();
                    result
                });
                let mut sink_result = Ok(());
                while let Some(m) = graphs.recv() {
                    if let Message::Snapshot(b) = m {
                        let (snap, tick) = *b;
                        collector.accept(&snap, &tick, session);
                        if let Err(e) = sink(&snap, &tick) {
                            sink_result = Err(e);
                            bus.close_all();
                            break;
                        }
                    }
                }
                let joined = |h: std::thread::ScopedJoinHandle<'_, Result<(), HarnessError>>| {
                    h.join()
                        .unwrap_or_else(|_| Err(HarnessError::new(Stage::Bus, "pipeline thread panicked")))
                };
                let produced = joined(producer);
                let worked = joined(worker);
                // the first failure is the root cause; later stages only see closed topics
                sink_result.and(worked).and(produced)
            })?;
        }
    }
    drops.qos_drops = bus.drop_counts();

    let metrics = RunMetrics::aggregate(fps, trial_seed, &collector.ticks, &cfg.srqi, cfg.vocabulary.len())
        .map_err(at(Stage::Metrics))?;
    let (latency_ms_mean, _) = mean_std(&collector.latencies);
    Ok(RunOutcome {
        metrics,
        drops,
        coverage: collector.coverage,
        fidelity: collector.fidelity,
        frames_in: stream.len(),
        frames_processed: collector.ticks.len(),
        latency_ms_mean,
        latency_ms_p95: quantile(&collector.latencies, 0.95),
        peak_nodes: collector.peak_nodes,
        peak_edges: collector.peak_edges,
        ticks: collector.ticks,
    })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    stamp: Timestamp,
    #[serde(flatten)]
    trace: &'a ReasoningTrace,
}

#[derive(Serialize)]
struct MetricsRow {
    stamp: f64,
    node_count: usize,
    edge_count: usize,
    violation_rate: f64,
    entropy: f64,
    avg_degree: f64,
    clustering: f64,
    stability: Option<f64>,
    latency_ms: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    fps: f64,
    seed: u64,
    metrics: &'a RunMetrics,
    drops: &'a DropLog,
    coverage: &'a TraceCoverage,
    trace_coverage_ratio: f64,
    fidelity: &'a Option<Fidelity>,
    frames_in: usize,
    frames_processed: usize,
    latency_ms_mean: f64,
    latency_ms_p95: f64,
    peak_nodes: usize,
    peak_edges: usize,
    peak_snapshot_bytes: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", path.display())))
}

/// One run with the full artifact set written to `dir`: snapshot log, trace
/// log, drop log, per-tick metrics CSV and a JSON report.
pub fn run_to_dir(session: &Session, dir: &Path) -> Result<RunOutcome, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", dir.display())))?;
    let seed = session.base_seed();
    let inputs = session.inputs(seed)?;
    let mut snapshots = create(dir, "snapshots.jsonl")?;
    let mut traces = create(dir, "traces.jsonl")?;
    let mut metrics = csv::Writer::from_writer(create(dir, "metrics.csv")?);
    let mut peak_bytes = 0usize;
    fn out<E: std::fmt::Display>(e: E) -> HarnessError {
        HarnessError::new(Stage::Output, e)
    }
    let outcome = run_pipeline(session, &inputs, session.config.fps, seed, &mut |snap, tick| {
        let line = snapshot_record(snap);
        peak_bytes = peak_bytes.max(line.len());
        writeln!(snapshots, "{line}").map_err(out)?;
        for t in &snap.traces {
            let rec = serde_json::to_string(&TraceLine { stamp: snap.stamp, trace: t }).map_err(out)?;
            writeln!(traces, "{rec}").map_err(out)?;
        }
        let m = &tick.metrics;
        metrics
            .serialize(MetricsRow {
                stamp: m.stamp.as_secs_f64(),
                node_count: m.node_count,
                edge_count: m.edge_count,
                violation_rate: m.violation_rate,
                entropy: m.entropy,
                avg_degree: m.avg_degree,
                clustering: m.clustering,
                stability: m.stability,
                latency_ms: tick.latency_ms,
            })
            .map_err(out)
    })?;
    snapshots.flush().map_err(out)?;
    traces.flush().map_err(out)?;
    metrics.flush().map_err(out)?;

    let drops = serde_json::to_string_pretty(&outcome.drops).map_err(out)?;
    std::fs::write(dir.join("drops.json"), drops + "\n").map_err(out)?;
    let report = RunReport {
        fps: session.config.fps,
        seed,
        metrics: &outcome.metrics,
        drops: &outcome.drops,
        coverage: &outcome.coverage,
        trace_coverage_ratio: outcome.coverage.ratio(),
        fidelity: &outcome.fidelity,
        frames_in: outcome.frames_in,
        frames_processed: outcome.frames_processed,
        latency_ms_mean: outcome.latency_ms_mean,
        latency_ms_p95: outcome.latency_ms_p95,
        peak_nodes: outcome.peak_nodes,
        peak_edges: outcome.peak_edges,
        peak_snapshot_bytes: peak_bytes,
    };
    let report = serde_json::to_string_pretty(&report).map_err(out)?;
    std::fs::write(dir.join("report.json"), report + "\n").map_err(out)?;
    Ok(outcome)
}

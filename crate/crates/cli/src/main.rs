//! `semmap`: batch replay, frame-rate sweeps and snapshot-log inspection.
//!
//! Exit codes: 0 success, 1 a stage failed (the diagnostic names it),
//! 2 usage error, 3 the queried item does not exist.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use semmap_core::explain::Explainer;
use semmap_core::graph::SceneGraphSnapshot;
use semmap_core::harness::{
    self, aggregate_rows, explain_snapshot, load_memory, pairwise_tests, read_runs_csv, HarnessError, QueryTarget,
    RunConfig, Session, Stage, SweepReport,
};
use semmap_core::ingest::{
    generate_synthetic, write_ground_truth, write_observations, write_trajectory, SensorSettings, SyntheticSceneSpec,
};
use semmap_core::model::Timestamp;
use semmap_core::ontology::{violation_rate, Ontology};

#[derive(Parser)]
#[command(name = "semmap", version, about = "Replay-driven semantic scene-graph mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run at a single frame rate; writes logs and per-tick metrics.
    Run(Common),
    /// Every frame rate in the list with repeated trials; writes the summary,
    /// statistics and charts.
    Sweep(Common),
    /// Generates pose, observation and ground-truth files from a scene spec.
    Synth(Common),
    /// Recomputes aggregates and Kruskal-Wallis tests from a runs.csv.
    Stats(StatsArgs),
    /// Looks up a snapshot, a node history or an edge explanation.
    Query(QueryArgs),
    /// Prints the explanation of every edge in one snapshot.
    Explain(ExplainArgs),
    /// Parses an ontology and optionally validates a snapshot log against it.
    ValidateOntology(OntologyArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// TUM trajectory file
    #[arg(long)]
    poses: Option<PathBuf>,
    /// observation file (one JSON record per line)
    #[arg(long)]
    observations: Option<PathBuf>,
    /// synthetic scene spec
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    fps: Option<f64>,
    /// comma-separated frame rates
    #[arg(long, value_delimiter = ',')]
    fps_list: Option<Vec<f64>>,
    /// trials per frame rate
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// runs.csv written by `sweep`, or the sweep's output directory
    #[arg(long)]
    out: PathBuf,
    /// condition order; defaults to the order rows appear in
    #[arg(long, value_delimiter = ',')]
    fps_list: Option<Vec<f64>>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["at", "node", "edge"])))]
struct QueryArgs {
    /// snapshot log
    log: PathBuf,
    /// seconds; latest snapshot at or before
    #[arg(long)]
    at: Option<f64>,
    #[arg(long)]
    node: Option<u64>,
    #[arg(long)]
    edge: Option<u64>,
}

#[derive(Args)]
struct ExplainArgs {
    /// snapshot log
    log: PathBuf,
    /// seconds; defaults to the last snapshot
    #[arg(long, conflicts_with = "edge")]
    at: Option<f64>,
    #[arg(long)]
    edge: Option<u64>,
}

#[derive(Args)]
struct OntologyArgs {
    /// defaults to the built-in ontology
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// run configuration whose vocabulary must be covered
    #[arg(long)]
    config: Option<PathBuf>,
    /// snapshot log to re-validate
    #[arg(long)]
    snapshots: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => run(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Synth(c) => synth(&c),
        Command::Stats(a) => stats(&a),
        Command::Query(a) => query(&a),
        Command::Explain(a) => explain(&a),
        Command::ValidateOntology(a) => validate_ontology(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_not_found() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

type Outcome = Result<ExitCode, HarnessError>;

/// Config file (if any) with command-line overrides. Input flags replace
/// the configured input source as a whole.
fn config(c: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if c.synthetic.is_some() || c.poses.is_some() || c.observations.is_some() {
        cfg.synthetic = c.synthetic.clone();
        cfg.poses = c.poses.clone();
        cfg.observations = c.observations.clone();
    }
    if let Some(o) = &c.ontology {
        cfg.ontology = Some(o.clone());
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = c.fps {
        cfg.fps = f;
    }
    if let Some(l) = &c.fps_list {
        cfg.fps_list = l.clone();
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
        cfg.trials_per_fps.clear();
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(c: &Common) -> Outcome {
    let cfg = config(c)?;
    let dir = out_dir(&cfg, "out/run");
    let session = Session::new(cfg)?;
    let o = harness::run_to_dir(&session, &dir)?;
    let m = &o.metrics;
    println!(
        "fps={} ticks={} SRQI={:.4} violation_rate={:.4} entropy={:.4} stability={:.4} nodes={:.2} edges={:.2}",
        m.fps, m.ticks, m.srqi, m.violation_rate, m.entropy, m.stability, m.node_count, m.edge_count
    );
    println!(
        "latency_ms mean={:.3} p95={:.3}; drops: stale_pose={} qos={} subsample={}",
        o.latency_ms_mean,
        o.latency_ms_p95,
        o.drops.stale_pose_drops,
        o.drops.total_qos_drops(),
        o.drops.subsample_rejections
    );
    if let Some(f) = o.fidelity {
        println!("ground truth: precision={:.4} recall={:.4}", f.precision(), f.recall());
    }
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn print_report(r: &SweepReport) {
    println!(
        "{:>6} {:>7} {:>8} {:>8} {:>9} {:>7} {:>8} {:>8}",
        "FPS", "trials", "SRQI", "viol", "entropy", "stab", "lat_ms", "p95_ms"
    );
    for a in &r.aggregates {
        println!(
            "{:>6} {:>7} {:>8.4} {:>8.4} {:>9.4} {:>7.4} {:>8.3} {:>8.3}",
            a.fps,
            a.trials,
            a.mean_of("srqi"),
            a.mean_of("violation_rate"),
            a.mean_of("entropy"),
            a.mean_of("stability"),
            a.mean_of("latency_ms_mean"),
            a.mean_of("latency_ms_p95"),
        );
    }
    for t in r.tests.iter().filter(|t| t.metric == "srqi") {
        match (t.fps_a, t.fps_b) {
            (Some(a), Some(b)) => println!("Kruskal-Wallis SRQI {a} vs {b}: H={:.3} p={:.4}", t.h, t.p_value),
            _ => println!("Kruskal-Wallis SRQI all: H={:.3} p={:.4}", t.h, t.p_value),
        }
    }
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn sweep(c: &Common) -> Outcome {
    let cfg = config(c)?;
    let dir = out_dir(&cfg, "out/sweep");
    let session = Session::new(cfg)?;
    let report = harness::sweep(&session, Some(&dir))?;
    harness::write_sweep_outputs(&report, &dir)?;
    print_report(&report);
    println!("wrote {}", dir.display());
    for f in &report.failures {
        eprintln!("error: fps={} trial={} seed={}: {}", f.fps, f.trial, f.seed, f.error);
    }
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", p.display())))
}

fn synth(c: &Common) -> Outcome {
    let cfg = config(c)?;
    let path = cfg
        .synthetic
        .clone()
        .ok_or_else(|| HarnessError::new(Stage::Config, "synth needs --synthetic"))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| HarnessError::new(Stage::Config, format!("{}: {e}", path.display())))?;
    let mut spec = SyntheticSceneSpec::from_toml(&text)
        .map_err(|e| HarnessError::new(Stage::Ingest, format!("{}: {e}", path.display())))?;
    if let Some(s) = cfg.seed {
        spec.seed = s;
    }
    cfg.predicates.validate().map_err(|e| HarnessError::new(Stage::Config, e))?;
    let sensor = SensorSettings {
        intrinsics: cfg.graph.intrinsics,
        relations: semmap_core::relations::RelationEngine::with_config(cfg.predicates)
            .map_err(|e| HarnessError::new(Stage::Config, e))?,
        pairing_radius: cfg.graph.pairing_radius,
    };
    let run = generate_synthetic(&spec, &sensor).map_err(|e| HarnessError::new(Stage::Ingest, e))?;
    let dir = out_dir(&cfg, "out/synth");
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", dir.display())))?;
    write(&dir, "poses.txt", &write_trajectory(&run.poses))?;
    write(&dir, "observations.jsonl", &write_observations(&run.observations))?;
    write(&dir, "ground_truth.jsonl", &write_ground_truth(&run.ground_truth))?;
    println!(
        "seed={} poses={} frames={} wrote {}",
        spec.seed,
        run.poses.len(),
        run.observations.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn stats(a: &StatsArgs) -> Outcome {
    let path = if a.out.is_dir() { a.out.join("runs.csv") } else { a.out.clone() };
    let rows = read_runs_csv(&path)?;
    if rows.is_empty() {
        return Err(HarnessError::new(Stage::Stats, format!("{} has no rows", path.display())));
    }
    let fps_list = a.fps_list.clone().unwrap_or_else(|| {
        let mut seen: Vec<f64> = Vec::new();
        for r in &rows {
            if !seen.contains(&r.fps) {
                seen.push(r.fps);
            }
        }
        seen
    });
    let mut notes = Vec::new();
    let report = SweepReport {
        aggregates: aggregate_rows(&fps_list, &rows),
        tests: pairwise_tests(&fps_list, &rows, &mut notes),
        fps_list,
        rows,
        failures: vec![],
        notes,
        drops: Default::default(),
        ticks: vec![],
    };
    print_report(&report);
    Ok(ExitCode::SUCCESS)
}

fn stamp(secs: f64) -> Result<Timestamp, HarnessError> {
    Timestamp::from_secs_f64(secs).map_err(|e| HarnessError::new(Stage::Query, e))
}

fn query(a: &QueryArgs) -> Outcome {
    let memory = load_memory(&a.log)?;
    let target = match (a.at, a.node, a.edge) {
        (Some(t), _, _) => QueryTarget::At(stamp(t)?),
        (_, Some(n), _) => QueryTarget::Node(n),
        (_, _, Some(e)) => QueryTarget::Edge(e),
        _ => unreachable!("clap requires one target"),
    };
    print!("{}", harness::query(&memory, target, &Explainer::default())?);
    Ok(ExitCode::SUCCESS)
}

fn explain(a: &ExplainArgs) -> Outcome {
    let memory = load_memory(&a.log)?;
    let explainer = Explainer::default();
    if let Some(e) = a.edge {
        print!("{}", harness::query(&memory, QueryTarget::Edge(e), &explainer)?);
        return Ok(ExitCode::SUCCESS);
    }
    let snap = match a.at {
        Some(t) => memory
            .query(stamp(t)?)
            .map_err(|e| HarnessError::not_found(Stage::Query, e))?,
        None => memory
            .snapshots()
            .last()
            .cloned()
            .ok_or_else(|| HarnessError::not_found(Stage::Query, "snapshot log is empty"))?,
    };
    println!("snapshot {}: {} nodes, {} edges", snap.stamp, snap.nodes.len(), snap.edges.len());
    print!("{}", explain_snapshot(&snap, &explainer)?);
    Ok(ExitCode::SUCCESS)
}

fn validate_ontology(a: &OntologyArgs) -> Outcome {
    let err = |e: &dyn std::fmt::Display| HarnessError::new(Stage::Validate, e);
    let ontology = match &a.ontology {
        Some(p) => Ontology::load(p).map_err(|e| err(&format!("{}: {e}", p.display())))?,
        None => Ontology::default_ontology(),
    };
    println!(
        "ontology ok: {} classes, {} relations, {} axioms",
        ontology.classes().count(),
        ontology.relation_names().count(),
        ontology.axioms().len()
    );
    for ax in ontology.axioms() {
        println!("  {ax}");
    }
    if let Some(c) = &a.config {
        let cfg = RunConfig::load(c)?;
        ontology.covers(&cfg.vocabulary).map_err(|e| err(&e))?;
        println!("vocabulary of {} covered", c.display());
    }
    if let Some(log) = &a.snapshots {
        let memory = load_memory(log)?;
        let (mut edges, mut flagged) = (0usize, 0usize);
        let mut rates = Vec::new();
        for s in memory.snapshots() {
            let snap: &SceneGraphSnapshot = s;
            let reports = ontology.validate(snap).map_err(|e| err(&e))?;
            edges += snap.edges.len();
            flagged += reports.len();
            rates.push(violation_rate(snap, &reports));
        }
        let mean = if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        println!(
            "{} snapshots, {edges} edges, {flagged} flagged, mean violation rate {mean:.4}",
            memory.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

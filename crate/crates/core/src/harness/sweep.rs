use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Session;
use super::report::{line_chart, Series, SeriesStyle};
use super::run::{run_pipeline, Inputs, RunOutcome};
use super::{at, HarnessError, Stage};
use crate::analytics::{kde, kruskal_wallis, linspace, mean_std, silverman_bandwidth, SnapshotMetrics};
use crate::graph::snapshot_record;
use crate::pipeline::DropLog;

pub const SUMMARY_HEADER: [&str; 11] = [
    "FPS",
    "SRQI",
    "violation_rate",
    "entropy",
    "node_count",
    "edge_count",
    "avg_degree",
    "clustering",
    "stability",
    "latency_ms_mean",
    "latency_ms_p95",
];

/// One (fps, trial) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub fps: f64,
    pub trial: usize,
    pub seed: u64,
    pub ticks: usize,
    pub srqi: f64,
    pub violation_rate: f64,
    pub entropy: f64,
    pub stability: f64,
    pub node_count: f64,
    pub edge_count: f64,
    pub avg_degree: f64,
    pub clustering: f64,
    pub latency_ms_mean: f64,
    pub latency_ms_p95: f64,
    pub stale_pose_drops: u64,
    pub qos_drops: u64,
    pub subsample_rejections: u64,
}

impl RunRow {
    fn new(fps: f64, trial: usize, seed: u64, o: &RunOutcome) -> Self {
        let m = &o.metrics;
        RunRow {
            fps,
            trial,
            seed,
            ticks: m.ticks,
            srqi: m.srqi,
            violation_rate: m.violation_rate,
            entropy: m.entropy,
            stability: m.stability,
            node_count: m.node_count,
            edge_count: m.edge_count,
            avg_degree: m.avg_degree,
            clustering: m.clustering,
            latency_ms_mean: o.latency_ms_mean,
            latency_ms_p95: o.latency_ms_p95,
            stale_pose_drops: o.drops.stale_pose_drops,
            qos_drops: o.drops.total_qos_drops(),
            subsample_rejections: o.drops.subsample_rejections,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "srqi" => self.srqi,
            "violation_rate" => self.violation_rate,
            "entropy" => self.entropy,
            "stability" => self.stability,
            "node_count" => self.node_count,
            "edge_count" => self.edge_count,
            "avg_degree" => self.avg_degree,
            "clustering" => self.clustering,
            "latency_ms_mean" => self.latency_ms_mean,
            "latency_ms_p95" => self.latency_ms_p95,
            _ => return None,
        })
    }
}

/// Per-condition mean and sample standard deviation. Latency p95 is the
/// mean of per-run p95 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fps: f64,
    pub trials: usize,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

impl Aggregate {
    pub fn mean_of(&self, metric: &str) -> f64 {
        self.mean.get(metric).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub metric: String,
    /// `None` for the omnibus test over all conditions
    pub fps_a: Option<f64>,
    pub fps_b: Option<f64>,
    pub h: f64,
    pub p_value: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub fps: f64,
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub fps_list: Vec<f64>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
    pub tests: Vec<PairwiseTest>,
    pub failures: Vec<SweepFailure>,
    pub notes: Vec<String>,
    pub drops: DropLog,
    #[serde(skip)]
    pub ticks: Vec<(f64, usize, Vec<SnapshotMetrics>)>,
}

impl SweepReport {
    pub fn aggregate(&self, fps: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.fps == fps)
    }

    pub fn test(&self, metric: &str, a: f64, b: f64) -> Option<&PairwiseTest> {
        self.tests.iter().find(|t| {
            t.metric == metric
                && (t.fps_a == Some(a) && t.fps_b == Some(b) || t.fps_a == Some(b) && t.fps_b == Some(a))
        })
    }

    pub fn samples(&self, fps: f64, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.fps == fps)
            .filter_map(|r| r.metric(metric))
            .collect()
    }
}

const AGGREGATED: [&str; 10] = [
    "srqi",
    "violation_rate",
    "entropy",
    "node_count",
    "edge_count",
    "avg_degree",
    "clustering",
    "stability",
    "latency_ms_mean",
    "latency_ms_p95",
];

const TESTED: [&str; 3] = ["srqi", "violation_rate", "entropy"];

/// Aggregates in `fps_list` order; conditions without rows are skipped.
pub fn aggregate_rows(fps_list: &[f64], rows: &[RunRow]) -> Vec<Aggregate> {
    fps_list
        .iter()
        .filter_map(|&fps| {
            let group: Vec<&RunRow> = rows.iter().filter(|r| r.fps == fps).collect();
            if group.is_empty() {
                return None;
            }
            let mut mean = BTreeMap::new();
            let mut std = BTreeMap::new();
            for m in AGGREGATED {
                let v: Vec<f64> = group.iter().filter_map(|r| r.metric(m)).collect();
                let (mu, sd) = mean_std(&v);
                mean.insert(m.to_string(), mu);
                std.insert(m.to_string(), sd);
            }
            Some(Aggregate {
                fps,
                trials: group.len(),
                mean,
                std,
            })
        })
        .collect()
}

/// Omnibus and pairwise Kruskal-Wallis tests. Conditions with fewer than two
/// samples are excluded; the reasons go to `notes`.
pub fn pairwise_tests(fps_list: &[f64], rows: &[RunRow], notes: &mut Vec<String>) -> Vec<PairwiseTest> {
    let groups: Vec<(f64, Vec<&RunRow>)> = fps_list
        .iter()
        .map(|&f| (f, rows.iter().filter(|r| r.fps == f).collect()))
        .collect();
    let usable: Vec<&(f64, Vec<&RunRow>)> = groups.iter().filter(|(_, g)| g.len() >= 2).collect();
    for (f, g) in &groups {
        if g.len() < 2 {
            notes.push(format!(
                "fps {f}: {} successful trial(s); excluded from Kruskal-Wallis tests (insufficient samples)",
                g.len()
            ));
        }
    }
    if usable.len() < 2 {
        notes.push("fewer than two conditions with >= 2 trials; no Kruskal-Wallis output".into());
        return Vec::new();
    }
    let mut out = Vec::new();
    for metric in TESTED {
        let values = |g: &[&RunRow]| g.iter().filter_map(|r| r.metric(metric)).collect::<Vec<f64>>();
        if usable.len() > 2 {
            let all: Vec<Vec<f64>> = usable.iter().map(|(_, g)| values(g)).collect();
            if let Ok(kw) = kruskal_wallis(&all) {
                out.push(PairwiseTest {
                    metric: metric.into(),
                    fps_a: None,
                    fps_b: None,
                    h: kw.h,
                    p_value: kw.p_value,
                    df: kw.df,
                });
            }
        }
        for (i, (fa, ga)) in usable.iter().map(|x| (x.0, &x.1)).enumerate() {
            for (fb, gb) in usable[i + 1..].iter().map(|x| (x.0, &x.1)) {
                match kruskal_wallis(&[values(ga), values(gb)]) {
                    Ok(kw) => out.push(PairwiseTest {
                        metric: metric.into(),
                        fps_a: Some(fa),
                        fps_b: Some(fb),
                        h: kw.h,
                        p_value: kw.p_value,
                        df: kw.df,
                    }),
                    Err(e) => notes.push(format!("{metric} {fa} vs {fb}: {e}")),
                }
            }
        }
    }
    out
}

fn run_dir(out: &Path, fps: f64, trial: usize) -> PathBuf {
    out.join("runs").join(format!("fps{fps}_trial{trial}"))
}

/// Every (fps, trial) combination, trials in parallel. Trial `i` uses seed
/// `base + i` at every frame rate, so conditions share their input streams.
/// Failed runs are recorded and the sweep continues.
pub fn sweep(session: &Session, out: Option<&Path>) -> Result<SweepReport, HarnessError> {
    let cfg = &session.config;
    let fps_list = cfg.fps_list.clone();
    let max_trials = fps_list.iter().map(|&f| cfg.trials_for(f)).max().unwrap_or(0);
    let base = session.base_seed();
    let keep = cfg.keep_snapshots.then_some(out).flatten();

    let inputs: Vec<Result<Inputs, HarnessError>> = (0..max_trials)
        .into_par_iter()
        .map(|t| session.inputs(base.wrapping_add(t as u64)))
        .collect();
    let jobs: Vec<(f64, usize)> = fps_list
        .iter()
        .flat_map(|&f| (0..cfg.trials_for(f)).map(move |t| (f, t)))
        .collect();

    let results: Vec<Result<RunOutcome, HarnessError>> = jobs
        .par_iter()
        .map(|&(fps, trial)| {
            let seed = base.wrapping_add(trial as u64);
            let input = inputs[trial].as_ref().map_err(Clone::clone)?;
            match keep {
                Some(dir) => {
                    let dir = run_dir(dir, fps, trial);
                    std::fs::create_dir_all(&dir).map_err(at(Stage::Output))?;
                    let file = File::create(dir.join("snapshots.jsonl")).map_err(at(Stage::Output))?;
                    let mut w = BufWriter::new(file);
                    let outcome = run_pipeline(session, input, fps, seed, &mut |snap, _| {
                        writeln!(w, "{}", snapshot_record(snap)).map_err(at(Stage::Output))
                    })?;
                    w.flush().map_err(at(Stage::Output))?;
                    Ok(outcome)
                }
                None => run_pipeline(session, input, fps, seed, &mut |_, _| Ok(())),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut ticks = Vec::new();
    let mut drops = DropLog::default();
    for (&(fps, trial), result) in jobs.iter().zip(results) {
        let seed = base.wrapping_add(trial as u64);
        match result {
            Ok(o) => {
                rows.push(RunRow::new(fps, trial, seed, &o));
                drops.merge(&o.drops);
                ticks.push((fps, trial, o.ticks));
            }
            Err(e) => failures.push(SweepFailure {
                fps,
                trial,
                seed,
                error: e.to_string(),
            }),
        }
    }
    let mut notes = Vec::new();
    let aggregates = aggregate_rows(&fps_list, &rows);
    let tests = pairwise_tests(&fps_list, &rows, &mut notes);
    Ok(SweepReport {
        fps_list,
        rows,
        aggregates,
        tests,
        failures,
        notes,
        drops,
        ticks,
    })
}

#[derive(Serialize)]
struct SummaryRow {
    #[serde(rename = "FPS")]
    fps: f64,
    #[serde(rename = "SRQI")]
    srqi: f64,
    violation_rate: f64,
    entropy: f64,
    node_count: f64,
    edge_count: f64,
    avg_degree: f64,
    clustering: f64,
    stability: f64,
    latency_ms_mean: f64,
    latency_ms_p95: f64,
}

#[derive(Serialize)]
struct TestRow<'a> {
    metric: &'a str,
    fps_a: String,
    fps_b: String,
    h: f64,
    p_value: f64,
    df: usize,
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<File>, HarnessError> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", path.display())))
}

/// Writes summary, per-run, aggregate, test, scatter, density and chart
/// files plus `report.json`.
pub fn write_sweep_outputs(report: &SweepReport, dir: &Path) -> Result<(), HarnessError> {
    fn out<E: std::fmt::Display>(e: E) -> HarnessError {
        HarnessError::new(Stage::Output, e)
    }
    std::fs::create_dir_all(dir).map_err(at(Stage::Output))?;

    let mut w = csv_writer(dir, "summary.csv")?;
    for a in &report.aggregates {
        let m = |k: &str| a.mean_of(k);
        w.serialize(SummaryRow {
            fps: a.fps,
            srqi: m("srqi"),
            violation_rate: m("violation_rate"),
            entropy: m("entropy"),
            node_count: m("node_count"),
            edge_count: m("edge_count"),
            avg_degree: m("avg_degree"),
            clustering: m("clustering"),
            stability: m("stability"),
            latency_ms_mean: m("latency_ms_mean"),
            latency_ms_p95: m("latency_ms_p95"),
        })
        .map_err(out)?;
    }
    if report.aggregates.is_empty() {
        w.write_record(SUMMARY_HEADER).map_err(out)?;
    }
    w.flush().map_err(out)?;

    let mut w = csv_writer(dir, "runs.csv")?;
    for r in &report.rows {
        w.serialize(r).map_err(out)?;
    }
    w.flush().map_err(out)?;

    let mut w = csv_writer(dir, "aggregates.csv")?;
    let mut header = vec!["fps".to_string(), "trials".to_string()];
    for m in AGGREGATED {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).map_err(out)?;
    for a in &report.aggregates {
        let mut rec = vec![a.fps.to_string(), a.trials.to_string()];
        for m in AGGREGATED {
            rec.push(a.mean[m].to_string());
            rec.push(a.std[m].to_string());
        }
        w.write_record(&rec).map_err(out)?;
    }
    w.flush().map_err(out)?;

    if !report.tests.is_empty() {
        let mut w = csv_writer(dir, "kruskal_wallis.csv")?;
        let label = |f: Option<f64>| f.map(|x| x.to_string()).unwrap_or_else(|| "all".into());
        for t in &report.tests {
            w.serialize(TestRow {
                metric: &t.metric,
                fps_a: label(t.fps_a),
                fps_b: label(t.fps_b),
                h: t.h,
                p_value: t.p_value,
                df: t.df,
            })
            .map_err(out)?;
        }
        w.flush().map_err(out)?;
    }

    let mut w = csv_writer(dir, "srqi_vs_fps.csv")?;
    w.write_record(["fps", "trials", "srqi_mean", "srqi_std", "violation_rate_mean", "entropy_mean"])
        .map_err(out)?;
    for a in &report.aggregates {
        w.write_record([
            a.fps.to_string(),
            a.trials.to_string(),
            a.mean["srqi"].to_string(),
            a.std["srqi"].to_string(),
            a.mean["violation_rate"].to_string(),
            a.mean["entropy"].to_string(),
        ])
        .map_err(out)?;
    }
    w.flush().map_err(out)?;

    let mut w = csv_writer(dir, "violation_entropy.csv")?;
    w.write_record(["fps", "trial", "stamp", "violation_rate", "entropy"])
        .map_err(out)?;
    for (fps, trial, ticks) in &report.ticks {
        for t in ticks {
            w.write_record([
                fps.to_string(),
                trial.to_string(),
                t.stamp.as_secs_f64().to_string(),
                t.violation_rate.to_string(),
                t.entropy.to_string(),
            ])
            .map_err(out)?;
        }
    }
    w.flush().map_err(out)?;

    let mut notes = report.notes.clone();
    write_kde(report, dir, &mut notes)?;
    write_charts(report, dir)?;

    let mut full = report.clone();
    full.notes = notes;
    let json = serde_json::to_string_pretty(&full).map_err(out)?;
    write_file(dir, "report.json", &(json + "\n"))
}

fn write_kde(report: &SweepReport, dir: &Path, notes: &mut Vec<String>) -> Result<(), HarnessError> {
    fn out<E: std::fmt::Display>(e: E) -> HarnessError {
        HarnessError::new(Stage::Output, e)
    }
    let mut curves = Vec::new();
    for a in &report.aggregates {
        let s = report.samples(a.fps, "srqi");
        match silverman_bandwidth(&s) {
            Ok(h) => curves.push((a.fps, s, h)),
            Err(e) => notes.push(format!("fps {}: no SRQI density ({e})", a.fps)),
        }
    }
    let mut w = csv_writer(dir, "kde_srqi.csv")?;
    w.write_record(["fps", "srqi", "density"]).map_err(out)?;
    if !curves.is_empty() {
        let lo = curves
            .iter()
            .map(|(_, s, h)| s.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h)
            .fold(f64::INFINITY, f64::min);
        let hi = curves
            .iter()
            .map(|(_, s, h)| s.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h)
            .fold(f64::NEG_INFINITY, f64::max);
        let grid = linspace(lo, hi, 200);
        for (fps, s, h) in &curves {
            let d = kde(s, &grid, Some(*h)).map_err(out)?;
            for (x, y) in grid.iter().zip(d) {
                w.write_record([fps.to_string(), x.to_string(), y.to_string()])
                    .map_err(out)?;
            }
        }
    }
    w.flush().map_err(out)
}

fn write_charts(report: &SweepReport, dir: &Path) -> Result<(), HarnessError> {
    let trend = Series {
        name: "mean SRQI".into(),
        style: SeriesStyle::Line,
        points: report
            .aggregates
            .iter()
            .map(|a| (a.fps, a.mean_of("srqi")))
            .collect(),
    };
    let trials = Series {
        name: "trials".into(),
        style: SeriesStyle::Points,
        points: report.rows.iter().map(|r| (r.fps, r.srqi)).collect(),
    };
    write_file(
        dir,
        "srqi_vs_fps.svg",
        &line_chart("SRQI vs frame rate", "FPS", "SRQI", &[trials, trend]),
    )?;
    let scatter: Vec<Series> = report
        .fps_list
        .iter()
        .map(|&f| Series {
            name: format!("{f} FPS"),
            style: SeriesStyle::Points,
            points: report
                .ticks
                .iter()
                .filter(|(fps, _, _)| *fps == f)
                .flat_map(|(_, _, t)| t.iter().map(|m| (m.entropy, m.violation_rate)))
                .collect(),
        })
        .collect();
    write_file(
        dir,
        "violation_entropy.svg",
        &line_chart("Violation rate vs relation entropy", "entropy (bits)", "violation rate", &scatter),
    )
}

/// Rows back from a `runs.csv` file.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::new(Stage::Stats, format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<RunRow>, _>>()
        .map_err(|e| HarnessError::new(Stage::Stats, format!("{}: {e}", path.display())))
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{at, HarnessError, Stage};
use crate::analytics::SrqiWeights;
use crate::graph::GraphConfig;
use crate::ingest::{
    parse_observations, parse_trajectory, ObservationStream, PoseConvention, PoseStream, SensorSettings,
    SyntheticSceneSpec,
};
use crate::ontology::Ontology;
use crate::pipeline::{QosPolicy, DEFAULT_SYNC_GATE};
use crate::relations::{PredicateConfig, PredicateRegistry, RelationEngine, RelationVocabulary};

pub const DEFAULT_FPS_LIST: [f64; 5] = [10.0, 15.0, 20.0, 30.0, 60.0];

/// Whether per-tick latency is measured. `Off` writes zeros so every output
/// file is a pure function of the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    Off,
}

/// `Sequential` drives every stage on one thread in topic order.
/// `Threaded` runs producer, graph stage and sink on separate threads
/// connected by the bus, so best-effort topics may drop under load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Threaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub poses: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    /// synthetic scene spec; used instead of poses and observations
    pub synthetic: Option<PathBuf>,
    /// defaults to the built-in ontology
    pub ontology: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fps: f64,
    /// base seed; trial `i` uses `seed + i`. Defaults to the scene's seed.
    pub seed: Option<u64>,
    pub pose_convention: PoseConvention,
    /// seconds
    pub sync_gate: f64,
    pub timing: Timing,
    pub mode: ExecutionMode,
    pub fps_list: Vec<f64>,
    pub trials: usize,
    /// per-condition trial counts keyed by the fps value, e.g. `"30" = 100`
    pub trials_per_fps: BTreeMap<String, usize>,
    /// sweeps also write one snapshot log per (fps, trial)
    pub keep_snapshots: bool,
    pub vocabulary: RelationVocabulary,
    pub predicates: PredicateConfig,
    pub graph: GraphConfig,
    pub srqi: SrqiWeights,
    /// overrides of the default topic policies
    pub qos: BTreeMap<String, QosPolicy>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            poses: None,
            observations: None,
            synthetic: None,
            ontology: None,
            out: None,
            fps: 30.0,
            seed: None,
            pose_convention: PoseConvention::default(),
            sync_gate: DEFAULT_SYNC_GATE,
            timing: Timing::default(),
            mode: ExecutionMode::default(),
            fps_list: DEFAULT_FPS_LIST.to_vec(),
            trials: 10,
            trials_per_fps: BTreeMap::new(),
            keep_snapshots: false,
            vocabulary: RelationVocabulary::default(),
            predicates: PredicateConfig::default(),
            graph: GraphConfig::default(),
            srqi: SrqiWeights::default(),
            qos: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(at(Stage::Config))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::new(Stage::Config, format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.poses,
            &mut cfg.observations,
            &mut cfg.synthetic,
            &mut cfg.ontology,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Default topic policies with configured overrides applied.
    pub fn qos_table(&self) -> BTreeMap<String, QosPolicy> {
        let mut t = QosPolicy::defaults();
        t.extend(self.qos.iter().map(|(k, v)| (k.clone(), *v)));
        t
    }

    pub fn trials_for(&self, fps: f64) -> usize {
        self.trials_per_fps
            .iter()
            .find(|(k, _)| k.parse::<f64>().is_ok_and(|v| v == fps))
            .map(|(_, &n)| n)
            .unwrap_or(self.trials)
    }

    /// Value checks plus existence of every referenced file.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::new(Stage::Config, m));
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        if self.fps_list.is_empty() {
            return bad("fps_list is empty".into());
        }
        if let Some(f) = self.fps_list.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            return bad(format!("fps_list entries must be > 0, got {f}"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        for (k, &n) in &self.trials_per_fps {
            if k.parse::<f64>().is_err() {
                return bad(format!("trials_per_fps key '{k}' is not a number"));
            }
            if n == 0 {
                return bad(format!("trials_per_fps.{k} must be >= 1"));
            }
        }
        if !(self.sync_gate > 0.0) {
            return bad(format!("sync_gate must be > 0, got {}", self.sync_gate));
        }
        self.predicates.validate().map_err(at(Stage::Config))?;
        self.graph.validate().map_err(at(Stage::Config))?;
        self.srqi.validate().map_err(at(Stage::Config))?;
        if self.vocabulary.len() < 2 {
            return bad("vocabulary needs at least 2 relations".into());
        }
        for (topic, p) in self.qos_table() {
            p.validate()
                .map_err(|e| HarnessError::new(Stage::Config, format!("qos.{topic}: {e}")))?;
        }
        match (&self.synthetic, &self.poses, &self.observations) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            (Some(_), _, _) => return bad("give either a synthetic scene or poses and observations, not both".into()),
            (None, _, _) => return bad("input missing: need a synthetic scene or both poses and observations".into()),
        }
        let files = [
            ("synthetic scene", &self.synthetic),
            ("poses", &self.poses),
            ("observations", &self.observations),
            ("ontology", &self.ontology),
        ];
        for (what, p) in files {
            if let Some(p) = p {
                if !p.is_file() {
                    return bad(format!("{what} file not found: {}", p.display()));
                }
            }
        }
        Ok(())
    }
}

enum Source {
    Synthetic(SyntheticSceneSpec),
    Replay { poses: Arc<PoseStream>, observations: Arc<ObservationStream> },
}

/// A validated configuration with its ontology, relation engine and input
/// source loaded. Shared read-only across trials.
pub struct Session {
    pub config: RunConfig,
    pub ontology: Arc<Ontology>,
    pub engine: Arc<RelationEngine>,
    source: Source,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let ontology = match &config.ontology {
            Some(p) => Ontology::load(p).map_err(|e| HarnessError::new(Stage::Config, format!("{}: {e}", p.display())))?,
            None => Ontology::default_ontology(),
        };
        ontology.covers(&config.vocabulary).map_err(at(Stage::Config))?;
        let engine = RelationEngine::new(
            &PredicateRegistry::with_builtins(),
            config.vocabulary.clone(),
            config.predicates,
        )
        .map_err(at(Stage::Config))?;
        let source = match (&config.synthetic, &config.poses, &config.observations) {
            (Some(s), _, _) => {
                let text = std::fs::read_to_string(s).map_err(at(Stage::Ingest))?;
                let spec = SyntheticSceneSpec::from_toml(&text)
                    .map_err(|e| HarnessError::new(Stage::Ingest, format!("{}: {e}", s.display())))?;
                spec.validate().map_err(at(Stage::Ingest))?;
                Source::Synthetic(spec)
            }
            (None, Some(p), Some(o)) => {
                let read = |path: &Path| {
                    std::fs::read_to_string(path)
                        .map_err(|e| HarnessError::new(Stage::Ingest, format!("{}: {e}", path.display())))
                };
                let poses = parse_trajectory(&read(p)?)
                    .and_then(|ps| config.pose_convention.apply(&ps))
                    .map_err(|e| HarnessError::new(Stage::Ingest, format!("{}: {e}", p.display())))?;
                let observations = parse_observations(&read(o)?)
                    .map_err(|e| HarnessError::new(Stage::Ingest, format!("{}: {e}", o.display())))?;
                Source::Replay {
                    poses: Arc::new(poses),
                    observations: Arc::new(observations),
                }
            }
            _ => unreachable!("validated above"),
        };
        Ok(Session {
            config,
            ontology: Arc::new(ontology),
            engine: Arc::new(engine),
            source,
        })
    }

    /// Sensor settings consistent with the pipeline's geometry.
    pub fn sensor(&self) -> SensorSettings {
        SensorSettings {
            intrinsics: self.config.graph.intrinsics,
            relations: (*self.engine).clone(),
            pairing_radius: self.config.graph.pairing_radius,
        }
    }

    pub fn scene(&self) -> Option<&SyntheticSceneSpec> {
        match &self.source {
            Source::Synthetic(s) => Some(s),
            Source::Replay { .. } => None,
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.config
            .seed
            .unwrap_or_else(|| self.scene().map(|s| s.seed).unwrap_or(0))
    }

    /// Input streams for one seed. Replayed files ignore the seed.
    pub fn inputs(&self, seed: u64) -> Result<super::Inputs, HarnessError> {
        match &self.source {
            Source::Synthetic(spec) => {
                let mut spec = spec.clone();
                spec.seed = seed;
                let run = crate::ingest::generate_synthetic(&spec, &self.sensor()).map_err(at(Stage::Ingest))?;
                Ok(super::Inputs {
                    poses: Arc::new(run.poses),
                    observations: Arc::new(run.observations),
                    ground_truth: Some(Arc::new(run.ground_truth)),
                })
            }
            Source::Replay { poses, observations } => Ok(super::Inputs {
                poses: Arc::clone(poses),
                observations: Arc::clone(observations),
                ground_truth: None,
            }),
        }
    }
}

//! Reasoning traces and their rendering into explanation sentences.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ObservationRef, RelationEdge, SceneGraphSnapshot};
use crate::model::Timestamp;
use crate::ontology::OntologyCheck;
use crate::relations::{Condition, PredicateConfig, PredicateRecord, PredicateRegistry, Quantity, RelationPredicate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("edge {0} has no predicate record")]
    IncompleteEvidence(u64),
    #[error("trace {trace_id}: {message}")]
    Integrity { trace_id: u64, message: String },
    #[error("no predicate registered for relation '{0}'")]
    UnknownPredicate(String),
    #[error("phrase table: {0}")]
    PhraseTable(String),
}

/// Frame-level provenance of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub pose_stamp: Timestamp,
    pub subject_observation: ObservationRef,
    pub object_observation: ObservationRef,
}

/// Evidence behind one edge, frozen at emission time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub trace_id: u64,
    pub edge_id: u64,
    pub subject: u64,
    pub relation: String,
    pub object: u64,
    pub predicate: String,
    pub measurements: Vec<Quantity>,
    pub thresholds: Vec<Quantity>,
    pub conditions: Vec<Condition>,
    /// subject observation first
    pub observations: Vec<ObservationRef>,
    pub pose_stamp: Timestamp,
    #[serde(default)]
    pub ontology_checks: Vec<OntologyCheck>,
    pub margin: f64,
    pub sigma_subject: f64,
    pub sigma_object: f64,
    pub confidence_scale: f64,
    pub confidence: f64,
}

impl ReasoningTrace {
    pub fn record(&self) -> PredicateRecord {
        PredicateRecord {
            predicate: self.predicate.clone(),
            measurements: self.measurements.clone(),
            thresholds: self.thresholds.clone(),
            conditions: self.conditions.clone(),
            margin: self.margin,
            sigma_subject: self.sigma_subject,
            sigma_object: self.sigma_object,
            confidence_scale: self.confidence_scale,
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &OntologyCheck> {
        self.ontology_checks.iter().filter(|c| !c.passed)
    }

    /// Every numeric value the trace carries.
    pub fn numbers(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .measurements
            .iter()
            .chain(&self.thresholds)
            .map(|q| q.value)
            .collect();
        v.extend([self.margin, self.sigma_subject, self.sigma_object, self.confidence_scale, self.confidence]);
        v.extend([self.trace_id, self.edge_id, self.subject, self.object].map(|x| x as f64));
        v.extend(
            self.ontology_checks
                .iter()
                .flat_map(|c| c.counterpart_edge_ids.iter().map(|&id| id as f64)),
        );
        v
    }
}

pub fn capture_trace(
    edge: &RelationEdge,
    record: Option<&PredicateRecord>,
    ontology_checks: Vec<OntologyCheck>,
    provenance: Provenance,
) -> Result<ReasoningTrace, ExplainError> {
    let r = record.ok_or(ExplainError::IncompleteEvidence(edge.edge_id))?;
    if r.predicate != edge.relation || r.measurements.is_empty() && r.conditions.is_empty() {
        return Err(ExplainError::IncompleteEvidence(edge.edge_id));
    }
    Ok(ReasoningTrace {
        trace_id: edge.trace_id,
        edge_id: edge.edge_id,
        subject: edge.subject,
        relation: edge.relation.clone(),
        object: edge.object,
        predicate: r.predicate.clone(),
        measurements: r.measurements.clone(),
        thresholds: r.thresholds.clone(),
        conditions: r.conditions.clone(),
        observations: vec![provenance.subject_observation, provenance.object_observation],
        pose_stamp: provenance.pose_stamp,
        ontology_checks,
        margin: r.margin,
        sigma_subject: r.sigma_subject,
        sigma_object: r.sigma_object,
        confidence_scale: r.confidence_scale,
        confidence: edge.confidence,
    })
}

/// Every threshold named in the trace exists in `config` with the same value.
pub fn thresholds_match(trace: &ReasoningTrace, config: &PredicateConfig) -> bool {
    trace
        .thresholds
        .iter()
        .all(|t| config.threshold(&t.name) == Some(t.value))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationText {
    pub sentence: String,
    pub trace_id: u64,
}

/// Relation name to the phrase used in sentences. Editable; loads from a
/// TOML table such as `on_top_of = "on"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseTable(BTreeMap<String, String>);

impl PhraseTable {
    pub fn from_registry(registry: &PredicateRegistry) -> Self {
        PhraseTable(
            registry
                .names()
                .filter_map(|n| registry.get(n).ok().map(|p| (n.to_string(), p.phrase().to_string())))
                .collect(),
        )
    }

    pub fn from_toml(text: &str) -> Result<Self, ExplainError> {
        toml::from_str(text).map_err(|e| ExplainError::PhraseTable(e.to_string()))
    }

    pub fn set(&mut self, relation: &str, phrase: &str) {
        self.0.insert(relation.to_string(), phrase.to_string());
    }

    pub fn get(&self, relation: &str) -> Option<&str> {
        self.0.get(relation).map(String::as_str)
    }

    /// Overrides entries with those of `other`.
    pub fn merge(&mut self, other: PhraseTable) {
        self.0.extend(other.0);
    }
}

impl Default for PhraseTable {
    fn default() -> Self {
        Self::from_registry(&PredicateRegistry::with_builtins())
    }
}

/// Renders traces against the predicates that produced them.
#[derive(Clone)]
pub struct Explainer {
    registry: PredicateRegistry,
    phrases: PhraseTable,
}

impl Default for Explainer {
    fn default() -> Self {
        Explainer::new(PredicateRegistry::with_builtins(), PhraseTable::default())
    }
}

impl Explainer {
    pub fn new(registry: PredicateRegistry, phrases: PhraseTable) -> Self {
        Explainer { registry, phrases }
    }

    pub fn phrases_mut(&mut self) -> &mut PhraseTable {
        &mut self.phrases
    }

    fn predicate(&self, name: &str) -> Result<Arc<dyn RelationPredicate>, ExplainError> {
        self.registry
            .get(name)
            .map_err(|_| ExplainError::UnknownPredicate(name.to_string()))
    }

    /// "The {subject} is {phrase} the {object} because {clause}." with a
    /// conflict clause appended for flagged edges.
    pub fn render(&self, trace: &ReasoningTrace, snapshot: &SceneGraphSnapshot) -> Result<ExplanationText, ExplainError> {
        let integrity = |message: String| ExplainError::Integrity {
            trace_id: trace.trace_id,
            message,
        };
        let edge = snapshot
            .edge(trace.edge_id)
            .ok_or_else(|| integrity(format!("edge {} not in snapshot", trace.edge_id)))?;
        if edge.trace_id != trace.trace_id || edge.subject != trace.subject || edge.object != trace.object {
            return Err(integrity(format!("edge {} does not match the trace", edge.edge_id)));
        }
        let subject = snapshot
            .node(trace.subject)
            .ok_or_else(|| integrity(format!("node {} not in snapshot", trace.subject)))?;
        let object = snapshot
            .node(trace.object)
            .ok_or_else(|| integrity(format!("node {} not in snapshot", trace.object)))?;
        let predicate = self.predicate(&trace.predicate)?;
        let phrase = self.phrases.get(&trace.relation).unwrap_or(predicate.phrase());
        let clause = predicate.evidence_clause(&trace.record(), object.class());
        let mut sentence = format!("The {} is {phrase} the {} because {clause}.", subject.class(), object.class());
        let conflicts: Vec<String> = trace
            .failed_checks()
            .map(|c| match c.counterpart_edge_ids.as_slice() {
                [] => format!("{} fails", c.check),
                [one] => format!("{} conflicts with edge {one}", c.check),
                many => format!(
                    "{} conflicts with edges {}",
                    c.check,
                    many.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
                ),
            })
            .collect();
        if !conflicts.is_empty() {
            sentence.push_str(&format!(" \u{2014} flagged: {}.", conflicts.join("; ")));
        }
        Ok(ExplanationText {
            sentence,
            trace_id: trace.trace_id,
        })
    }
}

/// Renders with the built-in predicates and phrases.
pub fn render_explanation(trace: &ReasoningTrace, snapshot: &SceneGraphSnapshot) -> Result<ExplanationText, ExplainError> {
    Explainer::default().render(trace, snapshot)
}

/// Coverage of one snapshot: traces per edge and traces whose thresholds
/// agree with the active configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceCoverage {
    pub edges: usize,
    pub traced_edges: usize,
    pub complete_traces: usize,
}

impl TraceCoverage {
    pub fn of(snapshot: &SceneGraphSnapshot, config: &PredicateConfig) -> Self {
        let traced: BTreeMap<u64, &ReasoningTrace> = snapshot.traces.iter().map(|t| (t.edge_id, t)).collect();
        let mut c = TraceCoverage {
            edges: snapshot.edges.len(),
            ..Default::default()
        };
        for e in &snapshot.edges {
            if let Some(t) = traced.get(&e.edge_id) {
                c.traced_edges += 1;
                if thresholds_match(t, config) && t.observations.len() == 2 {
                    c.complete_traces += 1;
                }
            }
        }
        c
    }

    pub fn merge(&mut self, other: &TraceCoverage) {
        self.edges += other.edges;
        self.traced_edges += other.traced_edges;
        self.complete_traces += other.complete_traces;
    }

    /// 1 when there are no edges.
    pub fn ratio(&self) -> f64 {
        if self.edges == 0 {
            1.0
        } else {
            self.traced_edges as f64 / self.edges as f64
        }
    }
}

//! Domain ontology: class hierarchy, relation domain/range schema, and
//! contradiction axioms checked against scene graph snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SceneGraphSnapshot;
use crate::relations::RelationVocabulary;

/// The shipped default document (`data/ontology.toml`).
pub const DEFAULT_ONTOLOGY: &str = include_str!("../../../../data/ontology.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("ontology parse error: {0}")]
    Parse(String),
    #[error("unresolved reference: {0}")]
    Reference(String),
    #[error("class hierarchy cycle through '{0}'")]
    Cycle(String),
    #[error("duplicate definition: {0}")]
    Duplicate(String),
    #[error("axiom '{kind}' expects {expected} relation(s), got {got}")]
    Arity { kind: String, expected: usize, got: usize },
    #[error("i/o error reading ontology: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    SchemaDomain,
    SchemaRange,
    Exclusion,
    Asymmetry,
    Irreflexivity,
    InverseMissing,
    Cycle,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::SchemaDomain => "SCHEMA_DOMAIN",
            ViolationCode::SchemaRange => "SCHEMA_RANGE",
            ViolationCode::Exclusion => "EXCLUSION",
            ViolationCode::Asymmetry => "ASYMMETRY",
            ViolationCode::Irreflexivity => "IRREFLEXIVITY",
            ViolationCode::InverseMissing => "INVERSE_MISSING",
            ViolationCode::Cycle => "CYCLE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axiom {
    MutuallyExclusive(String, String),
    Asymmetric(String),
    Irreflexive(String),
    Inverse(String, String),
    Acyclic(String),
}

impl Axiom {
    pub fn relations(&self) -> Vec<&str> {
        match self {
            Axiom::MutuallyExclusive(a, b) | Axiom::Inverse(a, b) => vec![a, b],
            Axiom::Asymmetric(r) | Axiom::Irreflexive(r) | Axiom::Acyclic(r) => vec![r],
        }
    }

    pub fn code(&self) -> ViolationCode {
        match self {
            Axiom::MutuallyExclusive(..) => ViolationCode::Exclusion,
            Axiom::Asymmetric(_) => ViolationCode::Asymmetry,
            Axiom::Irreflexive(_) => ViolationCode::Irreflexivity,
            Axiom::Inverse(..) => ViolationCode::InverseMissing,
            Axiom::Acyclic(_) => ViolationCode::Cycle,
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axiom::MutuallyExclusive(a, b) => write!(f, "mutually_exclusive({a}, {b})"),
            Axiom::Asymmetric(r) => write!(f, "asymmetric({r})"),
            Axiom::Irreflexive(r) => write!(f, "irreflexive({r})"),
            Axiom::Inverse(a, b) => write!(f, "inverse({a}, {b})"),
            Axiom::Acyclic(r) => write!(f, "acyclic({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub domain: Vec<String>,
    pub range: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default, rename = "class")]
    classes: Vec<ClassEntry>,
    #[serde(default, rename = "relation")]
    relations: Vec<RelationEntry>,
    #[serde(default, rename = "axiom")]
    axioms: Vec<AxiomEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    name: String,
    #[serde(default)]
    parent: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationEntry {
    name: String,
    domain: Vec<String>,
    range: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxiomEntry {
    kind: String,
    relations: Vec<String>,
}

/// One check evaluated against one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyCheck {
    /// `schema_domain`, `schema_range`, or the axiom in call notation
    pub check: String,
    pub code: ViolationCode,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counterpart_edge_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub edge_id: u64,
    pub codes: Vec<ViolationCode>,
    pub counterpart_edge_ids: Vec<u64>,
}

/// Validated ontology with precomputed ancestor sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    parents: BTreeMap<String, Option<String>>,
    ancestors: BTreeMap<String, BTreeSet<String>>,
    relations: BTreeMap<String, RelationDef>,
    axioms: Vec<Axiom>,
}

impl Ontology {
    pub fn parse(text: &str) -> Result<Self, OntologyError> {
        let doc: Document = toml::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        let mut parents = BTreeMap::new();
        for c in doc.classes {
            if parents.insert(c.name.clone(), c.parent).is_some() {
                return Err(OntologyError::Duplicate(format!("class '{}'", c.name)));
            }
        }
        for (name, parent) in &parents {
            if let Some(p) = parent {
                if !parents.contains_key(p) {
                    return Err(OntologyError::Reference(format!("class '{name}' has unknown parent '{p}'")));
                }
            }
        }
        let mut ancestors = BTreeMap::new();
        for name in parents.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = Some(name.clone());
            while let Some(c) = cur {
                if !seen.insert(c.clone()) {
                    return Err(OntologyError::Cycle(c));
                }
                cur = parents[&c].clone();
            }
            ancestors.insert(name.clone(), seen);
        }

        let mut relations = BTreeMap::new();
        for r in doc.relations {
            for c in r.domain.iter().chain(&r.range) {
                if !parents.contains_key(c) {
                    return Err(OntologyError::Reference(format!(
                        "relation '{}' names unknown class '{c}'",
                        r.name
                    )));
                }
            }
            if r.domain.is_empty() || r.range.is_empty() {
                return Err(OntologyError::Parse(format!("relation '{}' needs a domain and a range", r.name)));
            }
            let def = RelationDef {
                domain: r.domain,
                range: r.range,
            };
            if relations.insert(r.name.clone(), def).is_some() {
                return Err(OntologyError::Duplicate(format!("relation '{}'", r.name)));
            }
        }

        let mut axioms = Vec::new();
        for a in doc.axioms {
            let arity = |n: usize| {
                if a.relations.len() == n {
                    Ok(())
                } else {
                    Err(OntologyError::Arity {
                        kind: a.kind.clone(),
                        expected: n,
                        got: a.relations.len(),
                    })
                }
            };
            let r = &a.relations;
            let axiom = match a.kind.as_str() {
                "mutually_exclusive" => arity(2).map(|_| Axiom::MutuallyExclusive(r[0].clone(), r[1].clone())),
                "inverse" => arity(2).map(|_| Axiom::Inverse(r[0].clone(), r[1].clone())),
                "asymmetric" => arity(1).map(|_| Axiom::Asymmetric(r[0].clone())),
                "irreflexive" => arity(1).map(|_| Axiom::Irreflexive(r[0].clone())),
                "acyclic" => arity(1).map(|_| Axiom::Acyclic(r[0].clone())),
                other => Err(OntologyError::Parse(format!("unknown axiom kind '{other}'"))),
            }?;
            for rel in axiom.relations() {
                if !relations.contains_key(rel) {
                    return Err(OntologyError::Reference(format!("axiom {axiom} names undefined relation '{rel}'")));
                }
            }
            if axioms.contains(&axiom) {
                return Err(OntologyError::Duplicate(format!("axiom {axiom}")));
            }
            axioms.push(axiom);
        }
        Ok(Ontology {
            parents,
            ancestors,
            relations,
            axioms,
        })
    }

    pub fn load(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn default_ontology() -> Self {
        Self::parse(DEFAULT_ONTOLOGY).expect("shipped ontology is valid")
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.parents.keys().map(String::as_str)
    }

    pub fn parent(&self, class: &str) -> Option<&str> {
        self.parents.get(class).and_then(|p| p.as_deref())
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.get(name)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    /// Reflexive, transitive subclass test.
    pub fn is_subclass(&self, child: &str, ancestor: &str) -> Result<bool, OntologyError> {
        if !self.parents.contains_key(ancestor) {
            return Err(OntologyError::Reference(format!("unknown class '{ancestor}'")));
        }
        self.ancestors
            .get(child)
            .map(|a| a.contains(ancestor))
            .ok_or_else(|| OntologyError::Reference(format!("unknown class '{child}'")))
    }

    /// Classes outside the ontology satisfy no schema constraint.
    fn satisfies(&self, class: &str, allowed: &[String]) -> bool {
        self.ancestors
            .get(class)
            .is_some_and(|a| allowed.iter().any(|c| a.contains(c)))
    }

    /// Every name of the vocabulary has a relation definition.
    pub fn covers(&self, vocabulary: &RelationVocabulary) -> Result<(), OntologyError> {
        for n in vocabulary.names() {
            if !self.relations.contains_key(n) {
                return Err(OntologyError::Reference(format!("relation '{n}' has no ontology definition")));
            }
        }
        Ok(())
    }

    /// All schema and axiom checks for every edge, in edge order.
    pub fn evaluate(&self, snapshot: &SceneGraphSnapshot) -> Result<Vec<(u64, Vec<OntologyCheck>)>, OntologyError> {
        let class_of: BTreeMap<u64, &str> = snapshot.nodes.iter().map(|n| (n.node_id, n.class())).collect();
        for e in &snapshot.edges {
            if !self.relations.contains_key(&e.relation) {
                return Err(OntologyError::Reference(format!(
                    "edge {} uses undefined relation '{}'",
                    e.edge_id, e.relation
                )));
            }
        }
        // (subject, relation, object) -> edge ids
        let mut by_key: BTreeMap<(u64, &str, u64), Vec<u64>> = BTreeMap::new();
        for e in &snapshot.edges {
            by_key.entry((e.subject, &e.relation, e.object)).or_default().push(e.edge_id);
        }
        let lookup = |s: u64, r: &str, o: u64, skip: u64| -> Vec<u64> {
            by_key
                .get(&(s, r, o))
                .map(|v| v.iter().copied().filter(|&id| id != skip).collect())
                .unwrap_or_default()
        };
        let cycles = self.cycle_members(snapshot);

        let mut out = Vec::with_capacity(snapshot.edges.len());
        for e in &snapshot.edges {
            let def = &self.relations[&e.relation];
            let subj = class_of.get(&e.subject).copied().unwrap_or("");
            let obj = class_of.get(&e.object).copied().unwrap_or("");
            let mut checks = vec![
                OntologyCheck {
                    check: "schema_domain".into(),
                    code: ViolationCode::SchemaDomain,
                    passed: self.satisfies(subj, &def.domain),
                    counterpart_edge_ids: vec![],
                },
                OntologyCheck {
                    check: "schema_range".into(),
                    code: ViolationCode::SchemaRange,
                    passed: self.satisfies(obj, &def.range),
                    counterpart_edge_ids: vec![],
                },
            ];
            for axiom in &self.axioms {
                let counterparts = match axiom {
                    Axiom::MutuallyExclusive(a, b) => {
                        let other = if e.relation == *a {
                            Some(b)
                        } else if e.relation == *b {
                            Some(a)
                        } else {
                            None
                        };
                        match other {
                            Some(o) => lookup(e.subject, o, e.object, e.edge_id),
                            None => continue,
                        }
                    }
                    Axiom::Asymmetric(r) => {
                        if e.relation != *r {
                            continue;
                        }
                        if e.subject == e.object {
                            vec![]
                        } else {
                            lookup(e.object, r, e.subject, e.edge_id)
                        }
                    }
                    Axiom::Irreflexive(r) => {
                        if e.relation != *r {
                            continue;
                        }
                        if e.subject == e.object {
                            vec![e.edge_id]
                        } else {
                            vec![]
                        }
                    }
                    Axiom::Inverse(a, b) => {
                        // a(x,y) requires b(y,x) and vice versa
                        let other = if e.relation == *a {
                            b
                        } else if e.relation == *b {
                            a
                        } else {
                            continue;
                        };
                        let partner = lookup(e.object, other, e.subject, e.edge_id);
                        let passed = !partner.is_empty();
                        checks.push(OntologyCheck {
                            check: axiom.to_string(),
                            code: axiom.code(),
                            passed,
                            counterpart_edge_ids: partner,
                        });
                        continue;
                    }
                    Axiom::Acyclic(r) => {
                        if e.relation != *r {
                            continue;
                        }
                        cycles.get(&e.edge_id).cloned().unwrap_or_default()
                    }
                };
                let passed = counterparts.is_empty();
                // self-reference is only a marker for irreflexivity
                let counterpart_edge_ids = counterparts.into_iter().filter(|&id| id != e.edge_id).collect();
                checks.push(OntologyCheck {
                    check: axiom.to_string(),
                    code: axiom.code(),
                    passed,
                    counterpart_edge_ids,
                });
            }
            out.push((e.edge_id, checks));
        }
        Ok(out)
    }

    /// For each acyclic relation: edge id -> the ids of edges sharing its
    /// directed cycle (the edge itself for self-loops).
    fn cycle_members(&self, snapshot: &SceneGraphSnapshot) -> BTreeMap<u64, Vec<u64>> {
        let mut out = BTreeMap::new();
        for axiom in &self.axioms {
            let Axiom::Acyclic(r) = axiom else { continue };
            let edges: Vec<_> = snapshot.edges.iter().filter(|e| e.relation == *r).collect();
            let mut g = DiGraphMap::<u64, ()>::new();
            for e in &edges {
                g.add_edge(e.subject, e.object, ());
            }
            let mut comp = BTreeMap::new();
            for (i, scc) in tarjan_scc(&g).into_iter().enumerate() {
                for n in scc {
                    comp.insert(n, i);
                }
            }
            let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
            let on_cycle: Vec<_> = edges
                .iter()
                .filter(|e| e.subject == e.object || comp[&e.subject] == comp[&e.object])
                .collect();
            for e in &on_cycle {
                groups.entry(comp[&e.subject]).or_default().push(e.edge_id);
            }
            for e in on_cycle {
                let members = &groups[&comp[&e.subject]];
                let mut v: Vec<u64> = members.iter().copied().filter(|&id| id != e.edge_id).collect();
                if v.is_empty() {
                    v.push(e.edge_id);
                }
                out.insert(e.edge_id, v);
            }
        }
        out
    }

    /// One report per edge failing any check.
    pub fn validate(&self, snapshot: &SceneGraphSnapshot) -> Result<Vec<ViolationReport>, OntologyError> {
        Ok(reports_from_checks(&self.evaluate(snapshot)?))
    }

    /// Validates and writes flags onto edges and checks into their traces.
    pub fn annotate(&self, snapshot: &mut SceneGraphSnapshot) -> Result<Vec<ViolationReport>, OntologyError> {
        let checks = self.evaluate(snapshot)?;
        let reports = reports_from_checks(&checks);
        let flags: BTreeMap<u64, &ViolationReport> = reports.iter().map(|r| (r.edge_id, r)).collect();
        for e in &mut snapshot.edges {
            e.violation_flags = flags.get(&e.edge_id).map(|r| r.codes.clone()).unwrap_or_default();
        }
        let by_edge: BTreeMap<u64, Vec<OntologyCheck>> = checks.into_iter().collect();
        for t in &mut snapshot.traces {
            if let Some(c) = by_edge.get(&t.edge_id) {
                t.ontology_checks = c.clone();
            }
        }
        Ok(reports)
    }
}

fn reports_from_checks(checks: &[(u64, Vec<OntologyCheck>)]) -> Vec<ViolationReport> {
    checks
        .iter()
        .filter_map(|(id, cs)| {
            let failed: Vec<_> = cs.iter().filter(|c| !c.passed).collect();
            if failed.is_empty() {
                return None;
            }
            let codes: BTreeSet<ViolationCode> = failed.iter().map(|c| c.code).collect();
            let counterparts: BTreeSet<u64> = failed.iter().flat_map(|c| c.counterpart_edge_ids.iter().copied()).collect();
            Some(ViolationReport {
                edge_id: *id,
                codes: codes.into_iter().collect(),
                counterpart_edge_ids: counterparts.into_iter().collect(),
            })
        })
        .collect()
}

/// Distinct flagged edges over all edges; 0 for an empty graph.
pub fn violation_rate(snapshot: &SceneGraphSnapshot, reports: &[ViolationReport]) -> f64 {
    if snapshot.edges.is_empty() {
        return 0.0;
    }
    let live: BTreeSet<u64> = snapshot.edges.iter().map(|e| e.edge_id).collect();
    let flagged: BTreeSet<u64> = reports.iter().map(|r| r.edge_id).filter(|id| live.contains(id)).collect();
    flagged.len() as f64 / live.len() as f64
}

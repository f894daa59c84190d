//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use semmap_core::explain::{capture_trace, Provenance, ReasoningTrace};
use semmap_core::graph::{ObjectNode, RelationEdge, SceneGraphSnapshot};
use semmap_core::model::{Aabb3, Timestamp, Vec3};
use semmap_core::ontology::{Axiom, Ontology, ViolationCode, ViolationReport};
use semmap_core::relations::{Body, RelationEngine};

pub fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn ts(us: i64) -> Timestamp {
    Timestamp::from_micros(us).unwrap()
}

pub fn aabb(min: [f64; 3], max: [f64; 3]) -> Aabb3 {
    Aabb3::new(Vec3::from(min), Vec3::from(max)).unwrap()
}

/// Nodes get ids 1.. in order, edges likewise.
pub fn snapshot(classes: &[&str], edges: &[(u64, &str, u64)]) -> SceneGraphSnapshot {
    let t = Timestamp::ZERO;
    let unit = aabb([0.0; 3], [1.0; 3]);
    SceneGraphSnapshot {
        stamp: t,
        nodes: classes
            .iter()
            .enumerate()
            .map(|(i, c)| ObjectNode::from_box(i as u64 + 1, c, unit, t))
            .collect(),
        edges: edges
            .iter()
            .enumerate()
            .map(|(i, (s, r, o))| RelationEdge::new(i as u64 + 1, *s, r, *o, t))
            .collect(),
        traces: vec![],
    }
}

/// The default ontology plus inverse and acyclic axioms, so the oracle
/// sees every axiom kind.
pub const EXTENDED_AXIOMS: &str = r#"
[[axiom]]
kind = "inverse"
relations = ["left_of", "right_of"]

[[axiom]]
kind = "acyclic"
relations = ["above"]

[[axiom]]
kind = "acyclic"
relations = ["on_top_of"]
"#;

pub fn extended_ontology() -> Ontology {
    let text = format!("{}\n{EXTENDED_AXIOMS}", semmap_core::ontology::DEFAULT_ONTOLOGY);
    Ontology::parse(&text).unwrap()
}

/// Up to 12 nodes and 40 edges; classes include one the ontology does not
/// know, self-loops and duplicate triples are allowed.
pub fn random_graph<R: Rng>(rng: &mut R, ontology: &Ontology) -> SceneGraphSnapshot {
    let mut classes: Vec<&str> = ontology.classes().collect();
    classes.push("unknown_thing");
    let relations: Vec<&str> = ontology.relation_names().collect();
    let n = rng.random_range(1..=12usize);
    let m = rng.random_range(0..=40usize);
    let node_classes: Vec<&str> = (0..n).map(|_| classes[rng.random_range(0..classes.len())]).collect();
    let edges: Vec<(u64, &str, u64)> = (0..m)
        .map(|_| {
            (
                rng.random_range(1..=n as u64),
                relations[rng.random_range(0..relations.len())],
                rng.random_range(1..=n as u64),
            )
        })
        .collect();
    snapshot(&node_classes, &edges)
}

fn subclass_of(ont: &Ontology, class: &str, ancestor: &str) -> bool {
    let mut cur = Some(class);
    let known: BTreeSet<&str> = ont.classes().collect();
    if !known.contains(class) {
        return false;
    }
    while let Some(c) = cur {
        if c == ancestor {
            return true;
        }
        cur = ont.parent(c);
    }
    false
}

/// `to` reachable from `from` along edges of `relation` (at least one step).
fn reaches(edges: &[RelationEdge], relation: &str, from: u64, to: u64) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        for e in edges.iter().filter(|e| e.relation == relation && e.subject == x) {
            if e.object == to {
                return true;
            }
            if seen.insert(e.object) {
                stack.push(e.object);
            }
        }
    }
    false
}

/// Exhaustive per-edge checker written directly from the axiom definitions.
pub fn oracle_reports(ont: &Ontology, snap: &SceneGraphSnapshot) -> Vec<ViolationReport> {
    let class_of: BTreeMap<u64, &str> = snap.nodes.iter().map(|n| (n.node_id, n.class())).collect();
    let edges = &snap.edges;
    let others = |e: &RelationEdge, s: u64, r: &str, o: u64| -> Vec<u64> {
        edges
            .iter()
            .filter(|f| f.edge_id != e.edge_id && f.subject == s && f.relation == r && f.object == o)
            .map(|f| f.edge_id)
            .collect()
    };
    let on_cycle = |e: &RelationEdge| e.subject == e.object || reaches(edges, &e.relation, e.object, e.subject);
    let mut out = Vec::new();
    for e in edges {
        let def = ont.relation(&e.relation).unwrap();
        let mut codes = BTreeSet::new();
        let mut counter = BTreeSet::new();
        let subj = class_of[&e.subject];
        let obj = class_of[&e.object];
        if !def.domain.iter().any(|d| subclass_of(ont, subj, d)) {
            codes.insert(ViolationCode::SchemaDomain);
        }
        if !def.range.iter().any(|r| subclass_of(ont, obj, r)) {
            codes.insert(ViolationCode::SchemaRange);
        }
        for ax in ont.axioms() {
            match ax {
                Axiom::MutuallyExclusive(a, b) => {
                    for (x, y) in [(a, b), (b, a)] {
                        if e.relation == *x {
                            let hits = others(e, e.subject, y, e.object);
                            if !hits.is_empty() {
                                codes.insert(ViolationCode::Exclusion);
                                counter.extend(hits);
                            }
                        }
                    }
                }
                Axiom::Asymmetric(r) if e.relation == *r && e.subject != e.object => {
                    let hits = others(e, e.object, r, e.subject);
                    if !hits.is_empty() {
                        codes.insert(ViolationCode::Asymmetry);
                        counter.extend(hits);
                    }
                }
                Axiom::Irreflexive(r) if e.relation == *r && e.subject == e.object => {
                    codes.insert(ViolationCode::Irreflexivity);
                }
                Axiom::Inverse(a, b) => {
                    for (x, y) in [(a, b), (b, a)] {
                        if e.relation == *x && others(e, e.object, y, e.subject).is_empty() {
                            codes.insert(ViolationCode::InverseMissing);
                        }
                    }
                }
                Axiom::Acyclic(r) if e.relation == *r && on_cycle(e) => {
                    codes.insert(ViolationCode::Cycle);
                    // other cycle edges through the same strongly connected part
                    for f in edges.iter().filter(|f| f.relation == *r && f.edge_id != e.edge_id) {
                        let same = f.subject == e.subject
                            || (reaches(edges, r, e.subject, f.subject) && reaches(edges, r, f.subject, e.subject));
                        if on_cycle(f) && same {
                            counter.insert(f.edge_id);
                        }
                    }
                }
                _ => {}
            }
        }
        if !codes.is_empty() {
            out.push(ViolationReport {
                edge_id: e.edge_id,
                codes: codes.into_iter().collect(),
                counterpart_edge_ids: counter.into_iter().collect(),
            });
        }
    }
    out
}

/// Index of the nearest pose (earliest on ties) and its gap in microseconds.
pub fn nearest_pose(frame_us: i64, poses_us: &[i64]) -> (usize, i64) {
    let mut best = (0, i64::MAX);
    for (i, &p) in poses_us.iter().enumerate() {
        let gap = (p - frame_us).abs();
        if gap < best.1 {
            best = (i, gap);
        }
    }
    best
}

/// Mean local clustering over nodes of degree >= 2, counting triangles on
/// an adjacency matrix of the undirected simple projection.
pub fn clustering_oracle(snap: &SceneGraphSnapshot) -> f64 {
    let ids: Vec<u64> = snap.nodes.iter().map(|n| n.node_id).collect();
    let idx: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = ids.len();
    let mut adj = vec![vec![false; n]; n];
    for e in &snap.edges {
        if e.subject != e.object {
            let (a, b) = (idx[&e.subject], idx[&e.object]);
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    let mut local = Vec::new();
    for i in 0..n {
        let k = (0..n).filter(|&j| adj[i][j]).count();
        if k < 2 {
            continue;
        }
        let mut tri = 0usize;
        for a in 0..n {
            for b in 0..n {
                if adj[i][a] && adj[a][b] && adj[b][i] {
                    tri += 1;
                }
            }
        }
        // each triangle through i is walked in both directions
        local.push((tri / 2) as f64 / (k * (k - 1) / 2) as f64);
    }
    if local.is_empty() {
        0.0
    } else {
        local.iter().sum::<f64>() / local.len() as f64
    }
}

/// H as the ratio of between-group to total rank variance, ranks by
/// counting; equals the tie-corrected statistic.
pub fn kruskal_wallis_oracle(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let rank = |x: f64| {
        let less = all.iter().filter(|&&y| y < x).count() as f64;
        let equal = all.iter().filter(|&&y| y == x).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let n = all.len() as f64;
    let grand = (n + 1.0) / 2.0;
    let mut between = 0.0;
    let mut total = 0.0;
    for g in groups {
        let ranks: Vec<f64> = g.iter().map(|&x| rank(x)).collect();
        let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
        between += ranks.len() as f64 * (mean - grand).powi(2);
        total += ranks.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
    }
    if total == 0.0 {
        0.0
    } else {
        (n - 1.0) * between / total
    }
}

/// Two nodes with every relation the default engine infers between them,
/// traced.
pub fn pair_fixture(subject: (&str, Aabb3), object: (&str, Aabb3)) -> SceneGraphSnapshot {
    let t = ts(1_000_000);
    let nodes = vec![
        ObjectNode::from_box(1, subject.0, subject.1, t),
        ObjectNode::from_box(2, object.0, object.1, t),
    ];
    let engine = RelationEngine::default();
    let mut snap = SceneGraphSnapshot::empty(t);
    let mut id = 1;
    for (s, o) in [(0usize, 1usize), (1, 0)] {
        let bs = Body { aabb: nodes[s].world_box, sigma: 0.001 };
        let bo = Body { aabb: nodes[o].world_box, sigma: 0.001 };
        for c in engine.infer(&bs, &bo) {
            let mut e = RelationEdge::new(id, nodes[s].node_id, &c.relation, nodes[o].node_id, t);
            e.confidence = c.confidence;
            let prov = Provenance {
                pose_stamp: ts(999_000),
                subject_observation: nodes[s].last_observation,
                object_observation: nodes[o].last_observation,
            };
            snap.traces.push(capture_trace(&e, Some(&c.record), vec![], prov).unwrap());
            snap.edges.push(e);
            id += 1;
        }
    }
    snap.nodes = nodes;
    snap
}

/// Decimal tokens in a sentence.
pub fn numbers_in(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars().chain(std::iter::once(' ')) {
        if ch.is_ascii_digit() || (ch == '.' && !cur.is_empty()) {
            cur.push(ch);
        } else if !cur.is_empty() {
            out.push(cur.trim_end_matches('.').to_string());
            cur.clear();
        }
    }
    out
}

/// Every number printed in the sentence is a trace value at the printed
/// precision.
pub fn numbers_traceable(sentence: &str, trace: &ReasoningTrace) -> bool {
    let vals = trace.numbers();
    numbers_in(sentence).iter().all(|tok| {
        vals.iter()
            .any(|v| format!("{v:.3}") == *tok || (v.fract() == 0.0 && format!("{}", *v as u64) == *tok))
    })
}

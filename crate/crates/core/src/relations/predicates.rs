//! Built-in geometric predicates. Each relation name is backed by one
//! [`RelationPredicate`] implementation, registered by name in a
//! [`PredicateRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use super::geometry::{containment_ratio, footprint_overlap, projects_within_footprint};
use super::{Body, Condition, Evidence, PredicateConfig, PredicateRecord, Quantity, RelationError};

/// Suppression tier of a predicate.
///
/// A firing `Containment` predicate suppresses every other tier for the same
/// ordered pair. `Support` suppresses `Vertical`. `Lateral` predicates are
/// additive and only suppressed by containment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Containment,
    Support,
    Vertical,
    Lateral,
}

pub trait RelationPredicate: Send + Sync {
    /// Relation name emitted into edges, e.g. `on_top_of`.
    fn name(&self) -> &str;

    fn tier(&self) -> Tier;

    /// Evaluates the predicate for the ordered pair (subject, object).
    fn evaluate(&self, subject: &Body, object: &Body, cfg: &PredicateConfig) -> Option<Evidence>;

    /// Verb phrase used in explanations ("is {phrase} the table").
    fn phrase(&self) -> &str;

    /// Evidence clause for an explanation, built only from values stored in
    /// `record`.
    fn evidence_clause(&self, record: &PredicateRecord, object_class: &str) -> String;
}

fn q(name: &str, value: f64, unit: &str) -> Quantity {
    Quantity {
        name: name.to_string(),
        value,
        unit: unit.to_string(),
    }
}

fn cond(name: &str, holds: bool) -> Condition {
    Condition {
        name: name.to_string(),
        holds,
    }
}

fn mean_extent(b: &Body) -> f64 {
    let e = b.aabb.extent();
    (e.x + e.y + e.z) / 3.0
}

pub struct Inside;

impl RelationPredicate for Inside {
    fn name(&self) -> &str {
        "inside"
    }
    fn tier(&self) -> Tier {
        Tier::Containment
    }
    fn evaluate(&self, s: &Body, o: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
        let ratio = containment_ratio(&s.aabb, &o.aabb);
        if ratio < cfg.containment_min {
            return None;
        }
        Some(Evidence {
            measurements: vec![q("containment", ratio, "fraction")],
            thresholds: vec![q("containment_min", cfg.containment_min, "fraction")],
            conditions: vec![],
            // fraction slack scaled to a length so it is comparable to sigma
            margin: (ratio - cfg.containment_min) * mean_extent(s),
        })
    }
    fn phrase(&self) -> &str {
        "inside"
    }
    fn evidence_clause(&self, r: &PredicateRecord, obj: &str) -> String {
        let c = r.measurement("containment").unwrap_or(f64::NAN);
        let min = r.threshold("containment_min").unwrap_or(f64::NAN);
        if c >= 1.0 - 1e-9 {
            format!(
                "its volume fully intersects the {obj}'s interior (containment {c:.3}, threshold {min:.3})"
            )
        } else {
            format!("{c:.3} of its volume intersects the {obj}'s interior (threshold {min:.3})")
        }
    }
}

pub struct OnTopOf;

impl RelationPredicate for OnTopOf {
    fn name(&self) -> &str {
        "on_top_of"
    }
    fn tier(&self) -> Tier {
        Tier::Support
    }
    fn evaluate(&self, s: &Body, o: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
        let gap = s.aabb.min.z - o.aabb.max.z;
        if gap.abs() > cfg.contact_eps {
            return None;
        }
        let centroid_in = projects_within_footprint(&s.aabb.center(), &o.aabb);
        if !centroid_in {
            return None;
        }
        Some(Evidence {
            measurements: vec![q("gap", gap, "m"), q("contact_distance", gap.abs(), "m")],
            thresholds: vec![q("contact_eps", cfg.contact_eps, "m")],
            conditions: vec![cond("centroid_in_footprint", centroid_in)],
            margin: cfg.contact_eps - gap.abs(),
        })
    }
    fn phrase(&self) -> &str {
        "on top of"
    }
    fn evidence_clause(&self, r: &PredicateRecord, obj: &str) -> String {
        let d = r.measurement("contact_distance").unwrap_or(f64::NAN);
        let eps = r.threshold("contact_eps").unwrap_or(f64::NAN);
        let mut clause = format!(
            "its lower face rests within {d:.3} m of the {obj}'s surface (tolerance {eps:.3} m)"
        );
        if r.condition("centroid_in_footprint") == Some(true) {
            clause.push_str(&format!(" and its centroid projects within the {obj}'s area"));
        }
        clause
    }
}

/// `above` when `upper` is the subject, `below` when it is the object.
fn vertical_evidence(upper: &Body, lower: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
    let gap = upper.aabb.min.z - lower.aabb.max.z;
    if gap <= cfg.contact_eps {
        return None;
    }
    let overlap = footprint_overlap(&upper.aabb, &lower.aabb);
    if overlap < cfg.footprint_overlap_min {
        return None;
    }
    Some(Evidence {
        measurements: vec![q("gap", gap, "m"), q("footprint_overlap", overlap, "fraction")],
        thresholds: vec![
            q("contact_eps", cfg.contact_eps, "m"),
            q("footprint_overlap_min", cfg.footprint_overlap_min, "fraction"),
        ],
        conditions: vec![],
        margin: gap - cfg.contact_eps,
    })
}

pub struct Above;

impl RelationPredicate for Above {
    fn name(&self) -> &str {
        "above"
    }
    fn tier(&self) -> Tier {
        Tier::Vertical
    }
    fn evaluate(&self, s: &Body, o: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
        vertical_evidence(s, o, cfg)
    }
    fn phrase(&self) -> &str {
        "above"
    }
    fn evidence_clause(&self, r: &PredicateRecord, obj: &str) -> String {
        let gap = r.measurement("gap").unwrap_or(f64::NAN);
        let eps = r.threshold("contact_eps").unwrap_or(f64::NAN);
        let ov = r.measurement("footprint_overlap").unwrap_or(f64::NAN);
        let min = r.threshold("footprint_overlap_min").unwrap_or(f64::NAN);
        format!(
            "its lower face is {gap:.3} m above the {obj}'s top (tolerance {eps:.3} m) and {ov:.3} of its footprint lies over the {obj} (minimum {min:.3})"
        )
    }
}

pub struct Below;

impl RelationPredicate for Below {
    fn name(&self) -> &str {
        "below"
    }
    fn tier(&self) -> Tier {
        Tier::Vertical
    }
    fn evaluate(&self, s: &Body, o: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
        vertical_evidence(o, s, cfg)
    }
    fn phrase(&self) -> &str {
        "below"
    }
    fn evidence_clause(&self, r: &PredicateRecord, obj: &str) -> String {
        let gap = r.measurement("gap").unwrap_or(f64::NAN);
        let eps = r.threshold("contact_eps").unwrap_or(f64::NAN);
        let ov = r.measurement("footprint_overlap").unwrap_or(f64::NAN);
        let min = r.threshold("footprint_overlap_min").unwrap_or(f64::NAN);
        format!(
            "its top is {gap:.3} m below the {obj}'s lower face (tolerance {eps:.3} m) and {ov:.3} of the {obj}'s footprint lies over it (minimum {min:.3})"
        )
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// Disjoint-interval test along one world axis. `positive` selects the
/// subject lying on the high side of the object.
struct Lateral {
    name: &'static str,
    phrase: &'static str,
    axis: Axis,
    positive: bool,
}

impl RelationPredicate for Lateral {
    fn name(&self) -> &str {
        self.name
    }
    fn tier(&self) -> Tier {
        Tier::Lateral
    }
    fn evaluate(&self, s: &Body, o: &Body, cfg: &PredicateConfig) -> Option<Evidence> {
        let i = match self.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        let separation = if self.positive {
            s.aabb.min[i] - o.aabb.max[i]
        } else {
            o.aabb.min[i] - s.aabb.max[i]
        };
        if separation <= 0.0 {
            return None;
        }
        let distance = (s.aabb.center() - o.aabb.center()).norm();
        if distance > cfg.lateral_pairing_max {
            return None;
        }
        Some(Evidence {
            measurements: vec![q("separation", separation, "m"), q("centroid_distance", distance, "m")],
            thresholds: vec![q("lateral_pairing_max", cfg.lateral_pairing_max, "m")],
            conditions: vec![],
            margin: separation,
        })
    }
    fn phrase(&self) -> &str {
        self.phrase
    }
    fn evidence_clause(&self, r: &PredicateRecord, obj: &str) -> String {
        let sep = r.measurement("separation").unwrap_or(f64::NAN);
        let dist = r.measurement("centroid_distance").unwrap_or(f64::NAN);
        let max = r.threshold("lateral_pairing_max").unwrap_or(f64::NAN);
        let axis = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        format!(
            "a {sep:.3} m gap separates it from the {obj} along the {axis} axis and their centroids are {dist:.3} m apart (limit {max:.3} m)"
        )
    }
}

pub fn left_of() -> impl RelationPredicate {
    Lateral {
        name: "left_of",
        phrase: "to the left of",
        axis: Axis::X,
        positive: false,
    }
}

pub fn right_of() -> impl RelationPredicate {
    Lateral {
        name: "right_of",
        phrase: "to the right of",
        axis: Axis::X,
        positive: true,
    }
}

/// Smaller world y is nearer the viewer.
pub fn in_front_of() -> impl RelationPredicate {
    Lateral {
        name: "in_front_of",
        phrase: "in front of",
        axis: Axis::Y,
        positive: false,
    }
}

pub fn behind() -> impl RelationPredicate {
    Lateral {
        name: "behind",
        phrase: "behind",
        axis: Axis::Y,
        positive: true,
    }
}

/// Name-keyed registry of predicate strategies.
#[derive(Clone, Default)]
pub struct PredicateRegistry {
    predicates: BTreeMap<String, Arc<dyn RelationPredicate>>,
}

impl std::fmt::Debug for PredicateRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredicateRegistry")
            .field("predicates", &self.predicates.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PredicateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the eight built-in relations.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(Inside));
        reg.register(Arc::new(OnTopOf));
        reg.register(Arc::new(Above));
        reg.register(Arc::new(Below));
        reg.register(Arc::new(left_of()));
        reg.register(Arc::new(right_of()));
        reg.register(Arc::new(in_front_of()));
        reg.register(Arc::new(behind()));
        reg
    }

    /// Registers a predicate under its own name, replacing any previous one.
    pub fn register(&mut self, predicate: Arc<dyn RelationPredicate>) -> Option<Arc<dyn RelationPredicate>> {
        self.predicates.insert(predicate.name().to_string(), predicate)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RelationPredicate>, RelationError> {
        self.predicates
            .get(name)
            .cloned()
            .ok_or_else(|| RelationError::UnknownRelation(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.predicates.keys().map(String::as_str)
    }
}

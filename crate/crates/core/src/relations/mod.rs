//! Geometric relation inference between world-frame object boxes.
//!
//! Each relation in the vocabulary is a [`RelationPredicate`] strategy looked
//! up by name in a [`PredicateRegistry`]. A [`RelationEngine`] binds an active
//! vocabulary to its predicates and applies the tier suppression rules.

mod geometry;
mod predicates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{containment_ratio, footprint_overlap, projects_within_footprint};
pub use predicates::{
    behind, in_front_of, left_of, right_of, Above, Below, Inside, OnTopOf, PredicateRegistry,
    RelationPredicate, Tier,
};

use crate::model::Aabb3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelationError {
    #[error("no predicate registered for relation '{0}'")]
    UnknownRelation(String),
    #[error("invalid relation vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid predicate config: {0}")]
    InvalidConfig(String),
}

/// Ordered set of active relation names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RelationVocabulary {
    names: Vec<String>,
}

pub const DEFAULT_RELATIONS: [&str; 8] = [
    "left_of",
    "right_of",
    "in_front_of",
    "behind",
    "above",
    "below",
    "on_top_of",
    "inside",
];

impl Default for RelationVocabulary {
    fn default() -> Self {
        RelationVocabulary {
            names: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RelationVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self, RelationError> {
        if names.is_empty() {
            return Err(RelationError::InvalidVocabulary("empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(RelationError::InvalidVocabulary(format!("duplicate name '{n}'")));
            }
        }
        Ok(RelationVocabulary { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for RelationVocabulary {
    type Error = RelationError;
    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        RelationVocabulary::new(value)
    }
}

impl From<RelationVocabulary> for Vec<String> {
    fn from(value: RelationVocabulary) -> Self {
        value.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredicateConfig {
    /// meters
    pub contact_eps: f64,
    pub footprint_overlap_min: f64,
    pub containment_min: f64,
    /// meters
    pub lateral_pairing_max: f64,
    pub confidence_scale: f64,
}

impl Default for PredicateConfig {
    fn default() -> Self {
        PredicateConfig {
            contact_eps: 0.02,
            footprint_overlap_min: 0.2,
            containment_min: 0.95,
            lateral_pairing_max: 2.0,
            confidence_scale: 3.0,
        }
    }
}

impl PredicateConfig {
    pub fn validate(&self) -> Result<(), RelationError> {
        let positive = [
            ("contact_eps", self.contact_eps),
            ("footprint_overlap_min", self.footprint_overlap_min),
            ("containment_min", self.containment_min),
            ("lateral_pairing_max", self.lateral_pairing_max),
            ("confidence_scale", self.confidence_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RelationError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("footprint_overlap_min", self.footprint_overlap_min),
            ("containment_min", self.containment_min),
        ] {
            if v > 1.0 {
                return Err(RelationError::InvalidConfig(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Value of a threshold by its field name.
    pub fn threshold(&self, name: &str) -> Option<f64> {
        match name {
            "contact_eps" => Some(self.contact_eps),
            "footprint_overlap_min" => Some(self.footprint_overlap_min),
            "containment_min" => Some(self.containment_min),
            "lateral_pairing_max" => Some(self.lateral_pairing_max),
            "confidence_scale" => Some(self.confidence_scale),
            _ => None,
        }
    }
}

/// Geometry and positional uncertainty of one relation argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub aabb: Aabb3,
    /// meters
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
}

/// What a predicate measured when it fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub measurements: Vec<Quantity>,
    pub thresholds: Vec<Quantity>,
    pub conditions: Vec<Condition>,
    /// Geometric slack in meters; drives the confidence.
    pub margin: f64,
}

/// Complete evaluation record of one fired predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRecord {
    pub predicate: String,
    pub measurements: Vec<Quantity>,
    pub thresholds: Vec<Quantity>,
    pub conditions: Vec<Condition>,
    pub margin: f64,
    pub sigma_subject: f64,
    pub sigma_object: f64,
    pub confidence_scale: f64,
}

impl PredicateRecord {
    pub fn measurement(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|q| q.name == name).map(|q| q.value)
    }

    pub fn threshold(&self, name: &str) -> Option<f64> {
        self.thresholds.iter().find(|q| q.name == name).map(|q| q.value)
    }

    pub fn condition(&self, name: &str) -> Option<bool> {
        self.conditions.iter().find(|c| c.name == name).map(|c| c.holds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationCandidate {
    pub relation: String,
    pub confidence: f64,
    pub record: PredicateRecord,
}

/// `clamp(margin / (scale * (sigma_s + sigma_o)), 0, 1)`.
pub fn confidence(margin: f64, sigma_subject: f64, sigma_object: f64, scale: f64) -> f64 {
    let denom = scale * (sigma_subject + sigma_object);
    if denom <= 0.0 {
        return if margin > 0.0 { 1.0 } else { 0.0 };
    }
    (margin / denom).clamp(0.0, 1.0)
}

/// Pairwise relation source consumed by graph construction.
pub trait RelationModel: Send + Sync {
    fn vocabulary(&self) -> &RelationVocabulary;

    fn relate(&self, subject: &Body, object: &Body) -> Vec<RelationCandidate>;

    fn predicate(&self, relation: &str) -> Option<&Arc<dyn RelationPredicate>>;

    fn config(&self) -> &PredicateConfig;
}

/// Active vocabulary bound to registered predicates.
#[derive(Clone)]
pub struct RelationEngine {
    vocabulary: RelationVocabulary,
    predicates: Vec<Arc<dyn RelationPredicate>>,
    config: PredicateConfig,
}

impl std::fmt::Debug for RelationEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RelationEngine")
            .field("vocabulary", &self.vocabulary)
            .field("config", &self.config)
            .finish()
    }
}

impl Default for RelationEngine {
    fn default() -> Self {
        RelationEngine::new(
            &PredicateRegistry::with_builtins(),
            RelationVocabulary::default(),
            PredicateConfig::default(),
        )
        .expect("built-in vocabulary resolves")
    }
}

impl RelationEngine {
    pub fn new(
        registry: &PredicateRegistry,
        vocabulary: RelationVocabulary,
        config: PredicateConfig,
    ) -> Result<Self, RelationError> {
        config.validate()?;
        let predicates = vocabulary
            .names()
            .iter()
            .map(|n| registry.get(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RelationEngine {
            vocabulary,
            predicates,
            config,
        })
    }

    pub fn with_config(config: PredicateConfig) -> Result<Self, RelationError> {
        Self::new(&PredicateRegistry::with_builtins(), RelationVocabulary::default(), config)
    }

    fn candidate(&self, p: &dyn RelationPredicate, s: &Body, o: &Body, ev: Evidence) -> RelationCandidate {
        let conf = confidence(ev.margin, s.sigma, o.sigma, self.config.confidence_scale);
        RelationCandidate {
            relation: p.name().to_string(),
            confidence: conf,
            record: PredicateRecord {
                predicate: p.name().to_string(),
                measurements: ev.measurements,
                thresholds: ev.thresholds,
                conditions: ev.conditions,
                margin: ev.margin,
                sigma_subject: s.sigma,
                sigma_object: o.sigma,
                confidence_scale: self.config.confidence_scale,
            },
        }
    }

    fn fire(&self, tier: Tier, s: &Body, o: &Body) -> Vec<RelationCandidate> {
        self.predicates
            .iter()
            .filter(|p| p.tier() == tier)
            .filter_map(|p| {
                p.evaluate(s, o, &self.config)
                    .map(|ev| self.candidate(p.as_ref(), s, o, ev))
            })
            .collect()
    }

    /// Relations holding for the ordered pair, in vocabulary order.
    pub fn infer(&self, subject: &Body, object: &Body) -> Vec<RelationCandidate> {
        let contained = self.fire(Tier::Containment, subject, object);
        if !contained.is_empty() {
            return contained;
        }
        let mut out = self.fire(Tier::Support, subject, object);
        if out.is_empty() {
            out = self.fire(Tier::Vertical, subject, object);
        }
        out.extend(self.fire(Tier::Lateral, subject, object));
        let order = |c: &RelationCandidate| {
            self.vocabulary
                .names()
                .iter()
                .position(|n| *n == c.relation)
                .unwrap_or(usize::MAX)
        };
        out.sort_by_key(order);
        out
    }
}

impl RelationModel for RelationEngine {
    fn vocabulary(&self) -> &RelationVocabulary {
        &self.vocabulary
    }

    fn relate(&self, subject: &Body, object: &Body) -> Vec<RelationCandidate> {
        self.infer(subject, object)
    }

    fn predicate(&self, relation: &str) -> Option<&Arc<dyn RelationPredicate>> {
        self.predicates.iter().find(|p| p.name() == relation)
    }

    fn config(&self) -> &PredicateConfig {
        &self.config
    }
}

/// Relations for one ordered pair under the default vocabulary.
pub fn infer_relations(subject: &Body, object: &Body, cfg: &PredicateConfig) -> Vec<(String, f64)> {
    match RelationEngine::with_config(*cfg) {
        Ok(engine) => engine
            .infer(subject, object)
            .into_iter()
            .map(|c| (c.relation, c.confidence))
            .collect(),
        Err(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec3;
    use proptest::prelude::*;

    fn body(min: [f64; 3], max: [f64; 3]) -> Body {
        Body {
            aabb: Aabb3::new(Vec3::from(min), Vec3::from(max)).unwrap(),
            sigma: 0.005,
        }
    }

    fn names(v: &[RelationCandidate]) -> Vec<&str> {
        v.iter().map(|c| c.relation.as_str()).collect()
    }

    #[test]
    fn cup_on_table() {
        let e = RelationEngine::default();
        let cup = body([0.4, 0.4, 0.70], [0.5, 0.5, 0.80]);
        let table = body([0.0, 0.0, 0.0], [1.0, 1.0, 0.70]);
        let r = e.infer(&cup, &table);
        let n = names(&r);
        assert!(n.contains(&"on_top_of"));
        assert!(!n.contains(&"above"));
        let rec = &r.iter().find(|c| c.relation == "on_top_of").unwrap().record;
        assert!(rec.measurement("gap").unwrap().abs() < 1e-12);
        assert_eq!(rec.condition("centroid_in_footprint"), Some(true));
        // reverse direction has no support relation
        assert!(!names(&e.infer(&table, &cup)).contains(&"on_top_of"));
        assert!(names(&e.infer(&table, &cup)).is_empty());
    }

    #[test]
    fn inside_suppresses_everything() {
        let e = RelationEngine::default();
        let cup = body([0.3, 0.3, 0.3], [0.4, 0.4, 0.45]);
        let cabinet = body([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert_eq!(names(&e.infer(&cup, &cabinet)), vec!["inside"]);
    }

    #[test]
    fn lateral_pair() {
        let e = RelationEngine::default();
        let a = body([0.0, 0.0, 0.0], [0.4, 0.4, 0.4]);
        let b = body([0.8, 0.0, 0.0], [1.2, 0.4, 0.4]);
        assert_eq!(names(&e.infer(&a, &b)), vec!["left_of"]);
        assert_eq!(names(&e.infer(&b, &a)), vec!["right_of"]);
        let far = body([3.0, 0.0, 0.0], [3.4, 0.4, 0.4]);
        assert!(e.infer(&a, &far).is_empty());
    }

    #[test]
    fn above_requires_footprint_overlap() {
        let e = RelationEngine::default();
        let lamp = body([0.0, 0.0, 1.5], [0.5, 0.5, 1.8]);
        let desk = body([0.0, 0.0, 0.0], [1.0, 1.0, 0.7]);
        let r = e.infer(&lamp, &desk);
        assert_eq!(names(&r), vec!["above"]);
        assert_eq!(names(&e.infer(&desk, &lamp)), vec!["below"]);
        let shifted = body([0.9, 0.9, 1.5], [1.4, 1.4, 1.8]);
        assert!(!names(&e.infer(&shifted, &desk)).contains(&"above"));
    }

    #[test]
    fn unknown_vocabulary_name_fails() {
        let vocab = RelationVocabulary::new(vec!["inside".into(), "touching".into()]).unwrap();
        let err = RelationEngine::new(&PredicateRegistry::with_builtins(), vocab, PredicateConfig::default());
        assert!(matches!(err, Err(RelationError::UnknownRelation(n)) if n == "touching"));
        assert!(RelationVocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(RelationVocabulary::new(vec![]).is_err());
    }

    #[test]
    fn custom_predicate_registration() {
        struct Near;
        impl RelationPredicate for Near {
            fn name(&self) -> &str {
                "near"
            }
            fn tier(&self) -> Tier {
                Tier::Lateral
            }
            fn evaluate(&self, s: &Body, o: &Body, _cfg: &PredicateConfig) -> Option<Evidence> {
                let d = (s.aabb.center() - o.aabb.center()).norm();
                (d < 1.0).then(|| Evidence {
                    measurements: vec![],
                    thresholds: vec![],
                    conditions: vec![],
                    margin: 1.0 - d,
                })
            }
            fn phrase(&self) -> &str {
                "near"
            }
            fn evidence_clause(&self, _r: &PredicateRecord, obj: &str) -> String {
                format!("it is close to the {obj}")
            }
        }
        let mut reg = PredicateRegistry::with_builtins();
        reg.register(Arc::new(Near));
        let vocab = RelationVocabulary::new(vec!["near".into(), "left_of".into()]).unwrap();
        let e = RelationEngine::new(&reg, vocab, PredicateConfig::default()).unwrap();
        let a = body([0.0, 0.0, 0.0], [0.2, 0.2, 0.2]);
        let b = body([0.3, 0.0, 0.0], [0.5, 0.2, 0.2]);
        assert_eq!(names(&e.infer(&a, &b)), vec!["near", "left_of"]);
    }

    #[test]
    fn confidence_behaviour() {
        assert_eq!(confidence(0.0, 0.01, 0.01, 3.0), 0.0);
        assert_eq!(confidence(1.0, 0.01, 0.01, 3.0), 1.0);
        assert!((confidence(0.03, 0.01, 0.01, 3.0) - 0.5).abs() < 1e-12);
        assert_eq!(confidence(0.01, 0.0, 0.0, 3.0), 1.0);
    }

    fn arb_body() -> impl Strategy<Value = Body> {
        (
            -2.0f64..2.0,
            -2.0f64..2.0,
            0.0f64..2.0,
            0.01f64..1.0,
            0.01f64..1.0,
            0.01f64..1.0,
            0.0f64..0.02,
        )
            .prop_map(|(x, y, z, w, d, h, s)| Body {
                aabb: Aabb3::new(Vec3::new(x, y, z), Vec3::new(x + w, y + d, z + h)).unwrap(),
                sigma: s,
            })
    }

    fn has(v: &[RelationCandidate], n: &str) -> Option<f64> {
        v.iter().find(|c| c.relation == n).map(|c| c.confidence)
    }

    proptest! {
        #[test]
        fn antisymmetric_pairs(a in arb_body(), b in arb_body()) {
            let e = RelationEngine::default();
            let ab = e.infer(&a, &b);
            let ba = e.infer(&b, &a);
            for (x, y) in [("left_of", "right_of"), ("above", "below"), ("in_front_of", "behind")] {
                prop_assert_eq!(has(&ab, x), has(&ba, y));
                prop_assert_eq!(has(&ab, y), has(&ba, x));
            }
        }

        #[test]
        fn at_most_one_vertical(a in arb_body(), b in arb_body()) {
            let e = RelationEngine::default();
            let r = e.infer(&a, &b);
            let n = r.iter().filter(|c| ["inside", "on_top_of", "above", "below"].contains(&c.relation.as_str())).count();
            prop_assert!(n <= 1);
            for c in &r {
                prop_assert!((0.0..=1.0).contains(&c.confidence));
            }
        }

        #[test]
        fn scale_covariance(a in arb_body(), b in arb_body(), k in 0i32..4, up in any::<bool>()) {
            let s = if up { 2f64.powi(k) } else { 0.5f64.powi(k) };
            let scale = |x: &Body| Body {
                aabb: Aabb3::new(x.aabb.min * s, x.aabb.max * s).unwrap(),
                sigma: x.sigma * s,
            };
            let cfg = PredicateConfig::default();
            let scaled_cfg = PredicateConfig {
                contact_eps: cfg.contact_eps * s,
                lateral_pairing_max: cfg.lateral_pairing_max * s,
                ..cfg
            };
            let e = RelationEngine::with_config(cfg).unwrap();
            let es = RelationEngine::with_config(scaled_cfg).unwrap();
            let r1: Vec<String> = e.infer(&a, &b).into_iter().map(|c| c.relation).collect();
            let r2: Vec<String> = es.infer(&scale(&a), &scale(&b)).into_iter().map(|c| c.relation).collect();
            prop_assert_eq!(r1, r2);
        }

        #[test]
        fn confidence_monotone_in_margin(m1 in 0.0f64..0.2, m2 in 0.0f64..0.2, s1 in 0.0f64..0.05, s2 in 0.0f64..0.05) {
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(confidence(lo, s1, s2, 3.0) <= confidence(hi, s1, s2, 3.0));
        }
    }
}

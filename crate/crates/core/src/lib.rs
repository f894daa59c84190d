// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod relations;
pub mod ingest;
pub mod pipeline;
pub mod graph;
pub mod ontology;
pub mod explain;
pub mod analytics;
pub mod harness;

//! Candidate similarity graphs and heterogeneous graph neural networks for
//! predicting per-selection recruitment stages.
//!
//! The pipeline runs in stages:
//!
//! 1. [`profile`]: load and normalize candidate profiles and outcomes.
//! 2. [`embedding`]: embed every CV keyword and persist the vectors.
//! 3. [`knn`]: per-category nearest-neighbor tables over pooled keywords.
//! 4. [`similarity`]: neighbor-overlap similarity and the five-relation graph.
//! 5. [`gnn`] and [`learning`]: multi-task training on the graph.
//! 6. [`evaluation`]: stage metrics on the held-out pairs.
//!
//! [`synth`] generates datasets with planted signal and [`pipeline`] wires
//! the stages together for the command line.

pub mod profile;
pub mod embedding;
pub mod knn;
pub mod similarity;
pub mod gnn;
pub mod learning;
pub mod evaluation;
pub mod synth;
pub mod pipeline;

//! Stage orchestration over the on-disk formats, plus in-memory helpers
//! that run the same steps without touching files.

mod config;
mod stages;

use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore, StoreError};
use crate::evaluation::MetricReport;
use crate::gnn::{GnnError, ModelSpec};
use crate::knn::{neighbor_tables, KnnError, SearchMode};
use crate::learning::{
    records, stratified_split, train, Dataset, Fold, HeadKind, LearningError, Prediction,
    SplitAssignment, TrainConfig, TrainedModel,
};
use crate::profile::{normalize_traits, CandidateProfile, ProfileError, SelectionOutcome, TraitStats};
use crate::similarity::{build_graph, GraphBuildConfig, GraphError, HeteroGraph};
use crate::synth::SynthError;

pub use config::{Overrides, PipelineConfig, RunPaths, SearchSettings};
pub use stages::{
    run_build_graph, run_embed, run_evaluate, run_extract, run_pipeline, run_predict, run_synth,
    run_train, RunDir, RunManifest, StageEntry, StageOutcome, Subcommand, FileDigest, LOCK_FILE, MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad input data or configuration.
    #[error("{0}")]
    Validation(String),
    #[error("missing input file {}", .0.display())]
    MissingInput(std::path::PathBuf),
    /// Anything that went wrong while processing valid inputs.
    #[error("{0}")]
    Runtime(String),
    #[error("run directory {} is locked by another process ({})", .0.display(), .1)]
    Locked(std::path::PathBuf, String),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::MissingInput(_) => 1,
            PipelineError::Runtime(_) | PipelineError::Locked(..) => 2,
        }
    }
}

impl From<ProfileError> for PipelineError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::Io { .. } => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for PipelineError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Config(_) => PipelineError::Validation(e.to_string()),
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

impl From<KnnError> for PipelineError {
    fn from(e: KnnError) -> Self {
        match e {
            KnnError::Io(_) => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<GraphError> for PipelineError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(_) => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<GnnError> for PipelineError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::Spec(_) | GnnError::InvalidEdge(_) => PipelineError::Validation(e.to_string()),
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

impl From<LearningError> for PipelineError {
    fn from(e: LearningError) -> Self {
        match e {
            LearningError::EmptyOutcomes
            | LearningError::InvalidStage(_)
            | LearningError::UnknownCandidate(_)
            | LearningError::Unassigned { .. }
            | LearningError::UnknownSelection(_)
            | LearningError::Config(_)
            | LearningError::Checkpoint(_)
            | LearningError::Json(_) => PipelineError::Validation(e.to_string()),
            LearningError::Gnn(g) => g.into(),
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => PipelineError::Validation(e.to_string()),
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

/// Normalizes traits, builds the neighbor tables and assembles the graph.
pub fn graph_from_store(
    profiles: &[CandidateProfile],
    store: &EmbeddingStore,
    config: &GraphBuildConfig,
    mode: SearchMode,
) -> Result<(HeteroGraph, TraitStats), PipelineError> {
    config.validate()?;
    let (normalized, stats) = normalize_traits(profiles)?;
    let tables = neighbor_tables(store, config.k, mode)?;
    let graph = build_graph(&normalized, &tables, config)?;
    Ok((graph, stats))
}

/// Everything produced by one in-memory train/evaluate run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub split: SplitAssignment,
    pub trained: TrainedModel,
    pub predictions: Vec<Prediction>,
    pub test: MetricReport,
}

/// Splits `outcomes`, trains on the graph and scores the test pairs.
pub fn run_experiment(
    graph: &HeteroGraph,
    outcomes: &[SelectionOutcome],
    spec: ModelSpec,
    head: HeadKind,
    train_config: &TrainConfig,
    split_seed: u64,
) -> Result<Experiment, PipelineError> {
    let split = stratified_split(outcomes, 0.8, split_seed)?;
    let data = Dataset::new(graph.clone(), outcomes, &split)?;
    let trained = train(&data, spec, head, train_config)?;
    let predictions = trained.model.predict(&data)?;
    let test = MetricReport::compute(&records(&predictions, Fold::Test));
    Ok(Experiment {
        split,
        trained,
        predictions,
        test,
    })
}

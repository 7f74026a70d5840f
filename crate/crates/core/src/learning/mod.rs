//! Multi-task training of stage predictors on the candidate graph.
//!
//! A shared [`HeteroGnn`] trunk embeds every candidate; each selection has
//! its own [`TaskHead`]. Training is transductive: the whole graph is
//! propagated every epoch and the loss only reads train pairs.

mod checkpoint;
mod heads;
mod optim;
mod search;
mod split;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{evaluate, EvalRecord, EvaluationReport};
use crate::gnn::{
    graph_adjacency, graph_features, AdjacencySet, ConvKind, DenseMatrix, GnnError, GnnGrads,
    HeteroGnn, ModelSpec, Tape,
};
use crate::profile::{EntityCategory, SelectionOutcome, Stage};
use crate::similarity::HeteroGraph;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use heads::{
    monotone_probabilities, multilabel_targets, ordinal_targets, predict_stage, score_high,
    task_loss, HeadKind, TaskHead,
};
pub use optim::Adam;
pub use search::{random_search, sample_trials, SearchResult, SearchSpace, Trial};
pub use split::{stratified_split, Fold, SplitAssignment};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("no outcomes to split")]
    EmptyOutcomes,
    #[error("stage {0} is outside 0..=3")]
    InvalidStage(u8),
    #[error("candidate {0:?} has an outcome but no graph node")]
    UnknownCandidate(String),
    #[error("pair ({candidate}, {selection}) has no split assignment")]
    Unassigned { candidate: String, selection: String },
    #[error("selection {0:?} has no head in the model")]
    UnknownSelection(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Inverse-frequency weights per (selection, stage) on train pairs.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.003,
            seed: 0,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearningError> {
        if self.epochs == 0 {
            return Err(LearningError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(LearningError::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub node: usize,
    /// Index into [`Dataset::selections`].
    pub selection: usize,
    pub stage: u8,
    pub fold: Fold,
}

/// Graph plus labeled, fold-assigned (candidate, selection) pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: HeteroGraph,
    /// Sorted selection ids.
    pub selections: Vec<String>,
    pub pairs: Vec<LabeledPair>,
}

impl Dataset {
    pub fn new(
        graph: HeteroGraph,
        outcomes: &[SelectionOutcome],
        split: &SplitAssignment,
    ) -> Result<Self, LearningError> {
        let mut selections: Vec<String> = outcomes.iter().map(|o| o.selection_id.clone()).collect();
        selections.sort();
        selections.dedup();
        let mut pairs = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let node = graph
                .node_index(&o.candidate_id)
                .ok_or_else(|| LearningError::UnknownCandidate(o.candidate_id.clone()))?;
            let fold = split
                .fold(&o.candidate_id, &o.selection_id)
                .ok_or_else(|| LearningError::Unassigned {
                    candidate: o.candidate_id.clone(),
                    selection: o.selection_id.clone(),
                })?;
            pairs.push(LabeledPair {
                node,
                selection: selections.binary_search(&o.selection_id).unwrap(),
                stage: o.stage.value(),
                fold,
            });
        }
        pairs.sort_by_key(|p| (p.selection, p.node));
        Ok(Dataset {
            graph,
            selections,
            pairs,
        })
    }

    pub fn outcomes(&self, fold: Fold) -> Vec<SelectionOutcome> {
        self.pairs
            .iter()
            .filter(|p| p.fold == fold)
            .map(|p| SelectionOutcome {
                candidate_id: self.graph.nodes[p.node].clone(),
                selection_id: self.selections[p.selection].clone(),
                stage: Stage::ALL[p.stage as usize],
            })
            .collect()
    }

    /// Train pairs with their loss weights. Weights sum to the number of
    /// train pairs either way.
    pub fn train_pairs(&self, class_weighting: bool) -> Vec<WeightedPair> {
        let train: Vec<&LabeledPair> = self.pairs.iter().filter(|p| p.fold == Fold::Train).collect();
        let mut counts = vec![[0usize; 4]; self.selections.len()];
        for p in &train {
            counts[p.selection][p.stage as usize] += 1;
        }
        train
            .iter()
            .map(|p| {
                let c = &counts[p.selection];
                let weight = if class_weighting {
                    let total: usize = c.iter().sum();
                    let present = c.iter().filter(|&&n| n > 0).count();
                    total as f64 / (present * c[p.stage as usize]) as f64
                } else {
                    1.0
                };
                WeightedPair {
                    node: p.node,
                    head: p.selection,
                    stage: p.stage,
                    weight,
                }
            })
            .collect()
    }
}

/// One loss term: embedding row `node` through head `head`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub node: usize,
    pub head: usize,
    pub stage: u8,
    pub weight: f64,
}

/// Gradients shaped like a [`StageModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub gnn: GnnGrads,
    pub heads: Vec<TaskHead>,
}

impl ModelGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.gnn.slices();
        for h in &self.heads {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }
}

/// GNN trunk plus one head per selection.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub gnn: HeteroGnn,
    pub head: HeadKind,
    pub heads: Vec<TaskHead>,
}

impl StageModel {
    pub fn new(
        spec: ModelSpec,
        head: HeadKind,
        input_dim: usize,
        relations: &[EntityCategory],
        selections: &[String],
        seed: u64,
    ) -> Result<Self, LearningError> {
        let gnn = HeteroGnn::new(spec, input_dim, relations, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let heads = selections
            .iter()
            .map(|s| TaskHead::new(s, head, spec.hidden, &mut rng))
            .collect();
        Ok(StageModel { gnn, head, heads })
    }

    pub fn spec(&self) -> ModelSpec {
        self.gnn.spec
    }

    pub fn head_index(&self, selection_id: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.selection_id == selection_id)
    }

    /// `(name, shape)` per tensor, in [`Self::param_slices`] order.
    pub fn param_layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = self.gnn.param_layout();
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("head.{i}.weight"), h.weight.shape()));
            out.push((format!("head.{i}.bias"), (1, h.bias.len())));
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.gnn.param_slices();
        for h in &self.heads {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.gnn.param_slices_mut();
        for h in &mut self.heads {
            out.push(h.weight.as_mut_slice());
            out.push(&mut h.bias);
        }
        out
    }

    /// Weighted mean loss over `pairs` and its gradient.
    pub fn objective(
        &self,
        x: &DenseMatrix,
        adj: &AdjacencySet,
        first_messages: Option<&[Option<DenseMatrix>]>,
        pairs: &[WeightedPair],
        tape: &mut Tape,
    ) -> Result<(f64, ModelGrads), LearningError> {
        let h = self.gnn.forward_with(x, adj, first_messages, tape)?;
        let total_weight: f64 = pairs.iter().map(|p| p.weight).sum();
        let mut head_grads: Vec<TaskHead> = self.heads.iter().map(TaskHead::zeros_like).collect();
        let mut dh = DenseMatrix::zeros(h.rows(), h.cols());
        let mut loss = 0.0;
        if total_weight > 0.0 {
            for p in pairs {
                let head = self
                    .heads
                    .get(p.head)
                    .ok_or_else(|| LearningError::Config(format!("no head {}", p.head)))?;
                let targets = self.head.targets(p.stage)?;
                let scale = p.weight / total_weight;
                let l = head.accumulate(
                    h.row(p.node),
                    &targets,
                    scale,
                    &mut head_grads[p.head],
                    dh.row_mut(p.node),
                );
                loss += scale * l;
            }
        }
        if !loss.is_finite() {
            return Err(LearningError::NonFiniteLoss);
        }
        let gnn = self.gnn.backward(tape, adj, &dh, false)?;
        Ok((
            loss,
            ModelGrads {
                gnn,
                heads: head_grads,
            },
        ))
    }

    /// Head probabilities for `(node, head)` pairs.
    pub fn probabilities(
        &self,
        x: &DenseMatrix,
        adj: &AdjacencySet,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<Vec<f64>>, LearningError> {
        let h = self.gnn.forward(x, adj, &mut Tape::new())?;
        Ok(pairs
            .iter()
            .map(|&(node, head)| self.heads[head].probabilities(h.row(node)))
            .collect())
    }

    /// Decoded predictions for every pair of `data`.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Prediction>, LearningError> {
        let adj = graph_adjacency(&data.graph, self.spec().conv)?;
        let x = graph_features(&data.graph);
        let head_of: Vec<usize> = data
            .selections
            .iter()
            .map(|s| self.head_index(s).ok_or_else(|| LearningError::UnknownSelection(s.clone())))
            .collect::<Result<_, _>>()?;
        let index: Vec<(usize, usize)> = data
            .pairs
            .iter()
            .map(|p| (p.node, head_of[p.selection]))
            .collect();
        let probs = self.probabilities(&x, &adj, &index)?;
        Ok(data
            .pairs
            .iter()
            .zip(probs)
            .map(|(p, probabilities)| Prediction {
                candidate_id: data.graph.nodes[p.node].clone(),
                selection_id: data.selections[p.selection].clone(),
                fold: p.fold,
                truth: p.stage,
                predicted: predict_stage(self.head, &probabilities),
                score_high: score_high(self.head, &probabilities),
                probabilities,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub candidate_id: String,
    pub selection_id: String,
    pub fold: Fold,
    pub truth: u8,
    pub predicted: u8,
    pub score_high: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn record(&self) -> EvalRecord {
        EvalRecord {
            candidate_id: self.candidate_id.clone(),
            selection_id: self.selection_id.clone(),
            truth: self.truth,
            predicted: self.predicted,
            score_high: self.score_high,
        }
    }
}

pub fn records(predictions: &[Prediction], fold: Fold) -> Vec<EvalRecord> {
    predictions
        .iter()
        .filter(|p| p.fold == fold)
        .map(Prediction::record)
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: StageModel,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

/// Full-batch training on the train pairs of `data`.
pub fn train(
    data: &Dataset,
    spec: ModelSpec,
    head: HeadKind,
    config: &TrainConfig,
) -> Result<TrainedModel, LearningError> {
    config.validate()?;
    let mut model = StageModel::new(
        spec,
        head,
        data.graph.feature_dim,
        &EntityCategory::ALL,
        &data.selections,
        config.seed,
    )?;
    let adj = graph_adjacency(&data.graph, spec.conv)?;
    let x = graph_features(&data.graph);
    let first = model.gnn.propagate(&x, &adj);
    let pairs = data.train_pairs(config.class_weighting);
    let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);
    let mut tape = Tape::new();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = match model.objective(&x, &adj, Some(&first), &pairs, &mut tape) {
            Ok(v) => v,
            Err(LearningError::NonFiniteLoss | LearningError::Gnn(GnnError::NonFinite(_))) => {
                return Err(LearningError::Divergence { epoch })
            }
            Err(e) => return Err(e),
        };
        losses.push(loss);
        adam.step(model.param_slices_mut(), grads.slices());
        if model.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(LearningError::Divergence { epoch });
        }
    }
    Ok(TrainedModel { model, losses })
}

/// Document written to `train_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub conv: ConvKind,
    pub head: HeadKind,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    pub search: Option<SearchResult>,
    pub train_metrics: EvaluationReport,
    pub test_metrics: EvaluationReport,
    pub train_pairs: usize,
    pub test_pairs: usize,
}

impl TrainReport {
    pub fn new(
        trained: &TrainedModel,
        config: TrainConfig,
        search: Option<SearchResult>,
        predictions: &[Prediction],
    ) -> Self {
        let train = records(predictions, Fold::Train);
        let test = records(predictions, Fold::Test);
        let spec = trained.model.spec();
        TrainReport {
            conv: spec.conv,
            head: trained.model.head,
            spec,
            config,
            losses: trained.losses.clone(),
            search,
            train_metrics: evaluate(&train),
            test_metrics: evaluate(&test),
            train_pairs: train.len(),
            test_pairs: test.len(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), LearningError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Stage counts per selection over the given pairs, for reporting.
pub fn stage_counts(data: &Dataset, fold: Fold) -> BTreeMap<String, [usize; 4]> {
    let mut out: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for p in data.pairs.iter().filter(|p| p.fold == fold) {
        out.entry(data.selections[p.selection].clone()).or_default()[p.stage as usize] += 1;
    }
    out
}

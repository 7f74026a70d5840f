//! Heterogeneous graph convolution with a hand-written backward pass.
//!
//! A layer maps node features `H` (n × d_in) to `H'` (n × d_out):
//!
//! ```text
//! GCN:   H' = act( Σ_r Ā_r H W_r + b )
//! RGCN:  H' = act( H W_0 + Σ_r Ā_r H W_r + b )
//! ```
//!
//! `Ā_r` is the normalized operator of relation `r` (see
//! [`normalize_adjacency`]). Relations are summed before the single
//! nonlinearity. In GCN form a relation without edges contributes nothing,
//! not even its self-loops.

mod activation;
mod adjacency;
mod matrix;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::EntityCategory;
use crate::similarity::HeteroGraph;

pub use activation::{sigmoid, softplus, Activation};
pub use adjacency::{normalize_adjacency, AdjacencyMode, RelationAdjacency};
pub use matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("relation {0} has no adjacency")]
    MissingRelation(EntityCategory),
    #[error("relation {category} was normalized for {found:?}, model expects {expected:?}")]
    AdjacencyMode {
        category: EntityCategory,
        expected: AdjacencyMode,
        found: AdjacencyMode,
    },
    #[error("non-finite values in the output of layer {0}")]
    NonFinite(usize),
    #[error("backward called before a forward pass was recorded")]
    BackwardBeforeForward,
    #[error("invalid model spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Gcn,
    Rgcn,
}

impl ConvKind {
    pub fn adjacency_mode(self) -> AdjacencyMode {
        match self {
            ConvKind::Gcn => AdjacencyMode::Gcn,
            ConvKind::Rgcn => AdjacencyMode::Rgcn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub conv: ConvKind,
    pub hidden: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            conv: ConvKind::Gcn,
            hidden: 32,
            depth: 2,
            activation: Activation::Tanh,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.hidden == 0 || self.depth == 0 {
            return Err(GnnError::Spec(format!(
                "hidden {} and depth {} must be positive",
                self.hidden, self.depth
            )));
        }
        Ok(())
    }
}

/// Normalized operators keyed by relation.
pub type AdjacencySet = BTreeMap<EntityCategory, RelationAdjacency>;

/// Normalizes every relation of `graph` for the given convolution.
pub fn graph_adjacency(graph: &HeteroGraph, conv: ConvKind) -> Result<AdjacencySet, GnnError> {
    EntityCategory::ALL
        .into_iter()
        .map(|c| {
            normalize_adjacency(c, graph.node_count(), graph.edges(c), conv.adjacency_mode())
                .map(|a| (c, a))
        })
        .collect()
}

pub fn graph_features(graph: &HeteroGraph) -> DenseMatrix {
    DenseMatrix::from_vec(graph.node_count(), graph.feature_dim, graph.features.clone())
}

/// Parameters of one heterogeneous layer (also used to hold gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroConvLayer {
    /// One `d_in × d_out` matrix per relation, in model relation order.
    pub relation_weights: Vec<DenseMatrix>,
    /// Self-connection `W_0`, RGCN only.
    pub self_weight: Option<DenseMatrix>,
    pub bias: Vec<f64>,
}

impl HeteroConvLayer {
    fn zeros_like(&self) -> Self {
        HeteroConvLayer {
            relation_weights: self
                .relation_weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            self_weight: self
                .self_weight
                .as_ref()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols())),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.relation_weights
            .first()
            .or(self.self_weight.as_ref())
            .map_or(0, DenseMatrix::rows)
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

/// Intermediate values of one forward pass, consumed by backward.
#[derive(Debug, Default)]
pub struct Tape {
    layers: Vec<LayerRecord>,
}

#[derive(Debug)]
struct LayerRecord {
    input: DenseMatrix,
    /// `Ā_r · input` per relation; `None` when the relation is skipped.
    messages: Vec<Option<DenseMatrix>>,
    pre: DenseMatrix,
    out: DenseMatrix,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn clear(&mut self) {
        self.layers.clear();
    }

    /// Output of the last recorded layer.
    pub fn output(&self) -> Option<&DenseMatrix> {
        self.layers.last().map(|l| &l.out)
    }
}

/// Parameter gradients, plus the input gradient when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGrads {
    pub layers: Vec<HeteroConvLayer>,
    pub input: Option<DenseMatrix>,
}

impl GnnGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        layer_slices(&self.layers)
    }
}

fn layer_slices(layers: &[HeteroConvLayer]) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for layer in layers {
        for w in &layer.relation_weights {
            out.push(w.as_slice());
        }
        if let Some(w) = &layer.self_weight {
            out.push(w.as_slice());
        }
        out.push(&layer.bias);
    }
    out
}

/// Stack of heterogeneous convolution layers over a fixed set of relations.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGnn {
    pub spec: ModelSpec,
    pub relations: Vec<EntityCategory>,
    pub layers: Vec<HeteroConvLayer>,
}

impl HeteroGnn {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn new(
        spec: ModelSpec,
        input_dim: usize,
        relations: &[EntityCategory],
        seed: u64,
    ) -> Result<Self, GnnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let d_in = if l == 0 { input_dim } else { spec.hidden };
            let relation_weights = relations
                .iter()
                .map(|_| glorot(&mut rng, d_in, spec.hidden))
                .collect();
            let self_weight =
                (spec.conv == ConvKind::Rgcn).then(|| glorot(&mut rng, d_in, spec.hidden));
            layers.push(HeteroConvLayer {
                relation_weights,
                self_weight,
                bias: vec![0.0; spec.hidden],
            });
        }
        Ok(HeteroGnn {
            spec,
            relations: relations.to_vec(),
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, HeteroConvLayer::out_dim)
    }

    /// `(name, shape)` per parameter tensor, in [`Self::param_slices`] order.
    pub fn param_layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (r, w) in self.relations.iter().zip(&layer.relation_weights) {
                out.push((format!("gnn.{l}.{r}.weight"), w.shape()));
            }
            if let Some(w) = &layer.self_weight {
                out.push((format!("gnn.{l}.self.weight"), w.shape()));
            }
            out.push((format!("gnn.{l}.bias"), (1, layer.bias.len())));
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        layer_slices(&self.layers)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for w in &mut layer.relation_weights {
                out.push(w.as_mut_slice());
            }
            if let Some(w) = &mut layer.self_weight {
                out.push(w.as_mut_slice());
            }
            out.push(&mut layer.bias);
        }
        out
    }

    fn check_inputs(&self, x: &DenseMatrix, adj: &AdjacencySet) -> Result<(), GnnError> {
        let expected_in = self.layers[0].in_dim();
        if x.cols() != expected_in {
            return Err(GnnError::Shape(format!(
                "features have {} columns, model expects {expected_in}",
                x.cols()
            )));
        }
        let mode = self.spec.conv.adjacency_mode();
        for r in &self.relations {
            let a = adj.get(r).ok_or(GnnError::MissingRelation(*r))?;
            if a.nodes() != x.rows() {
                return Err(GnnError::Shape(format!(
                    "relation {r} covers {} nodes, features have {} rows",
                    a.nodes(),
                    x.rows()
                )));
            }
            if a.mode != mode {
                return Err(GnnError::AdjacencyMode {
                    category: *r,
                    expected: mode,
                    found: a.mode,
                });
            }
        }
        Ok(())
    }

    /// Messages `Ā_r · x` for every relation that takes part in propagation.
    pub fn propagate(&self, x: &DenseMatrix, adj: &AdjacencySet) -> Vec<Option<DenseMatrix>> {
        self.relations
            .iter()
            .map(|r| {
                let a = &adj[r];
                let skip = self.spec.conv == ConvKind::Gcn && !a.has_edges();
                (!skip).then(|| a.apply(x))
            })
            .collect()
    }

    /// Runs all layers and records intermediates on `tape` (cleared first).
    pub fn forward(
        &self,
        x: &DenseMatrix,
        adj: &AdjacencySet,
        tape: &mut Tape,
    ) -> Result<DenseMatrix, GnnError> {
        self.forward_with(x, adj, None, tape)
    }

    /// Like [`Self::forward`], reusing first-layer messages computed by
    /// [`Self::propagate`] on the same `x`.
    pub fn forward_with(
        &self,
        x: &DenseMatrix,
        adj: &AdjacencySet,
        first_messages: Option<&[Option<DenseMatrix>]>,
        tape: &mut Tape,
    ) -> Result<DenseMatrix, GnnError> {
        self.check_inputs(x, adj)?;
        tape.clear();
        let mut input = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let messages = match (l, first_messages) {
                (0, Some(m)) => m.to_vec(),
                _ => self.propagate(&input, adj),
            };
            let mut pre = DenseMatrix::zeros(input.rows(), layer.out_dim());
            for (msg, w) in messages.iter().zip(&layer.relation_weights) {
                if let Some(m) = msg {
                    pre.add_assign(&m.matmul(w));
                }
            }
            if let Some(w0) = &layer.self_weight {
                pre.add_assign(&input.matmul(w0));
            }
            for r in 0..pre.rows() {
                for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let act = self.spec.activation;
            let out = pre.map(|z| act.apply(z));
            if !out.is_finite() {
                return Err(GnnError::NonFinite(l));
            }
            tape.layers.push(LayerRecord {
                input: std::mem::replace(&mut input, out.clone()),
                messages,
                pre,
                out,
            });
        }
        Ok(input)
    }

    /// Back-propagates `grad_out` (gradient of the loss w.r.t. the final
    /// layer output) through the recorded pass.
    pub fn backward(
        &self,
        tape: &Tape,
        adj: &AdjacencySet,
        grad_out: &DenseMatrix,
        want_input_grad: bool,
    ) -> Result<GnnGrads, GnnError> {
        if tape.layers.is_empty() {
            return Err(GnnError::BackwardBeforeForward);
        }
        if tape.layers.len() != self.layers.len() {
            return Err(GnnError::Shape(format!(
                "tape has {} layers, model has {}",
                tape.layers.len(),
                self.layers.len()
            )));
        }
        let last = tape.layers.last().unwrap();
        if grad_out.shape() != last.out.shape() {
            return Err(GnnError::Shape(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.shape(),
                last.out.shape()
            )));
        }
        let act = self.spec.activation;
        let mut grads: Vec<HeteroConvLayer> =
            self.layers.iter().map(HeteroConvLayer::zeros_like).collect();
        let mut upstream = grad_out.clone();
        let mut input_grad = None;
        for l in (0..self.layers.len()).rev() {
            let rec = &tape.layers[l];
            let layer = &self.layers[l];
            let mut dz = upstream;
            for (d, (&z, &a)) in dz
                .as_mut_slice()
                .iter_mut()
                .zip(rec.pre.as_slice().iter().zip(rec.out.as_slice()))
            {
                *d *= act.derivative(z, a);
            }
            let g = &mut grads[l];
            g.bias = dz.column_sums();
            for (r, msg) in rec.messages.iter().enumerate() {
                if let Some(m) = msg {
                    g.relation_weights[r] = m.t_matmul(&dz);
                }
            }
            if l == 0 && !want_input_grad {
                if let Some(w0) = &mut g.self_weight {
                    *w0 = rec.input.t_matmul(&dz);
                }
                break;
            }
            let mut dx = DenseMatrix::zeros(rec.input.rows(), rec.input.cols());
            for (r, msg) in rec.messages.iter().enumerate() {
                if msg.is_some() {
                    let back = dz.matmul_t(&layer.relation_weights[r]);
                    dx.add_assign(&adj[&self.relations[r]].apply_transpose(&back));
                }
            }
            if let (Some(w0), Some(gw0)) = (&layer.self_weight, &mut g.self_weight) {
                *gw0 = rec.input.t_matmul(&dz);
                dx.add_assign(&dz.matmul_t(w0));
            }
            if l == 0 {
                input_grad = Some(dx);
                break;
            }
            upstream = dx;
        }
        Ok(GnnGrads {
            layers: grads,
            input: input_grad,
        })
    }
}

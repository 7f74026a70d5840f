//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use talentgraph::evaluation::EvalRecord;
use talentgraph::gnn::{Activation, ConvKind, DenseMatrix, HeteroGnn};
use talentgraph::knn::VectorId;
use talentgraph::profile::EntityCategory;
use talentgraph::similarity::Edge;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &DenseMatrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

/// Random undirected edges without self-loops or repeats.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Edge> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(Edge {
                    i: i as u32,
                    j: j as u32,
                    weight: rng.random_range(0.05..0.7),
                });
            }
        }
    }
    edges
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    DenseMatrix::from_vec(rows, cols, data)
}

/// D^{-1/2} (A + I) D^{-1/2} with weighted degrees.
pub fn gcn_operator(n: usize, edges: &[Edge]) -> Dense {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for e in edges {
        a[e.i as usize][e.j as usize] += e.weight;
        a[e.j as usize][e.i as usize] += e.weight;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

/// Mean over distinct neighbors, ignoring weights; no self term.
pub fn rgcn_operator(n: usize, edges: &[Edge]) -> Dense {
    let mut nb: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for e in edges {
        nb[e.i as usize].insert(e.j as usize);
        nb[e.j as usize].insert(e.i as usize);
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if nb[i].contains(&j) { 1.0 / nb[i].len() as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::LeakyRelu => {
            if z > 0.0 {
                z
            } else {
                0.01 * z
            }
        }
        Activation::Elu => {
            if z > 0.0 {
                z
            } else {
                z.exp() - 1.0
            }
        }
        Activation::Tanh => z.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        Activation::Identity => z,
    }
}

/// Dense forward pass of `model` with edges given per model relation.
/// Returns every layer's pre-activation and output.
pub fn dense_forward(model: &HeteroGnn, x: &Dense, edges: &[Vec<Edge>]) -> Vec<(Dense, Dense)> {
    let n = x.len();
    let conv = model.spec.conv;
    let ops: Vec<Option<Dense>> = edges
        .iter()
        .map(|e| match conv {
            ConvKind::Gcn if e.is_empty() => None,
            ConvKind::Gcn => Some(gcn_operator(n, e)),
            ConvKind::Rgcn => Some(rgcn_operator(n, e)),
        })
        .collect();
    let mut h = x.clone();
    let mut out = Vec::new();
    for layer in &model.layers {
        let d_out = layer.bias.len();
        let mut pre = vec![layer.bias.clone(); n];
        let mut add = |m: Dense| {
            for (p, r) in pre.iter_mut().zip(m) {
                for (a, b) in p.iter_mut().zip(r) {
                    *a += b;
                }
            }
        };
        for (op, w) in ops.iter().zip(&layer.relation_weights) {
            if let Some(op) = op {
                add(matmul(&matmul(op, &h), &to_dense(w)));
            }
        }
        if let Some(w0) = &layer.self_weight {
            add(matmul(&h, &to_dense(w0)));
        }
        assert!(pre.iter().all(|r| r.len() == d_out));
        let act = model.spec.activation;
        let next: Dense = pre.iter().map(|r| r.iter().map(|&z| activate(act, z)).collect()).collect();
        out.push((pre, next.clone()));
        h = next;
    }
    out
}

/// Edges relabelled by `perm[old] = new`.
pub fn permute_edges(edges: &[Edge], perm: &[usize]) -> Vec<Edge> {
    edges
        .iter()
        .map(|e| {
            let (a, b) = (perm[e.i as usize] as u32, perm[e.j as usize] as u32);
            Edge {
                i: a.min(b),
                j: a.max(b),
                weight: e.weight,
            }
        })
        .collect()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

// ---- metrics ----

pub fn record(truth: u8, predicted: u8, score: f64) -> EvalRecord {
    EvalRecord {
        candidate_id: String::new(),
        selection_id: String::new(),
        truth,
        predicted,
        score_high: score,
    }
}

pub fn brute_balanced_accuracy(r: &[EvalRecord]) -> Option<f64> {
    let mut recalls = Vec::new();
    for c in 0..4u8 {
        let support = r.iter().filter(|x| x.truth == c).count();
        if support > 0 {
            let hit = r.iter().filter(|x| x.truth == c && x.predicted == c).count();
            recalls.push(hit as f64 / support as f64);
        }
    }
    if recalls.is_empty() {
        None
    } else {
        Some(recalls.iter().sum::<f64>() / recalls.len() as f64)
    }
}

pub fn brute_weighted_f1(r: &[EvalRecord]) -> Option<f64> {
    if r.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for c in 0..4u8 {
        let tp = r.iter().filter(|x| x.truth == c && x.predicted == c).count() as f64;
        let fp = r.iter().filter(|x| x.truth != c && x.predicted == c).count() as f64;
        let fne = r.iter().filter(|x| x.truth == c && x.predicted != c).count() as f64;
        let support = tp + fne;
        if support == 0.0 {
            continue;
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / support;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += f1 * support / r.len() as f64;
    }
    Some(total)
}

pub fn brute_mae_rmse(r: &[EvalRecord]) -> Option<(f64, f64)> {
    if r.is_empty() {
        return None;
    }
    let n = r.len() as f64;
    let mae = r.iter().map(|x| (x.truth as f64 - x.predicted as f64).abs()).sum::<f64>() / n;
    let mse = r.iter().map(|x| (x.truth as f64 - x.predicted as f64).powi(2)).sum::<f64>() / n;
    Some((mae, mse.sqrt()))
}

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
pub fn brute_grouped_auc(r: &[EvalRecord]) -> Option<f64> {
    let pos: Vec<f64> = r.iter().filter(|x| x.truth >= 2).map(|x| x.score_high).collect();
    let neg: Vec<f64> = r.iter().filter(|x| x.truth < 2).map(|x| x.score_high).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Random records; scores are drawn from a coarse grid so ties occur.
pub fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<EvalRecord> {
    (0..n)
        .map(|_| {
            let truth = rng.random_range(0..4u8);
            let predicted = if rng.random_bool(0.4) { truth } else { rng.random_range(0..4u8) };
            record(truth, predicted, rng.random_range(0..20u32) as f64 / 19.0)
        })
        .collect()
}

// ---- nearest neighbors and overlap ----

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Top-`k` by cosine over every other entry; ties go to the smaller id.
pub fn brute_knn(entries: &[(VectorId, Vec<f32>)], query: usize, k: usize) -> Vec<VectorId> {
    let mut scored: Vec<(f64, &VectorId)> = entries
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != query)
        .map(|(_, (id, v))| (cosine(&entries[query].1, v), id))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

/// Overlap of every candidate pair computed straight from the definition:
/// a vector counts when its closed neighborhood meets the closed
/// neighborhood of some vector of the other candidate.
pub fn brute_overlaps(
    entries: &[(VectorId, Vec<f32>)],
    k: usize,
) -> BTreeMap<(String, String), f64> {
    let closed: BTreeMap<&VectorId, BTreeSet<VectorId>> = entries
        .iter()
        .enumerate()
        .map(|(q, (id, _))| {
            let mut n: BTreeSet<VectorId> = brute_knn(entries, q, k).into_iter().collect();
            n.insert(id.clone());
            (id, n)
        })
        .collect();
    let mut owned: BTreeMap<&str, Vec<&VectorId>> = BTreeMap::new();
    for (id, _) in entries {
        owned.entry(id.candidate_id.as_str()).or_default().push(id);
    }
    let counts = |from: &[&VectorId], to: &[&VectorId]| {
        from.iter()
            .filter(|v| to.iter().any(|w| !closed[*v].is_disjoint(&closed[*w])))
            .count()
    };
    let mut out = BTreeMap::new();
    for (a, va) in &owned {
        for (b, vb) in &owned {
            if a == b {
                continue;
            }
            let num = counts(va, vb) + counts(vb, va);
            out.insert(
                (a.to_string(), b.to_string()),
                num as f64 / (va.len() + vb.len()) as f64,
            );
        }
    }
    out
}

/// A pool of `candidates` owners with 1..=per vectors each in dimension `d`.
/// With `duplicates`, some vectors are exact copies of earlier ones.
pub fn random_pool(
    rng: &mut ChaCha8Rng,
    category: EntityCategory,
    candidates: usize,
    per: u32,
    d: usize,
    duplicates: bool,
) -> Vec<(VectorId, Vec<f32>)> {
    let mut out: Vec<(VectorId, Vec<f32>)> = Vec::new();
    for c in 0..candidates {
        for p in 0..rng.random_range(1..=per) {
            let v = if duplicates && !out.is_empty() && rng.random_bool(0.1) {
                out[rng.random_range(0..out.len())].1.clone()
            } else {
                (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()
            };
            out.push((VectorId::new(format!("c{c:03}"), category, p), v));
        }
    }
    out
}

// ---- gradient checks ----

use talentgraph::gnn::{normalize_adjacency, AdjacencySet, ModelSpec, Tape};
use talentgraph::knn::{NeighborTable, SearchMode};
use talentgraph::learning::{monotone_probabilities, HeadKind, Prediction, StageModel, WeightedPair};
use talentgraph::profile::{CandidateProfile, Entities, NUM_TRAITS};
use talentgraph::similarity::{build_graph, overlap, GraphBuildConfig, OverlapRule};

/// A small random model with data, for gradient checks.
pub struct GradCase {
    pub model: StageModel,
    pub x: DenseMatrix,
    pub adj: AdjacencySet,
    pub pairs: Vec<WeightedPair>,
}

pub fn adjacency_set(n: usize, edges: &[(EntityCategory, Vec<Edge>)], conv: ConvKind) -> AdjacencySet {
    edges
        .iter()
        .map(|(c, e)| (*c, normalize_adjacency(*c, n, e, conv.adjacency_mode()).unwrap()))
        .collect()
}

impl GradCase {
    pub fn random(rng: &mut ChaCha8Rng, conv: ConvKind, activation: Activation, head: HeadKind) -> Self {
        let n = rng.random_range(3..=10);
        let d_in = rng.random_range(1..=4);
        let relations: Vec<EntityCategory> = {
            let mut all = EntityCategory::ALL.to_vec();
            all.shuffle(rng);
            all.truncate(rng.random_range(1..=5));
            all.sort();
            all
        };
        let spec = ModelSpec {
            conv,
            hidden: rng.random_range(2..=4),
            depth: rng.random_range(1..=3),
            activation,
        };
        let selections: Vec<String> = (0..rng.random_range(1..=3)).map(|s| format!("s{s}")).collect();
        let mut model =
            StageModel::new(spec, head, d_in, &relations, &selections, rng.random()).unwrap();
        // nonzero biases and thresholds so every parameter matters
        for s in model.param_slices_mut() {
            for v in s.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let edges: Vec<(EntityCategory, Vec<Edge>)> =
            relations.iter().map(|&c| (c, random_edges(rng, n, 0.4))).collect();
        let adj = adjacency_set(n, &edges, conv);
        let x = random_matrix(rng, n, d_in, 1.0);
        let pairs = (0..rng.random_range(2..=2 * n))
            .map(|_| WeightedPair {
                node: rng.random_range(0..n),
                head: rng.random_range(0..selections.len()),
                stage: rng.random_range(0..4),
                weight: rng.random_range(0.5..2.0),
            })
            .collect();
        GradCase { model, x, adj, pairs }
    }

    pub fn loss(&self, model: &StageModel) -> f64 {
        model
            .objective(&self.x, &self.adj, None, &self.pairs, &mut Tape::new())
            .unwrap()
            .0
    }

    /// Largest relative error between the analytic gradient and central
    /// differences over every parameter. Errors are measured against
    /// `max(|analytic|, |numeric|, floor)`.
    pub fn max_relative_error(&self, step: f64, floor: f64) -> (f64, String) {
        let (_, grads) = self
            .model
            .objective(&self.x, &self.adj, None, &self.pairs, &mut Tape::new())
            .unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let layout = self.model.param_layout();
        let mut worst = (0.0, String::new());
        for (t, g) in analytic.iter().enumerate() {
            for (i, &a) in g.iter().enumerate() {
                let at = |offset: f64| {
                    let mut m = self.model.clone();
                    m.param_slices_mut()[t][i] += offset;
                    self.loss(&m)
                };
                // five-point central stencil
                let numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step)))
                    / (12.0 * step);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                if err > worst.0 {
                    worst = (err, format!("{}[{i}]: analytic {a:e}, numeric {numeric:e}", layout[t].0));
                }
            }
        }
        worst
    }
}

// ---- model forward ----

pub const ACTIVATIONS: [Activation; 4] = [
    Activation::LeakyRelu,
    Activation::Elu,
    Activation::Tanh,
    Activation::Sigmoid,
];

pub fn relations(k: usize) -> Vec<EntityCategory> {
    EntityCategory::ALL[..k].to_vec()
}

pub fn forward(model: &HeteroGnn, n: usize, x: &Dense, edges: &[Vec<Edge>]) -> Dense {
    let per: Vec<(EntityCategory, Vec<Edge>)> =
        model.relations.iter().copied().zip(edges.iter().cloned()).collect();
    let adj = adjacency_set(n, &per, model.spec.conv);
    let xm = talentgraph::gnn::DenseMatrix::from_rows(x);
    to_dense(&model.forward(&xm, &adj, &mut Tape::new()).unwrap())
}

pub fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dense {
    to_dense(&random_matrix(rng, n, d, 1.0))
}

pub fn with_random_bias(mut model: HeteroGnn, rng: &mut ChaCha8Rng) -> HeteroGnn {
    for layer in &mut model.layers {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    model
}

// ---- graph pools ----

/// `n` random vectors, two per candidate, with exact copies sprinkled in
/// so that only the id order can break some ties.
pub fn tied_entries(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<(VectorId, Vec<f32>)> {
    let cat = EntityCategory::HardSkills;
    let mut entries: Vec<(VectorId, Vec<f32>)> = (0..n)
        .map(|i| {
            let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            (VectorId::new(format!("c{:03}", i / 2), cat, (i % 2) as u32), v)
        })
        .collect();
    for i in (0..n).step_by(7) {
        let src = (i * 13 + 5) % n;
        entries[i].1 = entries[src].1.clone();
    }
    entries
}

pub fn profiles_for(entries: &[(VectorId, Vec<f32>)]) -> Vec<CandidateProfile> {
    let mut ids: Vec<&str> = entries.iter().map(|(id, _)| id.candidate_id.as_str()).collect();
    ids.dedup();
    ids.into_iter()
        .map(|id| CandidateProfile {
            candidate_id: id.to_string(),
            traits: vec![Some(0.0); NUM_TRAITS],
            entities: Entities::new(),
        })
        .collect()
}

/// Checks overlap and graph edges of one pool against the brute force.
pub fn check_pool(entries: Vec<(VectorId, Vec<f32>)>, k: usize, config: &GraphBuildConfig) {
    let category = entries[0].0.category;
    let expected = brute_overlaps(&entries, k);
    let table = NeighborTable::build(category, entries.clone(), k, SearchMode::Exact).unwrap();
    for ((a, b), &j) in &expected {
        let got = overlap(a, b, &table, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!(got.value, j, "J({a}, {b})");
        assert!((0.0..=1.0).contains(&got.value));
        assert_eq!(expected[&(b.clone(), a.clone())], j, "symmetry of ({a}, {b})");
    }
    let profiles = profiles_for(&entries);
    let tables = BTreeMap::from([(category, table)]);
    let graph = build_graph(&profiles, &tables, config).unwrap();
    let mut want = Vec::new();
    for ((a, b), &j) in &expected {
        let w = (1.0 - (-config.lambda * j).exp() - config.theta).max(0.0);
        if a < b && w > 0.0 {
            want.push((graph.node_index(a).unwrap() as u32, graph.node_index(b).unwrap() as u32, w));
        }
    }
    want.sort_by_key(|e| (e.0, e.1));
    let got: Vec<(u32, u32, f64)> = graph.edges(category).iter().map(|e| (e.i, e.j, e.weight)).collect();
    assert_eq!(got, want);
    for c in EntityCategory::ALL {
        if c != category {
            assert!(graph.edges(c).is_empty());
        }
    }
}

// ---- decoding ----

/// Decoding invariants shared by both heads.
pub fn assert_consistent(head: HeadKind, preds: &[Prediction]) {
    for p in preds {
        assert!(p.predicted <= 3);
        assert!((0.0..=1.0).contains(&p.score_high));
        match head {
            HeadKind::Ordinal => {
                assert_eq!(p.probabilities.len(), 3);
                assert!(p.probabilities.windows(2).all(|w| w[0] >= w[1]), "{:?}", p.probabilities);
                let reached = p.probabilities.iter().take_while(|&&q| q > 0.5).count();
                assert_eq!(p.predicted as usize, reached);
            }
            HeadKind::Multilabel => {
                assert_eq!(p.probabilities.len(), 4);
                let m = monotone_probabilities(&p.probabilities);
                assert!(m.windows(2).all(|w| w[0] >= w[1]));
                for (k, &q) in m.iter().enumerate().skip(1) {
                    assert_eq!(k <= p.predicted as usize, q > 0.5, "{:?}", p.probabilities);
                }
                assert_eq!(p.score_high, m[2]);
            }
        }
    }
}

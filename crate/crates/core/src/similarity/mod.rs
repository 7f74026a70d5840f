//! Neighbor-overlap similarity between candidates and graph assembly.
//!
//! For a category, each keyword vector `x` has a closed neighborhood
//! `N(x) = kNN(x) ∪ {x}`. The overlap of candidates `i` and `j` counts the
//! vectors on either side whose neighborhood meets some neighborhood on the
//! other side, divided by the total number of vectors of the pair:
//!
//! ```text
//! J(i, j) = (|{v ∈ E_i : ∃w ∈ E_j, N(v) ∩ N(w) ≠ ∅}| + |{w ∈ E_j : ∃v ∈ E_i, ...}|)
//!           / (|E_i| + |E_j|)
//! ```
//!
//! The edge weight is `max(1 - exp(-λ J) - θ, 0)`; zero weights are dropped.

mod graph;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knn::NeighborTable;
use crate::profile::{CandidateProfile, EntityCategory, NUM_TRAITS};

pub use graph::{read_graph, write_graph, Edge, GraphFile, HeteroGraph};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph configuration: {0}")]
    Config(String),
    #[error("graph has no candidates")]
    NoCandidates,
    #[error("candidate {0:?} appears in a neighbor table but not among the nodes")]
    UnknownCandidate(String),
    #[error("candidate {0:?} has missing traits; normalize before building the graph")]
    MissingTraits(String),
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// How neighbor sets of two candidates are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapRule {
    /// Count vectors sharing at least one closed-neighborhood member.
    #[default]
    SharedNeighbor,
    /// Count vector pairs with `kNN(v) ⊆ kNN(w)`; asymmetric, capped at 1.
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphBuildConfig {
    pub k: usize,
    pub lambda: f64,
    pub theta: f64,
    pub overlap_rule: OverlapRule,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            k: 10,
            lambda: 2.0,
            theta: 0.2,
            overlap_rule: OverlapRule::SharedNeighbor,
        }
    }
}

impl GraphBuildConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.k < 1 {
            return Err(GraphError::Config("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(GraphError::Config(format!("lambda {} must be > 0", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(GraphError::Config(format!(
                "theta {} must lie in [0, 1)",
                self.theta
            )));
        }
        Ok(())
    }

    /// Largest weight any edge can reach: `1 - exp(-λ) - θ`, floored at 0.
    pub fn max_weight(&self) -> f64 {
        similarity(1.0, self)
    }
}

/// Thresholded exponential similarity of an overlap value.
pub fn similarity(j: f64, config: &GraphBuildConfig) -> f64 {
    (1.0 - (-config.lambda * j).exp() - config.theta).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapResult {
    pub i: String,
    pub j: String,
    pub category: EntityCategory,
    pub numerator: usize,
    pub denominator: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("overlap undefined: candidate {0:?} has no vectors in this category")]
pub struct OverlapUndefined(pub String);

/// Per-candidate view of one neighbor table.
#[derive(Debug)]
pub struct CategoryView<'a> {
    table: &'a NeighborTable,
    /// Candidates present in the table, ascending.
    candidates: Vec<&'a str>,
    /// Vector positions (into `table.ids`) owned by each candidate.
    members: Vec<Vec<u32>>,
    /// Sorted closed neighborhoods N(x).
    closed: Vec<Vec<u32>>,
    /// Sorted union of N(x) over each candidate's vectors.
    reach: Vec<Vec<u32>>,
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn is_subset(a: &[u32], b: &[u32]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

impl<'a> CategoryView<'a> {
    pub fn new(table: &'a NeighborTable) -> Self {
        let mut candidates: Vec<&str> = Vec::new();
        let mut members: Vec<Vec<u32>> = Vec::new();
        // ids are sorted by candidate first, so owners are contiguous
        for (pos, id) in table.ids.iter().enumerate() {
            if candidates.last() != Some(&id.candidate_id.as_str()) {
                candidates.push(&id.candidate_id);
                members.push(Vec::new());
            }
            members.last_mut().unwrap().push(pos as u32);
        }
        let closed: Vec<Vec<u32>> = table
            .neighbors
            .iter()
            .enumerate()
            .map(|(pos, list)| {
                let mut n = list.clone();
                n.push(pos as u32);
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        let reach = members
            .iter()
            .map(|owned| {
                let mut u: Vec<u32> = owned
                    .iter()
                    .flat_map(|&v| closed[v as usize].iter().copied())
                    .collect();
                u.sort_unstable();
                u.dedup();
                u
            })
            .collect();
        CategoryView {
            table,
            candidates,
            members,
            closed,
            reach,
        }
    }

    pub fn category(&self) -> EntityCategory {
        self.table.category
    }

    pub fn candidates(&self) -> &[&'a str] {
        &self.candidates
    }

    fn local(&self, candidate: &str) -> Option<usize> {
        self.candidates.binary_search(&candidate).ok()
    }

    fn counts(&self, a: usize, b: usize, rule: OverlapRule) -> usize {
        match rule {
            OverlapRule::SharedNeighbor => {
                let side = |from: usize, to: usize| {
                    self.members[from]
                        .iter()
                        .filter(|&&v| intersects(&self.closed[v as usize], &self.reach[to]))
                        .count()
                };
                side(a, b) + side(b, a)
            }
            OverlapRule::Subset => {
                let knn = |v: u32| {
                    let mut n = self.table.neighbors[v as usize].clone();
                    n.sort_unstable();
                    n
                };
                let mut count = 0;
                for &v in &self.members[a] {
                    let nv = knn(v);
                    for &w in &self.members[b] {
                        if is_subset(&nv, &knn(w)) {
                            count += 1;
                        }
                    }
                }
                count
            }
        }
    }

    /// Overlap of candidates `i` and `j` in this category.
    pub fn overlap(&self, i: &str, j: &str, rule: OverlapRule) -> Result<OverlapResult, OverlapUndefined> {
        let a = self.local(i).ok_or_else(|| OverlapUndefined(i.to_string()))?;
        let b = self.local(j).ok_or_else(|| OverlapUndefined(j.to_string()))?;
        Ok(self.overlap_local(a, b, rule))
    }

    fn overlap_local(&self, a: usize, b: usize, rule: OverlapRule) -> OverlapResult {
        let numerator = self.counts(a, b, rule);
        let denominator = self.members[a].len() + self.members[b].len();
        OverlapResult {
            i: self.candidates[a].to_string(),
            j: self.candidates[b].to_string(),
            category: self.table.category,
            numerator,
            denominator,
            value: (numerator as f64 / denominator as f64).min(1.0),
        }
    }

    /// Local candidate index pairs `(a, b)`, `a < b`, whose vectors have at
    /// least one pair of intersecting closed neighborhoods.
    fn local_pairs(&self) -> BTreeSet<(u32, u32)> {
        let owner: Vec<u32> = {
            let mut owner = vec![0u32; self.table.ids.len()];
            for (c, owned) in self.members.iter().enumerate() {
                for &v in owned {
                    owner[v as usize] = c as u32;
                }
            }
            owner
        };
        // postings[y] = owners of vectors x with y ∈ N(x)
        let mut postings: Vec<Vec<u32>> = vec![Vec::new(); self.table.ids.len()];
        for (x, n) in self.closed.iter().enumerate() {
            for &y in n {
                postings[y as usize].push(owner[x]);
            }
        }
        let mut pairs = BTreeSet::new();
        for mut owners in postings {
            owners.sort_unstable();
            owners.dedup();
            for (p, &a) in owners.iter().enumerate() {
                for &b in &owners[p + 1..] {
                    pairs.insert((a, b));
                }
            }
        }
        pairs
    }

    /// Candidate pairs with a possibly nonzero overlap, as `(i, j)` with `i < j`.
    pub fn candidate_pairs(&self) -> BTreeSet<(String, String)> {
        self.local_pairs()
            .into_iter()
            .map(|(a, b)| {
                (
                    self.candidates[a as usize].to_string(),
                    self.candidates[b as usize].to_string(),
                )
            })
            .collect()
    }
}

/// Overlap of two candidates in one category's neighbor table.
pub fn overlap(
    i: &str,
    j: &str,
    table: &NeighborTable,
    rule: OverlapRule,
) -> Result<OverlapResult, OverlapUndefined> {
    CategoryView::new(table).overlap(i, j, rule)
}

pub fn candidate_pairs(table: &NeighborTable) -> BTreeSet<(String, String)> {
    CategoryView::new(table).candidate_pairs()
}

/// Assembles the heterogeneous graph: one node per profile (sorted by id)
/// carrying its normalized traits, one weighted relation per category.
pub fn build_graph(
    profiles: &[CandidateProfile],
    tables: &BTreeMap<EntityCategory, NeighborTable>,
    config: &GraphBuildConfig,
) -> Result<HeteroGraph, GraphError> {
    config.validate()?;
    if profiles.is_empty() {
        return Err(GraphError::NoCandidates);
    }
    let mut order: Vec<&CandidateProfile> = profiles.iter().collect();
    order.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
    let mut nodes = Vec::with_capacity(order.len());
    let mut features = Vec::with_capacity(order.len() * NUM_TRAITS);
    for p in &order {
        if nodes.last() == Some(&p.candidate_id) {
            return Err(GraphError::DuplicateNode(p.candidate_id.clone()));
        }
        nodes.push(p.candidate_id.clone());
        for t in &p.traits {
            features.push(t.ok_or_else(|| GraphError::MissingTraits(p.candidate_id.clone()))?);
        }
    }
    let mut graph = HeteroGraph::new(nodes, NUM_TRAITS, features)?;
    for (category, table) in tables {
        let view = CategoryView::new(table);
        let node_of: Vec<u32> = view
            .candidates
            .iter()
            .map(|c| {
                graph
                    .node_index(c)
                    .map(|n| n as u32)
                    .ok_or_else(|| GraphError::UnknownCandidate(c.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let edges = graph.edges_mut(*category);
        for (a, b) in view.local_pairs() {
            let result = view.overlap_local(a as usize, b as usize, config.overlap_rule);
            let weight = similarity(result.value, config);
            if weight > 0.0 {
                let (i, j) = (node_of[a as usize], node_of[b as usize]);
                edges.push(Edge {
                    i: i.min(j),
                    j: i.max(j),
                    weight,
                });
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::{SearchMode, VectorId};
    use crate::profile::Entities;

    const CAT: EntityCategory = EntityCategory::SoftSkills;

    fn table(entries: Vec<(&str, u32, Vec<f32>)>, k: usize) -> NeighborTable {
        NeighborTable::build(
            CAT,
            entries
                .into_iter()
                .map(|(c, p, v)| (VectorId::new(c, CAT, p), v))
                .collect(),
            k,
            SearchMode::Exact,
        )
        .unwrap()
    }

    fn profile(id: &str) -> CandidateProfile {
        CandidateProfile {
            candidate_id: id.into(),
            traits: vec![Some(0.0); NUM_TRAITS],
            entities: Entities::new(),
        }
    }

    #[test]
    fn eq2_point_values() {
        let cfg = GraphBuildConfig::default();
        assert_eq!(similarity(0.0, &cfg), 0.0);
        let expected = 1.0 - (-2.0f64).exp() - 0.2;
        assert!((similarity(1.0, &cfg) - expected).abs() < 1e-12);
        assert!((similarity(1.0, &cfg) - 0.664665).abs() < 1e-6);
        // 1 - e^-0.1 - 0.2 ≈ -0.104837 clamps to zero
        assert_eq!(similarity(0.05, &cfg), 0.0);
    }

    #[test]
    fn config_validation() {
        let ok = GraphBuildConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            GraphBuildConfig { k: 0, ..ok },
            GraphBuildConfig { lambda: 0.0, ..ok },
            GraphBuildConfig { theta: 1.0, ..ok },
            GraphBuildConfig { theta: -0.1, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn identical_singletons_have_full_overlap() {
        let v = vec![1.0, 0.0, 0.0];
        let t = table(vec![("a", 0, v.clone()), ("b", 0, v)], 10);
        let r = overlap("a", "b", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!((r.numerator, r.denominator), (2, 2));
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn disjoint_singletons_have_zero_overlap() {
        // pool of four, k = 1: a↔a2 and b↔b2 are mutual nearest pairs
        let t = table(
            vec![
                ("a", 0, vec![1.0, 0.0]),
                ("a2", 0, vec![0.99, 0.14]),
                ("b", 0, vec![-1.0, 0.0]),
                ("b2", 0, vec![-0.99, -0.14]),
            ],
            1,
        );
        let r = overlap("a", "b", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!(r.numerator, 0);
        assert_eq!(r.value, 0.0);
        assert!(!candidate_pairs(&t).contains(&("a".to_string(), "b".to_string())));
    }

    #[test]
    fn missing_side_is_undefined() {
        let t = table(vec![("a", 0, vec![1.0, 0.0])], 3);
        assert_eq!(
            overlap("a", "zz", &t, OverlapRule::SharedNeighbor),
            Err(OverlapUndefined("zz".into()))
        );
    }

    #[test]
    fn two_by_three_partial_overlap() {
        // i = {i0, i1}, j = {j0, j1, j2}, k = 1; only i0 and j0 are close
        let t = table(
            vec![
                ("i", 0, vec![1.0, 0.0, 0.0, 0.0]),
                ("i", 1, vec![0.0, 1.0, 0.0, 0.0]),
                ("j", 0, vec![0.95, 0.0, 0.31, 0.0]),
                ("j", 1, vec![0.0, 0.0, 0.0, 1.0]),
                ("j", 2, vec![0.0, -0.3, 0.0, 0.95]),
            ],
            1,
        );
        let n = |c: &str, p: u32| t.neighbors(&VectorId::new(c, CAT, p)).unwrap()[0].clone();
        assert_eq!(n("i", 0), VectorId::new("j", CAT, 0));
        assert_eq!(n("j", 0), VectorId::new("i", CAT, 0));
        assert_eq!(n("j", 1), VectorId::new("j", CAT, 2));
        assert_eq!(n("j", 2), VectorId::new("j", CAT, 1));
        // i1 is at cosine 0 from i0, j0 and j1; the tie goes to the smallest id
        assert_eq!(n("i", 1), VectorId::new("i", CAT, 0));
        // i0 and i1 both reach i0 ∈ N(j0); j1 and j2 only reach each other
        let r = overlap("i", "j", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!((r.numerator, r.denominator), (3, 5));
        let r2 = overlap("j", "i", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!(r.numerator, r2.numerator);
    }

    #[test]
    fn exactly_one_vector_each_side_gives_two_fifths() {
        // i = {i0, i1}, j = {j0, j1, j2}; k = 1. Pairs of mutual nearest
        // neighbors: (i0, j0), (i1, x1), (j1, x2), (j2, x3) where x* belong to
        // other candidates, so only i0 and j0 share neighbors across i and j.
        let t = table(
            vec![
                ("i", 0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                ("j", 0, vec![0.99, 0.14, 0.0, 0.0, 0.0, 0.0]),
                ("i", 1, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
                ("x", 0, vec![0.0, 0.0, 0.99, 0.14, 0.0, 0.0]),
                ("j", 1, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
                ("x", 1, vec![0.0, 0.0, 0.0, 0.0, 0.99, 0.14]),
                ("j", 2, vec![0.0, 0.0, 0.0, 0.0, -1.0, 0.0]),
                ("y", 0, vec![0.0, 0.0, 0.0, 0.0, -0.99, 0.14]),
            ],
            1,
        );
        let r = overlap("i", "j", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!((r.numerator, r.denominator), (2, 5));
        assert!((r.value - 0.4).abs() < 1e-15);
    }

    #[test]
    fn subset_rule_is_available() {
        let v = vec![1.0, 0.0, 0.0];
        let t = table(
            vec![("a", 0, v.clone()), ("b", 0, v.clone()), ("c", 0, vec![0.0, 1.0, 0.0])],
            2,
        );
        let r = overlap("a", "b", &t, OverlapRule::Subset).unwrap();
        // kNN(a) = {b, c}, kNN(b) = {a, c}: neither contains the other
        assert_eq!(r.numerator, 0);
        let r = overlap("a", "b", &t, OverlapRule::SharedNeighbor).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn identical_candidates_get_five_max_weight_edges() {
        let mut tables = BTreeMap::new();
        for (ci, cat) in EntityCategory::ALL.into_iter().enumerate() {
            let mut v = vec![0.0f32; 5];
            v[ci] = 1.0;
            let t = NeighborTable::build(
                cat,
                vec![
                    (VectorId::new("a", cat, 0), v.clone()),
                    (VectorId::new("b", cat, 0), v),
                ],
                10,
                SearchMode::Exact,
            )
            .unwrap();
            tables.insert(cat, t);
        }
        let cfg = GraphBuildConfig::default();
        let g = build_graph(&[profile("b"), profile("a")], &tables, &cfg).unwrap();
        assert_eq!(g.nodes, vec!["a", "b"]);
        assert_eq!(g.total_edges(), 5);
        for cat in EntityCategory::ALL {
            let e = &g.edges(cat)[0];
            assert_eq!((e.i, e.j), (0, 1));
            assert!((e.weight - 0.664665).abs() < 1e-6);
        }
        let strict = GraphBuildConfig { theta: 0.999, ..cfg };
        assert_eq!(build_graph(&[profile("a"), profile("b")], &tables, &strict).unwrap().total_edges(), 0);
    }

    #[test]
    fn build_graph_rejects_bad_inputs() {
        let cfg = GraphBuildConfig::default();
        assert!(matches!(
            build_graph(&[], &BTreeMap::new(), &cfg),
            Err(GraphError::NoCandidates)
        ));
        let t = table(vec![("ghost", 0, vec![1.0, 0.0])], 2);
        let tables = BTreeMap::from([(CAT, t)]);
        assert!(matches!(
            build_graph(&[profile("a")], &tables, &cfg),
            Err(GraphError::UnknownCandidate(_))
        ));
        let mut p = profile("a");
        p.traits[0] = None;
        assert!(matches!(
            build_graph(&[p], &BTreeMap::new(), &cfg),
            Err(GraphError::MissingTraits(_))
        ));
    }
}

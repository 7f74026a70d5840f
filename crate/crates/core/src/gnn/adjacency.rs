use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, GnnError};
use crate::profile::EntityCategory;
use crate::similarity::Edge;

/// How a relation's edge list becomes a propagation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// `D̂^{-1/2} (A_w + I) D̂^{-1/2}` with weighted degrees.
    Gcn,
    /// `1 / |N(i)|` on every neighbor, weights ignored, no self-loop.
    Rgcn,
}

/// Normalized sparse operator of one relation over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationAdjacency {
    pub category: EntityCategory,
    pub mode: AdjacencyMode,
    nodes: usize,
    /// `(row, col, coefficient)` sorted by row, then column.
    entries: Vec<(u32, u32, f64)>,
    row_ptr: Vec<usize>,
    edge_count: usize,
}

impl RelationAdjacency {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// Number of distinct undirected input edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn has_edges(&self) -> bool {
        self.edge_count > 0
    }

    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        let slice = &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]];
        slice
            .binary_search_by_key(&(col as u32), |e| e.1)
            .map_or(0.0, |k| slice[k].2)
    }

    /// `Ā · x`
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.nodes, "adjacency apply shape");
        let mut out = DenseMatrix::zeros(self.nodes, x.cols());
        for r in 0..self.nodes {
            let dst = out.row_mut(r);
            for &(_, c, w) in &self.entries[self.row_ptr[r]..self.row_ptr[r + 1]] {
                for (d, s) in dst.iter_mut().zip(x.row(c as usize)) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `Āᵀ · g`
    pub fn apply_transpose(&self, g: &DenseMatrix) -> DenseMatrix {
        assert_eq!(g.rows(), self.nodes, "adjacency transpose shape");
        let mut out = DenseMatrix::zeros(self.nodes, g.cols());
        for &(r, c, w) in &self.entries {
            let src = g.row(r as usize);
            for (d, s) in out.row_mut(c as usize).iter_mut().zip(src) {
                *d += w * s;
            }
        }
        out
    }

    /// Dense copy, for tests and small graphs.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nodes, self.nodes);
        for &(r, c, w) in &self.entries {
            m.set(r as usize, c as usize, m.get(r as usize, c as usize) + w);
        }
        m
    }
}

/// Builds the normalized operator of one relation. Edges are undirected;
/// repeated pairs are merged (weights summed in GCN mode).
pub fn normalize_adjacency(
    category: EntityCategory,
    nodes: usize,
    edges: &[Edge],
    mode: AdjacencyMode,
) -> Result<RelationAdjacency, GnnError> {
    let mut merged: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for e in edges {
        if !(e.weight >= 0.0 && e.weight.is_finite()) {
            return Err(GnnError::InvalidEdge(format!(
                "edge ({}, {}) has weight {}",
                e.i, e.j, e.weight
            )));
        }
        if e.i == e.j {
            return Err(GnnError::InvalidEdge(format!("self-loop on node {}", e.i)));
        }
        if e.i as usize >= nodes || e.j as usize >= nodes {
            return Err(GnnError::InvalidEdge(format!(
                "edge ({}, {}) outside {nodes} nodes",
                e.i, e.j
            )));
        }
        *merged.entry((e.i.min(e.j), e.i.max(e.j))).or_default() += e.weight;
    }
    let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * merged.len() + nodes);
    match mode {
        AdjacencyMode::Gcn => {
            let mut degree = vec![1.0f64; nodes];
            for (&(i, j), &w) in &merged {
                degree[i as usize] += w;
                degree[j as usize] += w;
            }
            let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
            for n in 0..nodes {
                entries.push((n as u32, n as u32, inv_sqrt[n] * inv_sqrt[n]));
            }
            for (&(i, j), &w) in &merged {
                let c = w * inv_sqrt[i as usize] * inv_sqrt[j as usize];
                entries.push((i, j, c));
                entries.push((j, i, c));
            }
        }
        AdjacencyMode::Rgcn => {
            let mut count = vec![0usize; nodes];
            for &(i, j) in merged.keys() {
                count[i as usize] += 1;
                count[j as usize] += 1;
            }
            for &(i, j) in merged.keys() {
                entries.push((i, j, 1.0 / count[i as usize] as f64));
                entries.push((j, i, 1.0 / count[j as usize] as f64));
            }
        }
    }
    entries.sort_by_key(|e| (e.0, e.1));
    let mut row_ptr = vec![0usize; nodes + 1];
    for e in &entries {
        row_ptr[e.0 as usize + 1] += 1;
    }
    for r in 0..nodes {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(RelationAdjacency {
        category,
        mode,
        nodes,
        entries,
        row_ptr,
        edge_count: merged.len(),
    })
}

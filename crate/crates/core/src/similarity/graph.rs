use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::profile::EntityCategory;

/// Undirected weighted edge stored once with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

/// Candidate nodes with trait features and one edge list per category.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub nodes: Vec<String>,
    pub feature_dim: usize,
    /// Row-major `nodes.len() × feature_dim`.
    pub features: Vec<f64>,
    edges: [Vec<Edge>; 5],
}

impl HeteroGraph {
    /// `nodes` must be strictly ascending.
    pub fn new(nodes: Vec<String>, feature_dim: usize, features: Vec<f64>) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::NoCandidates);
        }
        if let Some(pair) = nodes.windows(2).find(|p| p[0] >= p[1]) {
            return Err(GraphError::DuplicateNode(pair[1].clone()));
        }
        if features.len() != nodes.len() * feature_dim {
            return Err(GraphError::Format {
                line: 0,
                message: format!(
                    "feature matrix has {} values for {} nodes × {feature_dim}",
                    features.len(),
                    nodes.len()
                ),
            });
        }
        Ok(HeteroGraph {
            nodes,
            feature_dim,
            features,
            edges: Default::default(),
        })
    }

    /// Combines a graph file with features ordered like its nodes.
    pub fn from_file(file: GraphFile, features: Vec<f64>) -> Result<Self, GraphError> {
        let mut g = HeteroGraph::new(file.nodes, file.feature_dim, features)?;
        g.edges = file.edges;
        g.check_edges()?;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, candidate_id: &str) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| n.as_str().cmp(candidate_id))
            .ok()
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn edges(&self, category: EntityCategory) -> &[Edge] {
        &self.edges[category.index()]
    }

    pub(crate) fn edges_mut(&mut self, category: EntityCategory) -> &mut Vec<Edge> {
        &mut self.edges[category.index()]
    }

    /// Replaces one relation; edges are validated and sorted.
    pub fn set_edges(&mut self, category: EntityCategory, mut edges: Vec<Edge>) -> Result<(), GraphError> {
        edges.sort_by_key(|e| (e.i, e.j));
        self.edges[category.index()] = edges;
        self.check_edges()
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn edge_counts(&self) -> [usize; 5] {
        std::array::from_fn(|c| self.edges[c].len())
    }

    fn check_edges(&self) -> Result<(), GraphError> {
        let n = self.nodes.len() as u32;
        for (c, list) in self.edges.iter().enumerate() {
            for (idx, e) in list.iter().enumerate() {
                let bad = |message: String| GraphError::Format { line: 0, message };
                if e.i >= e.j || e.j >= n {
                    return Err(bad(format!("edge ({}, {}) in relation {c} is not i < j < {n}", e.i, e.j)));
                }
                if !(e.weight > 0.0 && e.weight.is_finite()) {
                    return Err(bad(format!("edge ({}, {}) has weight {}", e.i, e.j, e.weight)));
                }
                if idx > 0 && (list[idx - 1].i, list[idx - 1].j) >= (e.i, e.j) {
                    return Err(bad(format!("duplicate or unsorted edge ({}, {})", e.i, e.j)));
                }
            }
        }
        Ok(())
    }
}

/// Topology as stored in `graph.jsonl` (features travel separately).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub feature_dim: usize,
    pub edges: [Vec<Edge>; 5],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    nodes: Vec<String>,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeLine {
    category: u8,
    i: u32,
    j: u32,
    weight: f64,
}

/// Rounds to 9 significant digits.
fn round_sig9(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Writes the header line, then one line per edge ordered by
/// (category, i, j). Weights keep 9 significant digits.
pub fn write_graph(path: &Path, graph: &HeteroGraph) -> Result<(), GraphError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        &mut w,
        &Header {
            nodes: graph.nodes.clone(),
            feature_dim: graph.feature_dim,
        },
    )?;
    w.write_all(b"\n")?;
    for category in EntityCategory::ALL {
        for e in graph.edges(category) {
            serde_json::to_writer(
                &mut w,
                &EdgeLine {
                    category: category.code(),
                    i: e.i,
                    j: e.j,
                    weight: round_sig9(e.weight),
                },
            )?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<GraphFile, GraphError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((n, Ok(l))) => {
                break serde_json::from_str(&l).map_err(|e| GraphError::Format {
                    line: n + 1,
                    message: e.to_string(),
                })?
            }
            Some((_, Err(e))) => return Err(e.into()),
            None => {
                return Err(GraphError::Format {
                    line: 1,
                    message: "missing header line".into(),
                })
            }
        }
    };
    let mut edges: [Vec<Edge>; 5] = Default::default();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| GraphError::Format { line: n + 1, message };
        let e: EdgeLine = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
        let category = EntityCategory::from_code(e.category)
            .ok_or_else(|| fmt(format!("unknown category code {}", e.category)))?;
        edges[category.index()].push(Edge {
            i: e.i,
            j: e.j,
            weight: e.weight,
        });
    }
    Ok(GraphFile {
        nodes: header.nodes,
        feature_dim: header.feature_dim,
        edges,
    })
}

//! Cosine nearest-neighbor search over pooled keyword vectors.
//!
//! One index is built per entity category over the vectors of every
//! candidate. Results are ordered by descending cosine similarity; ties are
//! broken by ascending [`VectorId`], so results never depend on insertion
//! order. Exact search is the reference; [`SearchMode::Ivf`] is an inverted
//! file index that honors the same query contract approximately.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingStore;
use crate::profile::EntityCategory;

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("cannot build an index over an empty pool")]
    EmptyPool,
    #[error("vector {id} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: VectorId,
        expected: usize,
        found: usize,
    },
    #[error("vector {0} has zero or non-finite norm")]
    ZeroVector(VectorId),
    #[error("vector id {0} appears twice")]
    DuplicateId(VectorId),
    #[error("vector id {0} is not in the index")]
    UnknownId(VectorId),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Identifies one keyword vector: candidate, category, position in its set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VectorId {
    #[serde(rename = "candidate")]
    pub candidate_id: String,
    pub category: EntityCategory,
    pub position: u32,
}

impl VectorId {
    pub fn new(candidate_id: impl Into<String>, category: EntityCategory, position: u32) -> Self {
        VectorId {
            candidate_id: candidate_id.into(),
            category,
            position,
        }
    }
}

impl std::fmt::Display for VectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.candidate_id, self.category, self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SearchMode {
    #[default]
    Exact,
    /// Spherical k-means partition into `lists` cells; a query scans the
    /// `probes` cells whose centroids are most similar to it.
    Ivf { lists: usize, probes: usize, seed: u64 },
}

#[derive(Debug, Clone)]
struct IvfPartition {
    centroids: Vec<Vec<f64>>,
    members: Vec<Vec<u32>>,
    probes: usize,
}

#[derive(Debug, Clone)]
pub struct Index {
    dim: usize,
    ids: Vec<VectorId>,
    // unit-normalized rows, in id order
    rows: Vec<f64>,
    ivf: Option<IvfPartition>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &[f32]) -> Option<Vec<f64>> {
    let wide: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    let norm = dot(&wide, &wide).sqrt();
    (norm.is_finite() && norm > 0.0).then(|| wide.iter().map(|x| x / norm).collect())
}

// descending similarity, then ascending index (= ascending VectorId)
fn rank(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_k(mut scored: Vec<(f64, u32)>, k: usize) -> Vec<u32> {
    if k == 0 || scored.is_empty() {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank);
    scored.into_iter().map(|(_, i)| i).collect()
}

impl Index {
    pub fn build(entries: Vec<(VectorId, Vec<f32>)>, mode: SearchMode) -> Result<Self, KnnError> {
        if entries.is_empty() {
            return Err(KnnError::EmptyPool);
        }
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(KnnError::DuplicateId(pair[0].0.clone()));
            }
        }
        let dim = entries[0].1.len();
        let mut rows = Vec::with_capacity(entries.len() * dim);
        let mut ids = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.len() != dim {
                return Err(KnnError::DimensionMismatch {
                    id,
                    expected: dim,
                    found: v.len(),
                });
            }
            let u = unit(&v).ok_or_else(|| KnnError::ZeroVector(id.clone()))?;
            rows.extend(u);
            ids.push(id);
        }
        let mut index = Index {
            dim,
            ids,
            rows,
            ivf: None,
        };
        if let SearchMode::Ivf {
            lists,
            probes,
            seed,
        } = mode
        {
            index.ivf = Some(index.partition(lists, probes, seed));
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn position_of(&self, id: &VectorId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn partition(&self, lists: usize, probes: usize, seed: u64) -> IvfPartition {
        let n = self.len();
        let lists = lists.clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids: Vec<Vec<f64>> = sample(&mut rng, n, lists)
            .into_iter()
            .map(|i| self.row(i).to_vec())
            .collect();
        let mut assign = vec![0usize; n];
        for _ in 0..10 {
            for (i, slot) in assign.iter_mut().enumerate() {
                let row = self.row(i);
                *slot = (0..lists)
                    .max_by(|&a, &b| {
                        dot(row, &centroids[a])
                            .total_cmp(&dot(row, &centroids[b]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
            }
            let mut sums = vec![vec![0.0; self.dim]; lists];
            for (i, &c) in assign.iter().enumerate() {
                for (s, x) in sums[c].iter_mut().zip(self.row(i)) {
                    *s += x;
                }
            }
            for (c, s) in sums.into_iter().enumerate() {
                let norm = dot(&s, &s).sqrt();
                // empty cells keep their previous centroid
                if norm > 0.0 {
                    centroids[c] = s.iter().map(|x| x / norm).collect();
                }
            }
        }
        let mut members = vec![Vec::new(); lists];
        for (i, &c) in assign.iter().enumerate() {
            members[c].push(i as u32);
        }
        IvfPartition {
            centroids,
            members,
            probes: probes.clamp(1, lists),
        }
    }

    fn search(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<u32> {
        let keep = |i: usize| Some(i) != exclude;
        let scored: Vec<(f64, u32)> = match &self.ivf {
            None => (0..self.len())
                .filter(|&i| keep(i))
                .map(|i| (dot(q, self.row(i)), i as u32))
                .collect(),
            Some(ivf) => {
                let cells: Vec<(f64, u32)> = ivf
                    .centroids
                    .iter()
                    .enumerate()
                    .map(|(c, centroid)| (dot(q, centroid), c as u32))
                    .collect();
                top_k(cells, ivf.probes)
                    .into_iter()
                    .flat_map(|c| ivf.members[c as usize].iter().copied())
                    .filter(|&i| keep(i as usize))
                    .map(|i| (dot(q, self.row(i as usize)), i))
                    .collect()
            }
        };
        top_k(scored, k)
    }

    /// The `k` indexed vectors most similar to `q`. A zero query has no
    /// direction and returns nothing.
    pub fn query(&self, q: &[f32], k: usize) -> Vec<&VectorId> {
        if q.len() != self.dim {
            return Vec::new();
        }
        match unit(q) {
            Some(u) => self
                .search(&u, k, None)
                .into_iter()
                .map(|i| &self.ids[i as usize])
                .collect(),
            None => Vec::new(),
        }
    }

    /// Neighbors of an indexed vector, excluding the vector itself.
    pub fn neighbors_of(&self, id: &VectorId, k: usize) -> Result<Vec<&VectorId>, KnnError> {
        let pos = self
            .position_of(id)
            .ok_or_else(|| KnnError::UnknownId(id.clone()))?;
        Ok(self
            .neighbors_of_position(pos, k)
            .into_iter()
            .map(|i| &self.ids[i as usize])
            .collect())
    }

    pub(crate) fn neighbors_of_position(&self, pos: usize, k: usize) -> Vec<u32> {
        self.search(self.row(pos), k, Some(pos))
    }
}

/// kNN lists for every vector of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub category: EntityCategory,
    pub k: usize,
    /// Pool in ascending id order.
    pub ids: Vec<VectorId>,
    /// `neighbors[i]` indexes into `ids`, nearest first.
    pub neighbors: Vec<Vec<u32>>,
}

impl NeighborTable {
    pub fn build(
        category: EntityCategory,
        entries: Vec<(VectorId, Vec<f32>)>,
        k: usize,
        mode: SearchMode,
    ) -> Result<Self, KnnError> {
        let index = Index::build(entries, mode)?;
        let neighbors = (0..index.len())
            .map(|i| index.neighbors_of_position(i, k))
            .collect();
        Ok(NeighborTable {
            category,
            k,
            ids: index.ids,
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position_of(&self, id: &VectorId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    pub fn neighbors(&self, id: &VectorId) -> Option<Vec<&VectorId>> {
        let pos = self.position_of(id)?;
        Some(
            self.neighbors[pos]
                .iter()
                .map(|&i| &self.ids[i as usize])
                .collect(),
        )
    }
}

/// One table per category that has at least one vector; categories are
/// pooled separately.
pub fn neighbor_tables(
    store: &EmbeddingStore,
    k: usize,
    mode: SearchMode,
) -> Result<BTreeMap<EntityCategory, NeighborTable>, KnnError> {
    let mut pools: BTreeMap<EntityCategory, Vec<(VectorId, Vec<f32>)>> = BTreeMap::new();
    for set in &store.sets {
        for (pos, v) in set.vectors.iter().enumerate() {
            pools.entry(set.category).or_default().push((
                VectorId::new(set.candidate_id.clone(), set.category, pos as u32),
                v.clone(),
            ));
        }
    }
    pools
        .into_iter()
        .map(|(category, entries)| {
            NeighborTable::build(category, entries, k, mode).map(|t| (category, t))
        })
        .collect()
}

#[derive(Serialize)]
struct DumpLine<'a> {
    vector_id: &'a VectorId,
    neighbors: Vec<&'a VectorId>,
}

/// Writes every table as JSONL, one line per query vector.
pub fn write_neighbor_dump(
    path: &Path,
    tables: &BTreeMap<EntityCategory, NeighborTable>,
) -> Result<(), KnnError> {
    let mut w = BufWriter::new(File::create(path)?);
    for table in tables.values() {
        for (i, id) in table.ids.iter().enumerate() {
            let line = DumpLine {
                vector_id: id,
                neighbors: table.neighbors[i]
                    .iter()
                    .map(|&j| &table.ids[j as usize])
                    .collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

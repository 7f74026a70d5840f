use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;
use crate::profile::SelectionOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Test,
}

/// Fold of every labeled (candidate, selection) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    /// Keyed by `(candidate_id, selection_id)`.
    pub folds: BTreeMap<(String, String), Fold>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    assignments: Vec<AssignmentLine>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentLine {
    candidate: String,
    selection: String,
    fold: Fold,
}

impl SplitAssignment {
    pub fn fold(&self, candidate_id: &str, selection_id: &str) -> Option<Fold> {
        self.folds
            .get(&(candidate_id.to_string(), selection_id.to_string()))
            .copied()
    }

    pub fn count(&self, fold: Fold) -> usize {
        self.folds.values().filter(|f| **f == fold).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), LearningError> {
        let file = SplitFile {
            seed: self.seed,
            assignments: self
                .folds
                .iter()
                .map(|((c, s), f)| AssignmentLine {
                    candidate: c.clone(),
                    selection: s.clone(),
                    fold: *f,
                })
                .collect(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearningError> {
        let file: SplitFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let mut folds = BTreeMap::new();
        for a in file.assignments {
            if folds.insert((a.candidate.clone(), a.selection.clone()), a.fold).is_some() {
                return Err(LearningError::Config(format!(
                    "pair ({}, {}) assigned twice",
                    a.candidate, a.selection
                )));
            }
        }
        Ok(SplitAssignment {
            seed: file.seed,
            folds,
        })
    }
}

/// Splits every (selection, stage) cell of `n` pairs so that `t = (1 - train_ratio) · n`
/// is rounded stochastically: `floor(t)` pairs go to test, plus one more with
/// probability `t - floor(t)`. Every cell is within one pair of the exact
/// ratio, and single-member cells land in test with probability `1 - train_ratio`.
/// Cells are visited in sorted order and members are shuffled after sorting
/// by candidate, so the result depends only on the pairs and the seed.
pub fn stratified_split(
    outcomes: &[SelectionOutcome],
    train_ratio: f64,
    seed: u64,
) -> Result<SplitAssignment, LearningError> {
    if outcomes.is_empty() {
        return Err(LearningError::EmptyOutcomes);
    }
    if !(0.0..=1.0).contains(&train_ratio) {
        return Err(LearningError::Config(format!(
            "train ratio {train_ratio} outside [0, 1]"
        )));
    }
    let test_ratio = 1.0 - train_ratio;
    let mut cells: BTreeMap<(&str, u8), Vec<&str>> = BTreeMap::new();
    for o in outcomes {
        cells
            .entry((o.selection_id.as_str(), o.stage.value()))
            .or_default()
            .push(o.candidate_id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = BTreeMap::new();
    for ((selection, _), mut members) in cells {
        members.sort_unstable();
        // snap away representation error, e.g. (1 - 0.8) · 10
        let exact = (test_ratio * members.len() as f64 * 1e9).round() / 1e9;
        let base = exact.floor();
        let n_test = base as usize + usize::from(rng.random_bool((exact - base).clamp(0.0, 1.0)));
        members.shuffle(&mut rng);
        for (pos, candidate) in members.into_iter().enumerate() {
            let fold = if pos < n_test { Fold::Test } else { Fold::Train };
            let key = (candidate.to_string(), selection.to_string());
            if folds.insert(key, fold).is_some() {
                return Err(LearningError::Config(format!(
                    "duplicate outcome for ({candidate}, {selection})"
                )));
            }
        }
    }
    Ok(SplitAssignment { seed, folds })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{records, stratified_split, train, Dataset, Fold, HeadKind, LearningError, TrainConfig};
use crate::evaluation::balanced_accuracy;
use crate::gnn::{Activation, ConvKind, ModelSpec};

/// Hyperparameter ranges sampled by [`random_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub hidden: (usize, usize),
    pub depth: (usize, usize),
    pub learning_rate: (f64, f64),
    pub activations: Vec<Activation>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            hidden: (16, 64),
            depth: (1, 5),
            learning_rate: (1e-4, 1e-1),
            activations: Activation::SEARCHABLE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub spec: ModelSpec,
    pub learning_rate: f64,
    /// `None` when training diverged or validation was empty.
    pub validation_balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Draws `count` configurations; learning rates are log-uniform.
pub fn sample_trials(space: &SearchSpace, conv: ConvKind, count: usize, seed: u64) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (space.learning_rate.0.ln(), space.learning_rate.1.ln());
    (0..count)
        .map(|index| {
            let hidden = rng.random_range(space.hidden.0..=space.hidden.1);
            let depth = rng.random_range(space.depth.0..=space.depth.1);
            let learning_rate = rng.random_range(lo..=hi).exp().clamp(space.learning_rate.0, space.learning_rate.1);
            let activation = space.activations[rng.random_range(0..space.activations.len())];
            Trial {
                index,
                spec: ModelSpec {
                    conv,
                    hidden,
                    depth,
                    activation,
                },
                learning_rate,
                validation_balanced_accuracy: None,
            }
        })
        .collect()
}

/// Trains every sampled configuration on train minus a stratified 10%
/// validation slice and keeps the best validation balanced accuracy.
/// Ties go to the earlier trial. Test pairs are never read.
pub fn random_search(
    data: &Dataset,
    head: HeadKind,
    conv: ConvKind,
    base: &TrainConfig,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
) -> Result<SearchResult, LearningError> {
    if trials == 0 {
        return Err(LearningError::Config("at least one trial is required".into()));
    }
    let carve = stratified_split(&data.outcomes(Fold::Train), 0.9, seed)?;
    let mut inner = data.clone();
    inner.pairs = data
        .pairs
        .iter()
        .filter(|p| p.fold == Fold::Train)
        .map(|p| {
            let fold = carve
                .fold(&data.graph.nodes[p.node], &data.selections[p.selection])
                .unwrap_or(Fold::Train);
            super::LabeledPair { fold, ..*p }
        })
        .collect();
    let mut sampled = sample_trials(space, conv, trials, seed);
    for trial in &mut sampled {
        let cfg = TrainConfig {
            learning_rate: trial.learning_rate,
            ..*base
        };
        trial.validation_balanced_accuracy = match train(&inner, trial.spec, head, &cfg) {
            Ok(t) => balanced_accuracy(&records(&t.model.predict(&inner)?, Fold::Test)),
            Err(LearningError::Divergence { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    let mut best = 0;
    for (i, t) in sampled.iter().enumerate() {
        let score = t.validation_balanced_accuracy.unwrap_or(f64::NEG_INFINITY);
        let current = sampled[best].validation_balanced_accuracy.unwrap_or(f64::NEG_INFINITY);
        if score > current {
            best = i;
        }
    }
    Ok(SearchResult {
        best,
        trials: sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_bounds_and_repeat_per_seed() {
        let space = SearchSpace::default();
        let a = sample_trials(&space, ConvKind::Gcn, 200, 9);
        assert_eq!(a, sample_trials(&space, ConvKind::Gcn, 200, 9));
        assert_ne!(a, sample_trials(&space, ConvKind::Gcn, 200, 10));
        for t in &a {
            assert!((16..=64).contains(&t.spec.hidden));
            assert!((1..=5).contains(&t.spec.depth));
            assert!((1e-4..=1e-1).contains(&t.learning_rate));
            assert!(Activation::SEARCHABLE.contains(&t.spec.activation));
        }
    }

    #[test]
    fn single_trial_is_returned() {
        let data = super::super::tests::toy_dataset();
        let base = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let space = SearchSpace::default();
        let r = random_search(&data, HeadKind::Ordinal, ConvKind::Rgcn, &base, &space, 1, 3).unwrap();
        assert_eq!(r.best, 0);
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.trials[0].spec, sample_trials(&space, ConvKind::Rgcn, 1, 3)[0].spec);
    }
}

mod common;

use std::collections::BTreeMap;

use common::assert_consistent;
use talentgraph::gnn::{Activation, ConvKind, ModelSpec};
use talentgraph::knn::SearchMode;
use talentgraph::learning::{stratified_split, train, Dataset, Fold, HeadKind, TrainConfig};
use talentgraph::pipeline::graph_from_store;
use talentgraph::profile::{SelectionOutcome, Stage};
use talentgraph::similarity::{GraphBuildConfig, HeteroGraph};
use talentgraph::synth::{generate, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        num_candidates: 120,
        num_selections: 3,
        seed,
        ..SynthConfig::default()
    }
}

fn graph_and_outcomes(cfg: &SynthConfig) -> (HeteroGraph, Vec<SelectionOutcome>) {
    let d = generate(cfg).unwrap();
    let (g, _) = graph_from_store(&d.profiles, &d.store, &GraphBuildConfig::default(), SearchMode::Exact).unwrap();
    (g, d.outcomes)
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        learning_rate: 0.01,
        seed: 3,
        class_weighting: true,
    }
}

#[test]
fn split_cells_stay_within_one_sample_of_80_20() {
    let d = generate(&SynthConfig::default()).unwrap();
    let mut cells: BTreeMap<(String, u8), Vec<String>> = BTreeMap::new();
    for o in &d.outcomes {
        cells
            .entry((o.selection_id.clone(), o.stage.value()))
            .or_default()
            .push(o.candidate_id.clone());
    }
    for seed in 0..20 {
        let split = stratified_split(&d.outcomes, 0.8, seed).unwrap();
        assert_eq!(split.folds.len(), d.outcomes.len());
        for ((sel, stage), members) in &cells {
            let test = members
                .iter()
                .filter(|c| split.fold(c, sel) == Some(Fold::Test))
                .count();
            let target = 0.2 * members.len() as f64;
            assert!((test as f64 - target).abs() <= 1.0, "seed {seed} cell ({sel}, {stage})");
        }
        let again = stratified_split(&d.outcomes, 0.8, seed).unwrap();
        assert_eq!(split, again);
    }
}

#[test]
fn test_labels_never_reach_training() {
    let cfg = small(4);
    let (graph, outcomes) = graph_and_outcomes(&cfg);
    let split = stratified_split(&outcomes, 0.8, 1).unwrap();
    let mut flipped = outcomes.clone();
    let mut changed = 0;
    for o in &mut flipped {
        if split.fold(&o.candidate_id, &o.selection_id) == Some(Fold::Test) {
            o.stage = Stage::ALL[(o.stage.index() + 2) % 4];
            changed += 1;
        }
    }
    assert!(changed > 0);
    let spec = ModelSpec {
        hidden: 8,
        ..ModelSpec::default()
    };
    let a = train(&Dataset::new(graph.clone(), &outcomes, &split).unwrap(), spec, HeadKind::Ordinal, &quick()).unwrap();
    let b = train(&Dataset::new(graph, &flipped, &split).unwrap(), spec, HeadKind::Ordinal, &quick()).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
}

#[test]
fn decoded_stages_are_monotone_for_both_heads() {
    let cfg = small(7);
    let (graph, outcomes) = graph_and_outcomes(&cfg);
    let split = stratified_split(&outcomes, 0.8, 7).unwrap();
    let data = Dataset::new(graph, &outcomes, &split).unwrap();
    for head in [HeadKind::Ordinal, HeadKind::Multilabel] {
        for conv in [ConvKind::Gcn, ConvKind::Rgcn] {
            let spec = ModelSpec {
                conv,
                hidden: 8,
                depth: 2,
                activation: Activation::Elu,
            };
            let model = train(&data, spec, head, &quick()).unwrap().model;
            let preds = model.predict(&data).unwrap();
            assert_eq!(preds.len(), outcomes.len());
            assert_consistent(head, &preds);
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (graph, outcomes) = graph_and_outcomes(&small(2));
    let split = stratified_split(&outcomes, 0.8, 2).unwrap();
    let data = Dataset::new(graph, &outcomes, &split).unwrap();
    let spec = ModelSpec {
        hidden: 6,
        ..ModelSpec::default()
    };
    let a = train(&data, spec, HeadKind::Multilabel, &quick()).unwrap();
    let b = train(&data, spec, HeadKind::Multilabel, &quick()).unwrap();
    assert_eq!(a.model, b.model);
    let c = train(&data, spec, HeadKind::Multilabel, &TrainConfig { seed: 4, ..quick() }).unwrap();
    assert_ne!(a.model, c.model);
}

/// Mean absolute correlation between each of the first `traits` traits
/// and the best stage a candidate reached.
fn stage_correlation(cfg: &SynthConfig, traits: std::ops::Range<usize>) -> f64 {
    let d = generate(cfg).unwrap();
    let mut best: BTreeMap<&str, u8> = BTreeMap::new();
    for o in &d.outcomes {
        let b = best.entry(o.candidate_id.as_str()).or_default();
        *b = (*b).max(o.stage.value());
    }
    let count = traits.len() as f64;
    traits
        .map(|t| {
            let pairs: Vec<(f64, f64)> = d
                .profiles
                .iter()
                .filter_map(|p| p.traits[t].map(|v| (v, best[p.candidate_id.as_str()] as f64)))
                .collect();
            let n = pairs.len() as f64;
            let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (x, y) in &pairs {
                sxy += (x - mx) * (y - my);
                sxx += (x - mx).powi(2);
                syy += (y - my).powi(2);
            }
            (sxy / (sxx * syy).sqrt()).abs()
        })
        .sum::<f64>()
        / count
}

#[test]
fn planted_signal_grows_with_strength() {
    let mean_over_seeds = |signal: f64, traits: std::ops::Range<usize>| {
        (0..3)
            .map(|seed| stage_correlation(&SynthConfig { signal, seed, ..SynthConfig::default() }, traits.clone()))
            .sum::<f64>()
            / 3.0
    };
    let signal: Vec<f64> = [0.0, 0.4, 0.8].iter().map(|&s| mean_over_seeds(s, 0..6)).collect();
    assert!(signal[0] < signal[1] && signal[1] < signal[2], "{signal:?}");
    assert!(signal[0] < 0.1, "{signal:?}");
    // the remaining traits stay noise at any strength
    assert!(mean_over_seeds(0.8, 6..18) < 0.1);
}

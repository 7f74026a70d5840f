//! Synthetic datasets with a planted, tunable signal.
//!
//! Every (selection, category) pair gets a random unit prototype. A
//! candidate with affinity `a` draws each keyword near one of its
//! selections' prototypes with probability `a`, otherwise near a shared
//! background concept. Keyword vectors are `normalize(center + (1 - s) g)`
//! with `g ~ N(0, I/d)`. Keyword counts per category are Poisson, so a
//! category may be empty.
//!
//! Within a selection, candidates are ranked by `s · z(proximity) + √(1-s²) · η`
//! and the top of the ranking receives stages 3, 2, 1. Each selection's
//! rate for those stages is the configured marginal times a mean-one
//! lognormal factor. Six traits shift by `30 · s` per stage level of the
//! candidate's best outcome. With `s = 0` labels are independent of both
//! traits and keywords.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{
    normalize_f64, sidecar_path, write_keyword_sidecar, write_store, EmbeddingSet, EmbeddingStore,
    StoreError,
};
use crate::profile::{
    save_outcomes, save_profiles, CandidateProfile, DatasetStats, Entities, EntityCategory,
    ProfileError, SelectionOutcome, Stage, NUM_TRAITS, TRAIT_RANGE,
};

pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const STORE_FILE: &str = "embeddings.emb";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Traits carrying the stage shift.
const SIGNAL_TRAITS: usize = 6;
const SHIFT_PER_STAGE: f64 = 30.0;
const TRAIT_NOISE: f64 = 20.0;
const TERMS_PER_PROTOTYPE: usize = 25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_candidates: usize,
    pub num_selections: usize,
    pub dim: usize,
    /// Mean keyword count per category, in category order.
    pub keywords_per_category: [f64; 5],
    /// Percent of pairs per stage 0..=3.
    pub stage_marginals: [f64; 4],
    /// Coefficient of variation of the per-selection rate of each stage above 0.
    pub marginal_jitter: f64,
    pub signal: f64,
    /// Fraction of candidates applying to a second selection.
    pub second_selection_rate: f64,
    pub missing_trait_rate: f64,
    pub background_concepts: usize,
    /// Affinity is `u^shape` with `u ~ U(0, 1)`; large shapes leave few specialists.
    pub affinity_shape: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_candidates: 500,
            num_selections: 5,
            dim: 64,
            keywords_per_category: [4.0, 5.0, 2.0, 2.0, 2.0],
            // published stage 1-3 rates; stage 0 takes the remainder
            stage_marginals: [93.63, 3.95, 1.47, 0.95],
            marginal_jitter: 0.75,
            signal: 0.8,
            second_selection_rate: 0.2,
            missing_trait_rate: 0.02,
            background_concepts: 200,
            affinity_shape: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.num_candidates == 0 || self.num_selections == 0 || self.dim == 0 {
            return bad("candidates, selections and dim must be positive".into());
        }
        let sum: f64 = self.stage_marginals.iter().sum();
        if (sum - 100.0).abs() > 0.01 || self.stage_marginals.iter().any(|m| *m < 0.0) {
            return bad(format!("stage marginals sum to {sum}, expected 100"));
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return bad(format!("signal {} outside [0, 1]", self.signal));
        }
        for (name, v) in [
            ("second_selection_rate", self.second_selection_rate),
            ("missing_trait_rate", self.missing_trait_rate),
            ("marginal_jitter", self.marginal_jitter),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.keywords_per_category.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return bad("keyword means must be positive".into());
        }
        if !(self.affinity_shape > 0.0 && self.affinity_shape.is_finite()) {
            return bad(format!("affinity_shape {} must be positive", self.affinity_shape));
        }
        if self.background_concepts == 0 {
            return bad("background_concepts must be positive".into());
        }
        Ok(())
    }
}

/// Ground truth recorded next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub selections: Vec<String>,
    /// Selection → category key → unit prototype.
    pub prototypes: BTreeMap<String, BTreeMap<String, Vec<f32>>>,
    pub affinities: BTreeMap<String, f64>,
    pub stage_counts: BTreeMap<String, [usize; 4]>,
    pub pooled_percentages: [f64; 4],
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub profiles: Vec<CandidateProfile>,
    pub store: EmbeddingStore,
    pub outcomes: Vec<SelectionOutcome>,
    pub manifest: SynthManifest,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn noisy(rng: &mut ChaCha8Rng, center: &[f64], scale: f64) -> Vec<f32> {
    let sd = scale / (center.len() as f64).sqrt();
    let v: Vec<f64> = center
        .iter()
        .map(|c| c + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    normalize_f64(&v).unwrap_or_else(|| normalize_f64(center).expect("unit center"))
}

fn keyword_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

/// Splits `total` into integer shares proportional to `weights`; leftover
/// units go to the largest fractional parts, earlier index first on ties.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut shares: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: usize = shares.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.signal;
    let noise = 1.0 - s;
    let n_sel = config.num_selections;
    let selections: Vec<String> = (0..n_sel).map(|k| format!("sel-{k:02}")).collect();
    let ids: Vec<String> = (0..config.num_candidates).map(|i| format!("cand-{i:04}")).collect();

    let prototypes: Vec<Vec<Vec<f64>>> = (0..n_sel)
        .map(|_| (0..5).map(|_| unit_vector(&mut rng, config.dim)).collect())
        .collect();
    let background: Vec<Vec<Vec<f64>>> = (0..5)
        .map(|_| {
            (0..config.background_concepts)
                .map(|_| unit_vector(&mut rng, config.dim))
                .collect()
        })
        .collect();

    // balanced primary assignment, optional second selection
    let mut primary: Vec<usize> = (0..config.num_candidates).map(|i| i % n_sel).collect();
    primary.shuffle(&mut rng);
    let applied: Vec<Vec<usize>> = primary
        .iter()
        .map(|&p| {
            let mut sels = vec![p];
            if n_sel > 1 && rng.random_bool(config.second_selection_rate) {
                let other = (p + rng.random_range(1..n_sel)) % n_sel;
                sels.push(other);
            }
            sels
        })
        .collect();
    let affinity: Vec<f64> = (0..config.num_candidates)
        .map(|_| rng.random::<f64>().powf(config.affinity_shape))
        .collect();

    let mut profiles = Vec::with_capacity(config.num_candidates);
    let mut sets = Vec::with_capacity(config.num_candidates * 5);
    // proximity[i][k] over the candidate's selections
    let mut proximity: Vec<Vec<f64>> = Vec::with_capacity(config.num_candidates);
    for i in 0..config.num_candidates {
        let mut entities = Entities::new();
        let mut sims = vec![0.0; applied[i].len()];
        let mut total = 0usize;
        for category in EntityCategory::ALL {
            let c = category.index();
            let count = keyword_count(&mut rng, config.keywords_per_category[c]);
            let mut vectors = Vec::with_capacity(count);
            for _ in 0..count {
                let (keyword, center) = if rng.random_bool(affinity[i]) {
                    let sel = applied[i][rng.random_range(0..applied[i].len())];
                    let term = rng.random_range(0..TERMS_PER_PROTOTYPE);
                    (format!("s{sel}-c{c}-t{term}"), &prototypes[sel][c])
                } else {
                    let b = rng.random_range(0..config.background_concepts);
                    (format!("bg-c{c}-{b}"), &background[c][b])
                };
                let v = noisy(&mut rng, center, noise);
                if entities.insert(category, keyword) {
                    for (slot, &sel) in sims.iter_mut().zip(&applied[i]) {
                        *slot += v
                            .iter()
                            .zip(&prototypes[sel][c])
                            .map(|(a, b)| *a as f64 * b)
                            .sum::<f64>();
                    }
                    total += 1;
                    vectors.push(v);
                }
            }
            sets.push(EmbeddingSet {
                candidate_id: ids[i].clone(),
                category,
                vectors,
            });
        }
        proximity.push(sims.into_iter().map(|x| x / total.max(1) as f64).collect());
        profiles.push(CandidateProfile {
            candidate_id: ids[i].clone(),
            traits: Vec::new(),
            entities,
        });
    }

    // stages per selection
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_sel];
    for (i, sels) in applied.iter().enumerate() {
        for (slot, &sel) in sels.iter().enumerate() {
            members[sel].push((i, proximity[i][slot]));
        }
    }
    let mut ranked: Vec<Vec<usize>> = Vec::with_capacity(n_sel);
    for list in &members {
        let z = z_scores(&list.iter().map(|m| m.1).collect::<Vec<_>>());
        let mut scored: Vec<(f64, usize)> = list
            .iter()
            .zip(&z)
            .map(|(&(i, _), &z)| {
                let eta: f64 = rng.sample(StandardNormal);
                (s * z + (1.0 - s * s).sqrt() * eta, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.push(scored.into_iter().map(|(_, i)| i).collect());
    }
    // Each stage's pooled total follows the marginals; its split across
    // selections is weighted by size times a mean-one lognormal factor
    // with coefficient of variation `marginal_jitter`.
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let total_pairs: usize = sizes.iter().sum();
    let sigma = (1.0 + config.marginal_jitter.powi(2)).ln().sqrt();
    let mut counts = vec![[0usize; 4]; n_sel];
    for k in (1..4).rev() {
        let weights: Vec<f64> = sizes
            .iter()
            .map(|&n| n as f64 * (sigma * rng.sample::<f64, _>(StandardNormal) - sigma * sigma / 2.0).exp())
            .collect();
        let want = (config.stage_marginals[k] / 100.0 * total_pairs as f64).round() as usize;
        for (sel, q) in largest_remainder(want, &weights).into_iter().enumerate() {
            let used: usize = counts[sel].iter().sum();
            counts[sel][k] = q.min(sizes[sel] - used);
        }
    }
    let mut stage_of: BTreeMap<(usize, usize), u8> = BTreeMap::new();
    let mut stage_counts = BTreeMap::new();
    let mut totals = [0usize; 4];
    for (sel, order) in ranked.iter().enumerate() {
        let c = &mut counts[sel];
        c[0] = sizes[sel] - c[1..].iter().sum::<usize>();
        let mut pos = 0;
        for k in (0..4).rev() {
            for &i in &order[pos..pos + c[k]] {
                stage_of.insert((i, sel), k as u8);
            }
            pos += c[k];
            totals[k] += c[k];
        }
        stage_counts.insert(selections[sel].clone(), *c);
    }
    let mut warnings = Vec::new();
    for k in 1..4 {
        if totals[k] == 0 && config.stage_marginals[k] > 0.0 {
            warnings.push(format!("stage {k} rounds to zero pairs in every selection"));
        }
    }

    // traits follow the best stage reached anywhere
    let trait_noise = Normal::new(0.0, TRAIT_NOISE).expect("positive sd");
    for (i, profile) in profiles.iter_mut().enumerate() {
        let best = applied[i].iter().map(|&sel| stage_of[&(i, sel)]).max().unwrap_or(0) as f64;
        profile.traits = (0..NUM_TRAITS)
            .map(|t| {
                let mut v = trait_noise.sample(&mut rng);
                if t < SIGNAL_TRAITS {
                    let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                    v += sign * SHIFT_PER_STAGE * s * best;
                }
                let v = (v.clamp(TRAIT_RANGE.0, TRAIT_RANGE.1) * 100.0).round() / 100.0;
                let missing = rng.random_bool(config.missing_trait_rate);
                (!missing).then_some(v)
            })
            .collect();
    }
    for t in 0..NUM_TRAITS {
        if profiles.iter().all(|p| p.traits[t].is_none()) {
            profiles[0].traits[t] = Some(0.0);
        }
    }

    let mut outcomes: Vec<SelectionOutcome> = stage_of
        .iter()
        .map(|(&(i, sel), &stage)| SelectionOutcome {
            candidate_id: ids[i].clone(),
            selection_id: selections[sel].clone(),
            stage: Stage::ALL[stage as usize],
        })
        .collect();
    outcomes.sort_by(|a, b| {
        (&a.selection_id, &a.candidate_id).cmp(&(&b.selection_id, &b.candidate_id))
    });

    let prototype_map = selections
        .iter()
        .zip(&prototypes)
        .map(|(sel, per_cat)| {
            let inner = EntityCategory::ALL
                .iter()
                .zip(per_cat)
                .map(|(c, v)| (c.key().to_string(), v.iter().map(|&x| x as f32).collect()))
                .collect();
            (sel.clone(), inner)
        })
        .collect();
    let manifest = SynthManifest {
        seed: config.seed,
        config: config.clone(),
        selections,
        prototypes: prototype_map,
        affinities: ids.iter().cloned().zip(affinity).collect(),
        stage_counts,
        pooled_percentages: DatasetStats::pooled_percentages(&outcomes),
        warnings,
    };
    Ok(SynthDataset {
        profiles,
        store: EmbeddingStore {
            dim: config.dim,
            sets,
        },
        outcomes,
        manifest,
    })
}

/// Writes profiles, the vector store with its keyword sidecar, outcomes
/// and the manifest into `dir`.
pub fn write_dataset(dir: &Path, data: &SynthDataset) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    save_profiles(&dir.join(PROFILES_FILE), &data.profiles)?;
    save_outcomes(&dir.join(OUTCOMES_FILE), &data.outcomes)?;
    let store = dir.join(STORE_FILE);
    write_store(&store, &data.store)?;
    write_keyword_sidecar(&sidecar_path(&store), &data.profiles)?;
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &data.manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

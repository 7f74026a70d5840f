use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::embedding::ProviderConfig;
use crate::gnn::{ConvKind, ModelSpec};
use crate::knn::SearchMode;
use crate::learning::{HeadKind, SearchSpace, TrainConfig};
use crate::similarity::GraphBuildConfig;
use crate::synth::SynthConfig;

/// File locations; relative paths are resolved against the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub profiles: PathBuf,
    pub outcomes: PathBuf,
    /// Raw CVs for `extract`: `{"candidate_id", "traits", "text"}` per line.
    pub cvs: PathBuf,
    /// Optional `{"phrase": "category"}` map replacing the built-in dictionary.
    pub dictionary: Option<PathBuf>,
    pub embeddings: PathBuf,
    pub trait_stats: PathBuf,
    pub graph: PathBuf,
    pub split: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
}

impl Default for RunPaths {
    fn default() -> Self {
        RunPaths {
            profiles: "profiles.jsonl".into(),
            outcomes: "outcomes.jsonl".into(),
            cvs: "cvs.jsonl".into(),
            dictionary: None,
            embeddings: "embeddings.emb".into(),
            trait_stats: "trait_stats.json".into(),
            graph: "graph.jsonl".into(),
            split: "split.json".into(),
            model: "model.ckpt".into(),
            reports: "reports".into(),
        }
    }
}

impl RunPaths {
    pub fn resolve(&self, root: &Path) -> RunPaths {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { root.join(p) };
        RunPaths {
            profiles: r(&self.profiles),
            outcomes: r(&self.outcomes),
            cvs: r(&self.cvs),
            dictionary: self.dictionary.as_ref().map(r),
            embeddings: r(&self.embeddings),
            trait_stats: r(&self.trait_stats),
            graph: r(&self.graph),
            split: r(&self.split),
            model: r(&self.model),
            reports: r(&self.reports),
        }
    }

    pub fn synth_manifest(&self) -> PathBuf {
        self.reports.join("synth_manifest.json")
    }

    pub fn train_report(&self) -> PathBuf {
        self.reports.join("train_report.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.reports.join("metrics.json")
    }

    pub fn metrics_table(&self) -> PathBuf {
        self.reports.join("metrics.txt")
    }

    pub fn predictions(&self) -> PathBuf {
        self.reports.join("predictions.jsonl")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    /// 0 trains `model` as given; otherwise random search picks the spec.
    pub trials: usize,
    pub space: SearchSpace,
}

/// Everything a run needs. Missing keys take their defaults, so `{}` is a
/// complete configuration that generates a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds synthesis, the split, search and training.
    pub seed: u64,
    pub paths: RunPaths,
    /// `null` makes `pipeline` start from `extract`.
    pub synth: Option<SynthConfig>,
    pub provider: ProviderConfig,
    pub graph: GraphBuildConfig,
    pub search_mode: SearchMode,
    pub model: ModelSpec,
    pub head: HeadKind,
    pub train: TrainConfig,
    pub search: SearchSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: RunPaths::default(),
            synth: Some(SynthConfig::default()),
            provider: ProviderConfig::default(),
            graph: GraphBuildConfig::default(),
            search_mode: SearchMode::Exact,
            model: ModelSpec::default(),
            head: HeadKind::Multilabel,
            train: TrainConfig::default(),
            search: SearchSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub theta: Option<f64>,
    pub conv: Option<ConvKind>,
    pub head: Option<HeadKind>,
    pub epochs: Option<usize>,
    pub trials: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::MissingInput(path.to_path_buf()),
            _ => PipelineError::Runtime(format!("{}: {e}", path.display())),
        })?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.k {
            self.graph.k = v;
        }
        if let Some(v) = o.lambda {
            self.graph.lambda = v;
        }
        if let Some(v) = o.theta {
            self.graph.theta = v;
        }
        if let Some(v) = o.conv {
            self.model.conv = v;
        }
        if let Some(v) = o.head {
            self.head = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.trials {
            self.search.trials = v;
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synth.clone().map(|s| SynthConfig {
            seed: self.seed,
            ..s
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.graph.validate()?;
        self.model.validate()?;
        self.train_config().validate()?;
        self.provider.validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        let sp = &self.search.space;
        if sp.hidden.0 == 0 || sp.hidden.0 > sp.hidden.1 || sp.depth.0 == 0 || sp.depth.0 > sp.depth.1 {
            return Err(PipelineError::Validation("search space bounds are empty".into()));
        }
        if !(sp.learning_rate.0 > 0.0 && sp.learning_rate.0 <= sp.learning_rate.1) || sp.activations.is_empty() {
            return Err(PipelineError::Validation("search space bounds are empty".into()));
        }
        Ok(())
    }
}

//! File-backed stages. Each stage checks its declared inputs, writes its
//! outputs and appends an entry to `run_manifest.json` in the run directory.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{graph_from_store, PipelineConfig, PipelineError, RunPaths};
use crate::embedding::{
    embed_profiles, read_keyword_sidecar, read_store, sidecar_path, write_keyword_sidecar,
    write_store, EmbeddingStore,
};
use crate::evaluation::{evaluate, render_table, write_metrics, MetricsFile};
use crate::learning::{
    load_checkpoint, random_search, records, save_checkpoint, stratified_split, train, Dataset,
    Fold, Prediction, SplitAssignment, StageModel, TrainReport,
};
use crate::profile::{
    extract_entities, load_outcomes, load_profiles, save_outcomes, save_profiles, CandidateProfile,
    DictionaryExtractor, RetryPolicy, TraitStats,
};
use crate::similarity::{read_graph, write_graph, HeteroGraph};
use crate::synth::generate;

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const LOCK_FILE: &str = ".talentgraph.lock";
const TRAIN_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Synth,
    Extract,
    Embed,
    BuildGraph,
    Train,
    Evaluate,
    Predict,
    Pipeline,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Synth,
        Subcommand::Extract,
        Subcommand::Embed,
        Subcommand::BuildGraph,
        Subcommand::Train,
        Subcommand::Evaluate,
        Subcommand::Predict,
        Subcommand::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Synth => "synth",
            Subcommand::Extract => "extract",
            Subcommand::Embed => "embed",
            Subcommand::BuildGraph => "build-graph",
            Subcommand::Train => "train",
            Subcommand::Evaluate => "evaluate",
            Subcommand::Predict => "predict",
            Subcommand::Pipeline => "pipeline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub params: Value,
    pub duration_ms: f64,
    pub warnings: Vec<String>,
}

/// Contents of `run_manifest.json`: the latest effective configuration and
/// every stage run so far, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub stages: Vec<StageEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Produced {
    outputs: Vec<PathBuf>,
    params: Value,
    warnings: Vec<String>,
}

#[derive(Debug)]
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(root: &Path) -> Result<Self, PipelineError> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let owner = std::fs::read_to_string(&path).unwrap_or_default();
                Err(PipelineError::Locked(
                    root.to_path_buf(),
                    format!("pid {}; remove {} if stale", owner.trim(), path.display()),
                ))
            }
            Err(e) => Err(PipelineError::Runtime(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// An opened, locked run directory. The lock is released on drop.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    config: PipelineConfig,
    paths: RunPaths,
    _lock: RunLock,
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path).map_err(|e| PipelineError::Runtime(format!("{}: {e}", path.display())))?;
    std::io::copy(&mut f, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn kind_name<T: Serialize>(v: &T) -> String {
    to_json(v).as_str().unwrap_or("?").to_string()
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CvLine {
    candidate_id: String,
    traits: Vec<Option<f64>>,
    text: String,
}

impl RunDir {
    /// Validates `config`, creates `root` if needed and takes its lock.
    pub fn open(root: &Path, config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(root)?;
        let lock = RunLock::acquire(root)?;
        let paths = config.paths.resolve(root);
        Ok(RunDir {
            root: root.to_path_buf(),
            config,
            paths,
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Resolved file locations.
    pub fn paths(&self) -> &RunPaths {
        &self.paths
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn read_manifest(&self) -> Result<Option<RunManifest>, PipelineError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    fn digests(&self, paths: &[PathBuf]) -> Result<Vec<FileDigest>, PipelineError> {
        paths
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: self.display(p),
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }

    fn stage(
        &self,
        name: &'static str,
        inputs: &[PathBuf],
        body: impl FnOnce(&Self) -> Result<Produced, PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        for p in inputs {
            if !p.is_file() {
                return Err(PipelineError::MissingInput(p.clone()));
            }
        }
        let input_digests = self.digests(inputs)?;
        let started = Instant::now();
        let produced = body(self)?;
        let duration_ms = (started.elapsed().as_secs_f64() * 1e6).round() / 1e3;
        let entry = StageEntry {
            stage: name.to_string(),
            inputs: input_digests,
            outputs: self.digests(&produced.outputs)?,
            params: produced.params,
            duration_ms,
            warnings: produced.warnings.clone(),
        };
        let mut manifest = self.read_manifest()?.unwrap_or(RunManifest {
            config: self.config.clone(),
            stages: Vec::new(),
        });
        manifest.config = self.config.clone();
        manifest.stages.push(entry);
        let mut w = BufWriter::new(File::create(self.manifest_path())?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(StageOutcome {
            stage: name,
            outputs: produced.outputs,
            warnings: produced.warnings,
        })
    }

    pub fn run(&self, command: Subcommand) -> Result<Vec<StageOutcome>, PipelineError> {
        let one = |r: Result<StageOutcome, PipelineError>| r.map(|o| vec![o]);
        match command {
            Subcommand::Synth => one(run_synth(self)),
            Subcommand::Extract => one(run_extract(self)),
            Subcommand::Embed => one(run_embed(self)),
            Subcommand::BuildGraph => one(run_build_graph(self)),
            Subcommand::Train => one(run_train(self)),
            Subcommand::Evaluate => one(run_evaluate(self)),
            Subcommand::Predict => one(run_predict(self)),
            Subcommand::Pipeline => run_pipeline(self),
        }
    }

    /// Graph topology from `graph.jsonl` with features rebuilt from the
    /// raw profiles and the recorded trait statistics.
    fn load_graph(&self) -> Result<HeteroGraph, PipelineError> {
        let file = read_graph(&self.paths.graph)?;
        let profiles = load_profiles(&self.paths.profiles)?;
        let stats = TraitStats::load(&self.paths.trait_stats)?;
        let by_id: BTreeMap<&str, &CandidateProfile> =
            profiles.iter().map(|p| (p.candidate_id.as_str(), p)).collect();
        let mut features = Vec::with_capacity(file.nodes.len() * file.feature_dim);
        for node in &file.nodes {
            let p = by_id.get(node.as_str()).ok_or_else(|| {
                PipelineError::Validation(format!("graph node {node} has no profile"))
            })?;
            features.extend(stats.apply(&p.traits));
        }
        Ok(HeteroGraph::from_file(file, features)?)
    }

    fn load_dataset(&self) -> Result<Dataset, PipelineError> {
        let graph = self.load_graph()?;
        let outcomes = load_outcomes(&self.paths.outcomes)?;
        let split = SplitAssignment::load(&self.paths.split)?;
        Ok(Dataset::new(graph, &outcomes, &split)?)
    }

    fn model_inputs(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        vec![
            p.model.clone(),
            p.graph.clone(),
            p.profiles.clone(),
            p.trait_stats.clone(),
            p.outcomes.clone(),
            p.split.clone(),
        ]
    }

    fn trained(&self) -> Result<(StageModel, Vec<Prediction>), PipelineError> {
        let model = load_checkpoint(&self.paths.model)?;
        let data = self.load_dataset()?;
        let predictions = model.predict(&data)?;
        Ok((model, predictions))
    }
}

fn model_name(model: &StageModel) -> String {
    format!("{}-{}", kind_name(&model.spec().conv), kind_name(&model.head))
}

pub fn run_synth(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    run.stage("synth", &[], |run| {
        let cfg = run
            .config
            .synth_config()
            .ok_or_else(|| PipelineError::Validation("configuration has no synth section".into()))?;
        let data = generate(&cfg)?;
        let p = &run.paths;
        let manifest_path = p.synth_manifest();
        for path in [&p.profiles, &p.outcomes, &p.embeddings, &manifest_path] {
            ensure_parent(path)?;
        }
        save_profiles(&p.profiles, &data.profiles)?;
        save_outcomes(&p.outcomes, &data.outcomes)?;
        write_store(&p.embeddings, &data.store)?;
        let sidecar = sidecar_path(&p.embeddings);
        write_keyword_sidecar(&sidecar, &data.profiles)?;
        let mut w = BufWriter::new(File::create(&manifest_path)?);
        serde_json::to_writer_pretty(&mut w, &data.manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(Produced {
            outputs: vec![
                p.profiles.clone(),
                p.outcomes.clone(),
                p.embeddings.clone(),
                sidecar,
                manifest_path,
            ],
            params: to_json(&cfg),
            warnings: data.manifest.warnings.clone(),
        })
    })
}

pub fn run_extract(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    let mut inputs = vec![run.paths.cvs.clone()];
    inputs.extend(run.paths.dictionary.clone());
    run.stage("extract", &inputs, |run| {
        let p = &run.paths;
        let dictionary = match &p.dictionary {
            Some(path) => DictionaryExtractor::from_json_file(path)?,
            None => DictionaryExtractor::builtin(),
        };
        let reader = BufReader::new(File::open(&p.cvs)?);
        let mut profiles = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| PipelineError::Validation(format!("{} line {}: {m}", p.cvs.display(), n + 1));
            let cv: CvLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let entities = extract_entities(&cv.text, &dictionary, RetryPolicy::default())
                .map_err(|e| bad(e.to_string()))?;
            let profile = CandidateProfile {
                candidate_id: cv.candidate_id,
                traits: cv.traits,
                entities,
            };
            profile.validate().map_err(bad)?;
            profiles.push(profile);
        }
        profiles.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
        if let Some(w) = profiles.windows(2).find(|w| w[0].candidate_id == w[1].candidate_id) {
            return Err(PipelineError::Validation(format!(
                "duplicate candidate {} in {}",
                w[0].candidate_id,
                p.cvs.display()
            )));
        }
        let empty = profiles.iter().filter(|p| p.entities.is_empty()).count();
        let mut warnings = Vec::new();
        if empty > 0 {
            warnings.push(format!("{empty} CVs produced no keywords"));
        }
        ensure_parent(&p.profiles)?;
        save_profiles(&p.profiles, &profiles)?;
        Ok(Produced {
            outputs: vec![p.profiles.clone()],
            params: json!({
                "dictionary": p.dictionary.as_ref().map(|d| run.display(d)),
                "dictionary_entries": dictionary.len(),
                "candidates": profiles.len(),
            }),
            warnings,
        })
    })
}

/// An existing store is reused when its keyword sidecar lists exactly the
/// profiles' keywords and every record holds one vector per keyword.
fn reusable_store(profiles: &[CandidateProfile], store_path: &Path) -> Option<EmbeddingStore> {
    let sidecar = read_keyword_sidecar(&sidecar_path(store_path)).ok()?;
    let expected: Vec<_> = profiles
        .iter()
        .flat_map(|p| p.entities.iter().map(move |(c, k)| (p.candidate_id.as_str(), c, k)))
        .collect();
    if sidecar.len() != expected.len() {
        return None;
    }
    let same = sidecar
        .iter()
        .zip(&expected)
        .all(|(r, (id, c, k))| r.candidate_id == *id && r.category == *c && r.keywords.as_slice() == *k);
    if !same {
        return None;
    }
    let store = read_store(store_path).ok()?;
    let consistent = store.sets.len() == expected.len()
        && store
            .sets
            .iter()
            .zip(&expected)
            .all(|(s, (id, c, k))| s.candidate_id == *id && s.category == *c && s.vectors.len() == k.len());
    consistent.then_some(store)
}

pub fn run_embed(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    run.stage("embed", std::slice::from_ref(&run.paths.profiles), |run| {
        let p = &run.paths;
        let profiles = load_profiles(&p.profiles)?;
        let sidecar = sidecar_path(&p.embeddings);
        if let Some(store) = reusable_store(&profiles, &p.embeddings) {
            return Ok(Produced {
                outputs: vec![p.embeddings.clone(), sidecar],
                params: json!({ "reused": true, "dim": store.dim, "vectors": store.vector_count() }),
                warnings: Vec::new(),
            });
        }
        let provider = run.config.provider.build()?;
        let store = embed_profiles(&profiles, provider.as_ref(), RetryPolicy::default())?;
        ensure_parent(&p.embeddings)?;
        write_store(&p.embeddings, &store)?;
        write_keyword_sidecar(&sidecar, &profiles)?;
        Ok(Produced {
            outputs: vec![p.embeddings.clone(), sidecar],
            params: json!({
                "reused": false,
                "provider": to_json(&run.config.provider),
                "vectors": store.vector_count(),
            }),
            warnings: Vec::new(),
        })
    })
}

pub fn run_build_graph(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    let inputs = [run.paths.profiles.clone(), run.paths.embeddings.clone()];
    run.stage("build-graph", &inputs, |run| {
        let p = &run.paths;
        let cfg = &run.config;
        let profiles = load_profiles(&p.profiles)?;
        let store = read_store(&p.embeddings)?;
        let (graph, stats) = graph_from_store(&profiles, &store, &cfg.graph, cfg.search_mode)?;
        ensure_parent(&p.graph)?;
        ensure_parent(&p.trait_stats)?;
        stats.save(&p.trait_stats)?;
        write_graph(&p.graph, &graph)?;
        let mut warnings = Vec::new();
        if graph.total_edges() == 0 {
            let bound = 1.0 - (-cfg.graph.lambda).exp();
            warnings.push(if cfg.graph.theta >= bound {
                format!(
                    "graph has no edges: theta {} is at or above the largest possible similarity {bound:.6}",
                    cfg.graph.theta
                )
            } else {
                format!("graph has no edges: no candidate pair scored above theta {}", cfg.graph.theta)
            });
        }
        Ok(Produced {
            outputs: vec![p.trait_stats.clone(), p.graph.clone()],
            params: json!({
                "graph": to_json(&cfg.graph),
                "search_mode": to_json(&cfg.search_mode),
                "nodes": graph.node_count(),
                "edges": graph.edge_counts(),
            }),
            warnings,
        })
    })
}

pub fn run_train(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    let p = &run.paths;
    let inputs = [
        p.graph.clone(),
        p.profiles.clone(),
        p.trait_stats.clone(),
        p.outcomes.clone(),
    ];
    run.stage("train", &inputs, |run| {
        let p = &run.paths;
        let cfg = &run.config;
        let graph = run.load_graph()?;
        let outcomes = load_outcomes(&p.outcomes)?;
        let split = stratified_split(&outcomes, TRAIN_RATIO, cfg.seed)?;
        let data = Dataset::new(graph, &outcomes, &split)?;
        let mut spec = cfg.model;
        let mut train_cfg = cfg.train_config();
        let search = if cfg.search.trials > 0 {
            let result = random_search(
                &data,
                cfg.head,
                spec.conv,
                &train_cfg,
                &cfg.search.space,
                cfg.search.trials,
                cfg.seed,
            )?;
            let best = result.best_trial();
            if best.validation_balanced_accuracy.is_none() {
                return Err(PipelineError::Runtime("no search trial produced a validation score".into()));
            }
            spec = best.spec;
            train_cfg.learning_rate = best.learning_rate;
            Some(result)
        } else {
            None
        };
        let trained = train(&data, spec, cfg.head, &train_cfg)?;
        let predictions = trained.model.predict(&data)?;
        let report = TrainReport::new(&trained, train_cfg, search, &predictions);
        for path in [&p.split, &p.model, &p.train_report()] {
            ensure_parent(path)?;
        }
        split.save(&p.split)?;
        save_checkpoint(&p.model, &trained.model)?;
        report.save(&p.train_report())?;
        Ok(Produced {
            outputs: vec![p.split.clone(), p.model.clone(), p.train_report()],
            params: json!({
                "spec": to_json(&spec),
                "head": to_json(&cfg.head),
                "train": to_json(&train_cfg),
                "trials": cfg.search.trials,
                "train_pairs": report.train_pairs,
                "test_pairs": report.test_pairs,
                "final_loss": trained.losses.last(),
            }),
            warnings: Vec::new(),
        })
    })
}

pub fn run_evaluate(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    run.stage("evaluate", &run.model_inputs(), |run| {
        let p = &run.paths;
        let (model, predictions) = run.trained()?;
        let name = model_name(&model);
        let test = evaluate(&records(&predictions, Fold::Test));
        let mut rows = vec![(name.clone(), test.pooled.clone())];
        rows.extend(test.per_selection.iter().map(|(s, m)| (format!("  {s}"), m.clone())));
        let table = render_table(&rows);
        ensure_parent(&p.metrics())?;
        write_metrics(&p.metrics(), &MetricsFile { model: name.clone(), test })?;
        std::fs::write(p.metrics_table(), &table)?;
        Ok(Produced {
            outputs: vec![p.metrics(), p.metrics_table()],
            params: json!({ "model": name }),
            warnings: Vec::new(),
        })
    })
}

pub fn run_predict(run: &RunDir) -> Result<StageOutcome, PipelineError> {
    run.stage("predict", &run.model_inputs(), |run| {
        let p = &run.paths;
        let (model, predictions) = run.trained()?;
        ensure_parent(&p.predictions())?;
        let mut w = BufWriter::new(File::create(p.predictions())?);
        for pred in &predictions {
            serde_json::to_writer(&mut w, pred)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(Produced {
            outputs: vec![p.predictions()],
            params: json!({ "model": model_name(&model), "pairs": predictions.len() }),
            warnings: Vec::new(),
        })
    })
}

/// synth (or extract when the config has no synth section), embed,
/// build-graph, train, evaluate.
pub fn run_pipeline(run: &RunDir) -> Result<Vec<StageOutcome>, PipelineError> {
    let first = if run.config.synth.is_some() {
        run_synth(run)?
    } else {
        run_extract(run)?
    };
    Ok(vec![
        first,
        run_embed(run)?,
        run_build_graph(run)?,
        run_train(run)?,
        run_evaluate(run)?,
    ])
}

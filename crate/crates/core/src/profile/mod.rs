//! Candidate profiles, selection outcomes and trait normalization.
//!
//! A profile pairs the 18 assessment traits of a candidate with the keyword
//! sets extracted from their CV, one set per [`EntityCategory`]. Profiles and
//! outcomes are stored as JSON lines; see [`load_profiles`] and
//! [`load_outcomes`].

mod extract;
mod text;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{
    extract_entities, ClientError, DictionaryExtractor, ExtractionClient, ExtractionError,
    ExtractionRequest, RawEntityMap, RetryPolicy,
};
pub use text::normalize_text;

/// Number of assessment traits per candidate.
pub const NUM_TRAITS: usize = 18;
/// Inclusive bounds of raw trait values.
pub const TRAIT_RANGE: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: candidate {candidate_id:?}: {message}")]
    Validation {
        line: usize,
        candidate_id: String,
        message: String,
    },
    #[error("duplicate candidate id {0:?}")]
    DuplicateCandidate(String),
    #[error("duplicate outcome for candidate {candidate_id:?} in selection {selection_id:?}")]
    DuplicateOutcome {
        candidate_id: String,
        selection_id: String,
    },
    #[error("stage {0} is outside 0..=3")]
    InvalidStage(i64),
    #[error("unknown stage label {0:?}")]
    UnknownStageLabel(String),
    #[error("no profiles to normalize")]
    NoProfiles,
    #[error("trait column {0} has no present values")]
    EmptyTraitColumn(usize),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl ProfileError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ProfileError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The five keyword families extracted from a CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityCategory {
    SoftSkills,
    HardSkills,
    IndustrySector,
    Education,
    LanguageSkills,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 5] = [
        EntityCategory::SoftSkills,
        EntityCategory::HardSkills,
        EntityCategory::IndustrySector,
        EntityCategory::Education,
        EntityCategory::LanguageSkills,
    ];

    /// Stable serialization code, 0 through 4.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// JSON key used in profile and extraction documents.
    pub fn key(self) -> &'static str {
        match self {
            EntityCategory::SoftSkills => "soft_skills",
            EntityCategory::HardSkills => "hard_skills",
            EntityCategory::IndustrySector => "industry_sector",
            EntityCategory::Education => "education",
            EntityCategory::LanguageSkills => "language_skills",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Keyword sets for the five categories, in insertion order.
///
/// Order matters: embeddings are produced one per keyword, in this order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Entities {
    sets: [Vec<String>; 5],
}

impl Entities {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, category: EntityCategory) -> &[String] {
        &self.sets[category.index()]
    }

    /// Replaces the keywords of one category.
    pub fn set(&mut self, category: EntityCategory, keywords: Vec<String>) {
        self.sets[category.index()] = keywords;
    }

    /// Appends a keyword unless it is empty or already present.
    pub fn insert(&mut self, category: EntityCategory, keyword: String) -> bool {
        let set = &mut self.sets[category.index()];
        if keyword.is_empty() || set.contains(&keyword) {
            return false;
        }
        set.push(keyword);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityCategory, &[String])> {
        EntityCategory::ALL
            .into_iter()
            .map(move |c| (c, self.sets[c.index()].as_slice()))
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    fn validate(&self) -> Result<(), String> {
        for (category, keywords) in self.iter() {
            let mut seen = HashSet::new();
            for keyword in keywords {
                if keyword.is_empty() {
                    return Err(format!("empty keyword in {category}"));
                }
                if *keyword != keyword.to_lowercase() {
                    return Err(format!("keyword {keyword:?} in {category} is not lowercase"));
                }
                if !seen.insert(keyword.as_str()) {
                    return Err(format!("duplicate keyword {keyword:?} in {category}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntitiesRepr {
    #[serde(default)]
    soft_skills: Vec<String>,
    #[serde(default)]
    hard_skills: Vec<String>,
    #[serde(default)]
    industry_sector: Vec<String>,
    #[serde(default)]
    education: Vec<String>,
    #[serde(default)]
    language_skills: Vec<String>,
}

impl Serialize for Entities {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let [soft_skills, hard_skills, industry_sector, education, language_skills] =
            self.sets.clone();
        EntitiesRepr {
            soft_skills,
            hard_skills,
            industry_sector,
            education,
            language_skills,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Entities {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = EntitiesRepr::deserialize(deserializer)?;
        Ok(Entities {
            sets: [
                r.soft_skills,
                r.hard_skills,
                r.industry_sector,
                r.education,
                r.language_skills,
            ],
        })
    }
}

/// One candidate: raw traits (possibly missing) and CV keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub candidate_id: String,
    pub traits: Vec<Option<f64>>,
    #[serde(default)]
    pub entities: Entities,
}

impl CandidateProfile {
    /// Checks the raw-profile invariants: 18 traits within range and clean
    /// keyword sets.
    pub fn validate(&self) -> Result<(), String> {
        if self.candidate_id.is_empty() {
            return Err("empty candidate id".into());
        }
        if self.traits.len() != NUM_TRAITS {
            return Err(format!(
                "expected {NUM_TRAITS} traits, found {}",
                self.traits.len()
            ));
        }
        for (idx, value) in self.traits.iter().enumerate() {
            if let Some(v) = value {
                if !v.is_finite() || *v < TRAIT_RANGE.0 || *v > TRAIT_RANGE.1 {
                    return Err(format!("trait {idx} value {v} outside [-100, 100]"));
                }
            }
        }
        self.entities.validate()
    }
}

/// Reads `profiles.jsonl`, validates every record and sorts by candidate id.
pub fn load_profiles(path: &Path) -> Result<Vec<CandidateProfile>, ProfileError> {
    let file = File::open(path).map_err(|e| ProfileError::io(path, e))?;
    parse_profiles(BufReader::new(file)).map_err(|e| match e {
        ProfileError::Io { source, .. } => ProfileError::io(path, source),
        other => other,
    })
}

pub fn parse_profiles<R: BufRead>(reader: R) -> Result<Vec<CandidateProfile>, ProfileError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ProfileError::io(Path::new("<profiles>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let profile: CandidateProfile =
            serde_json::from_str(&line).map_err(|e| ProfileError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        profile
            .validate()
            .map_err(|message| ProfileError::Validation {
                line: line_no,
                candidate_id: profile.candidate_id.clone(),
                message,
            })?;
        if !seen.insert(profile.candidate_id.clone()) {
            return Err(ProfileError::DuplicateCandidate(profile.candidate_id));
        }
        out.push(profile);
    }
    out.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
    Ok(out)
}

pub fn save_profiles(path: &Path, profiles: &[CandidateProfile]) -> Result<(), ProfileError> {
    write_jsonl(path, profiles)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ProfileError> {
    let file = File::create(path).map_err(|e| ProfileError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| ProfileError::io(path, e))?;
    }
    w.flush().map_err(|e| ProfileError::io(path, e))
}

/// Recruitment stage reached in one selection, 0 (applied/rejected) to 3 (hired).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Stage(u8);

impl Stage {
    pub const COUNT: usize = 4;
    pub const ALL: [Stage; 4] = [Stage(0), Stage(1), Stage(2), Stage(3)];

    pub fn new(value: i64) -> Result<Self, ProfileError> {
        if (0..Self::COUNT as i64).contains(&value) {
            Ok(Stage(value as u8))
        } else {
            Err(ProfileError::InvalidStage(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Maps a recruiter-facing pipeline label onto its stage code.
    pub fn from_label(label: &str) -> Result<Self, ProfileError> {
        let stage = match label.trim().to_lowercase().as_str() {
            "applied" | "rejected" => 0,
            "screened" | "interviewed" => 1,
            "offer proposal" | "offer" => 2,
            "hired" => 3,
            _ => return Err(ProfileError::UnknownStageLabel(label.to_string())),
        };
        Ok(Stage(stage))
    }
}

impl TryFrom<i64> for Stage {
    type Error = ProfileError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Stage::new(value)
    }
}

impl From<Stage> for u8 {
    fn from(stage: Stage) -> u8 {
        stage.0
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub candidate_id: String,
    pub selection_id: String,
    pub stage: Stage,
}

/// Reads `outcomes.jsonl`; rejects duplicate (candidate, selection) pairs.
pub fn load_outcomes(path: &Path) -> Result<Vec<SelectionOutcome>, ProfileError> {
    let file = File::open(path).map_err(|e| ProfileError::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ProfileError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome: SelectionOutcome =
            serde_json::from_str(&line).map_err(|e| ProfileError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert((outcome.candidate_id.clone(), outcome.selection_id.clone())) {
            return Err(ProfileError::DuplicateOutcome {
                candidate_id: outcome.candidate_id,
                selection_id: outcome.selection_id,
            });
        }
        out.push(outcome);
    }
    out.sort_by(|a, b| {
        (&a.selection_id, &a.candidate_id).cmp(&(&b.selection_id, &b.candidate_id))
    });
    Ok(out)
}

pub fn save_outcomes(path: &Path, outcomes: &[SelectionOutcome]) -> Result<(), ProfileError> {
    write_jsonl(path, outcomes)
}

/// Per-trait constants used by [`normalize_traits`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitStats {
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TraitStats {
    /// Imputes and standardizes one raw trait vector with these constants.
    pub fn apply(&self, traits: &[Option<f64>]) -> Vec<f64> {
        traits
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let v = v.unwrap_or(self.median[t]);
                if self.std[t] > 0.0 {
                    (v - self.mean[t]) / self.std[t]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        let file = File::create(path).map_err(|e| ProfileError::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let file = File::open(path).map_err(|e| ProfileError::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median-imputes missing traits, then z-scores each column with the
/// population mean and standard deviation of the imputed column.
///
/// Constant columns map to zero. Returned profiles carry no missing values.
pub fn normalize_traits(
    profiles: &[CandidateProfile],
) -> Result<(Vec<CandidateProfile>, TraitStats), ProfileError> {
    if profiles.is_empty() {
        return Err(ProfileError::NoProfiles);
    }
    let n = profiles.len() as f64;
    let mut stats = TraitStats {
        median: vec![0.0; NUM_TRAITS],
        mean: vec![0.0; NUM_TRAITS],
        std: vec![0.0; NUM_TRAITS],
    };
    for t in 0..NUM_TRAITS {
        let mut present: Vec<f64> = profiles.iter().filter_map(|p| p.traits[t]).collect();
        if present.is_empty() {
            return Err(ProfileError::EmptyTraitColumn(t));
        }
        let med = median(&mut present);
        let column: Vec<f64> = profiles.iter().map(|p| p.traits[t].unwrap_or(med)).collect();
        let mean = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        stats.median[t] = med;
        stats.mean[t] = mean;
        stats.std[t] = var.sqrt();
    }
    let normalized = profiles
        .iter()
        .map(|p| CandidateProfile {
            candidate_id: p.candidate_id.clone(),
            traits: stats.apply(&p.traits).into_iter().map(Some).collect(),
            entities: p.entities.clone(),
        })
        .collect();
    Ok((normalized, stats))
}

/// Summary counts of an outcome table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_candidates: usize,
    pub num_selections: usize,
    pub num_pairs: usize,
    /// Percentage of each stage within each selection.
    pub stage_percentages: BTreeMap<String, [f64; 4]>,
}

impl DatasetStats {
    pub fn compute(outcomes: &[SelectionOutcome]) -> Self {
        let candidates: BTreeSet<&str> =
            outcomes.iter().map(|o| o.candidate_id.as_str()).collect();
        let mut counts: BTreeMap<String, [usize; 4]> = BTreeMap::new();
        for o in outcomes {
            counts.entry(o.selection_id.clone()).or_default()[o.stage.index()] += 1;
        }
        let stage_percentages = counts
            .into_iter()
            .map(|(sel, c)| {
                let total: usize = c.iter().sum();
                let pct = c.map(|x| 100.0 * x as f64 / total as f64);
                (sel, pct)
            })
            .collect::<BTreeMap<_, _>>();
        DatasetStats {
            num_candidates: candidates.len(),
            num_selections: stage_percentages.len(),
            num_pairs: outcomes.len(),
            stage_percentages,
        }
    }

    /// Stage percentages pooled over all pairs.
    pub fn pooled_percentages(outcomes: &[SelectionOutcome]) -> [f64; 4] {
        let mut c = [0usize; 4];
        for o in outcomes {
            c[o.stage.index()] += 1;
        }
        let n = outcomes.len().max(1) as f64;
        c.map(|x| 100.0 * x as f64 / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(id: &str, traits: &str) -> String {
        format!(r#"{{"candidate_id":"{id}","traits":{traits},"entities":{{"soft_skills":["teamwork"]}}}}"#)
    }

    fn zeros() -> String {
        format!("[{}]", vec!["0"; 18].join(","))
    }

    fn profile(id: &str, traits: Vec<Option<f64>>) -> CandidateProfile {
        CandidateProfile {
            candidate_id: id.into(),
            traits,
            entities: Entities::new(),
        }
    }

    #[test]
    fn parses_zero_profile() {
        let input = line("c1", &zeros());
        let profiles = parse_profiles(Cursor::new(input)).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].traits, vec![Some(0.0); 18]);
        assert_eq!(
            profiles[0].entities.get(EntityCategory::SoftSkills),
            &["teamwork".to_string()]
        );
        assert!(profiles[0].entities.get(EntityCategory::Education).is_empty());
    }

    #[test]
    fn rejects_out_of_range_trait() {
        let mut t = vec!["0"; 18];
        t[3] = "150";
        let input = line("c1", &format!("[{}]", t.join(",")));
        let err = parse_profiles(Cursor::new(input)).unwrap_err();
        assert!(matches!(err, ProfileError::Validation { line: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_ids() {
        let input = format!("{}\n{}\n", line("c1", &zeros()), line("c1", &zeros()));
        let err = parse_profiles(Cursor::new(input)).unwrap_err();
        assert!(matches!(err, ProfileError::DuplicateCandidate(ref id) if id == "c1"));
    }

    #[test]
    fn rejects_wrong_trait_count() {
        let input = line("c1", "[1,2,3]");
        assert!(matches!(
            parse_profiles(Cursor::new(input)),
            Err(ProfileError::Validation { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = format!("{}\n{{not json\n", line("c1", &zeros()));
        assert!(matches!(
            parse_profiles(Cursor::new(input)),
            Err(ProfileError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_unknown_entity_key_and_bad_keywords() {
        let input = format!(
            r#"{{"candidate_id":"c1","traits":{},"entities":{{"hobbies":["chess"]}}}}"#,
            zeros()
        );
        assert!(parse_profiles(Cursor::new(input)).is_err());
        let input = format!(
            r#"{{"candidate_id":"c1","traits":{},"entities":{{"education":["mba","mba"]}}}}"#,
            zeros()
        );
        assert!(parse_profiles(Cursor::new(input)).is_err());
        let input = format!(
            r#"{{"candidate_id":"c1","traits":{},"entities":{{"education":[""]}}}}"#,
            zeros()
        );
        assert!(parse_profiles(Cursor::new(input)).is_err());
    }

    #[test]
    fn null_traits_are_missing() {
        let mut t = vec!["0"; 18];
        t[0] = "null";
        let input = line("c1", &format!("[{}]", t.join(",")));
        let p = parse_profiles(Cursor::new(input)).unwrap();
        assert_eq!(p[0].traits[0], None);
    }

    #[test]
    fn profiles_sorted_by_id() {
        let input = format!("{}\n{}\n", line("b", &zeros()), line("a", &zeros()));
        let p = parse_profiles(Cursor::new(input)).unwrap();
        assert_eq!(p[0].candidate_id, "a");
        assert_eq!(p[1].candidate_id, "b");
    }

    #[test]
    fn normalizes_column_with_missing_value() {
        // column {1, 2, 3, missing}: median 2, mean 2, population std sqrt(0.5)
        let columns = [Some(1.0), Some(2.0), Some(3.0), None];
        let profiles: Vec<_> = columns
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut traits = vec![Some(0.0); 18];
                traits[0] = *v;
                profile(&format!("c{i}"), traits)
            })
            .collect();
        let (norm, stats) = normalize_traits(&profiles).unwrap();
        assert_eq!(stats.median[0], 2.0);
        assert_eq!(stats.mean[0], 2.0);
        assert!((stats.std[0] - 0.5f64.sqrt()).abs() < 1e-12);
        let z: Vec<f64> = norm.iter().map(|p| p.traits[0].unwrap()).collect();
        let expected = [-std::f64::consts::SQRT_2, 0.0, std::f64::consts::SQRT_2, 0.0];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{z:?}");
        }
        // all-zero column
        assert!(norm.iter().all(|p| p.traits[1] == Some(0.0)));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let profiles: Vec<_> = (0..3)
            .map(|i| profile(&format!("c{i}"), vec![Some(5.0); 18]))
            .collect();
        let (norm, stats) = normalize_traits(&profiles).unwrap();
        assert_eq!(stats.std[0], 0.0);
        assert!(norm.iter().all(|p| p.traits.iter().all(|v| *v == Some(0.0))));
    }

    #[test]
    fn entirely_missing_column_is_an_error() {
        let mut traits = vec![Some(1.0); 18];
        traits[7] = None;
        let profiles = vec![profile("a", traits.clone()), profile("b", traits)];
        assert!(matches!(
            normalize_traits(&profiles),
            Err(ProfileError::EmptyTraitColumn(7))
        ));
        assert!(matches!(normalize_traits(&[]), Err(ProfileError::NoProfiles)));
    }

    #[test]
    fn stage_labels_map_to_codes() {
        assert_eq!(Stage::from_label("Applied").unwrap().value(), 0);
        assert_eq!(Stage::from_label("Rejected").unwrap().value(), 0);
        assert_eq!(Stage::from_label("Screened").unwrap().value(), 1);
        assert_eq!(Stage::from_label("Interviewed").unwrap().value(), 1);
        assert_eq!(Stage::from_label("Offer Proposal").unwrap().value(), 2);
        assert_eq!(Stage::from_label("Hired").unwrap().value(), 3);
        assert!(Stage::from_label("Ghosted").is_err());
        assert!(serde_json::from_str::<Stage>("4").is_err());
        assert!(serde_json::from_str::<Stage>("-1").is_err());
    }

    #[test]
    fn dataset_stats_percentages_sum_to_100() {
        let mk = |c: &str, s: &str, st: i64| SelectionOutcome {
            candidate_id: c.into(),
            selection_id: s.into(),
            stage: Stage::new(st).unwrap(),
        };
        let outcomes = vec![mk("a", "s1", 0), mk("b", "s1", 3), mk("c", "s1", 1), mk("a", "s2", 2)];
        let stats = DatasetStats::compute(&outcomes);
        assert_eq!(stats.num_candidates, 3);
        assert_eq!(stats.num_selections, 2);
        assert_eq!(stats.num_pairs, 4);
        for pct in stats.stage_percentages.values() {
            assert!((pct.iter().sum::<f64>() - 100.0).abs() < 0.01);
        }
    }
}

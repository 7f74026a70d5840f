//! Entity extraction behind a pluggable client.
//!
//! A client receives `{"text": ...}` and answers with the same five-key map
//! used in `profiles.jsonl`. The shipped [`DictionaryExtractor`] runs offline;
//! a remote model can be plugged in by implementing [`ExtractionClient`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{normalize_text, Entities, EntityCategory, ProfileError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRequest {
    pub text: String,
}

/// Untyped client response: category key to keyword list.
pub type RawEntityMap = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("extraction failed after {attempts} attempts: {source}")]
    Retryable {
        attempts: u32,
        #[source]
        source: ClientError,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub trait ExtractionClient {
    fn extract(&self, request: &ExtractionRequest) -> Result<RawEntityMap, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3 }
    }
}

/// Runs the client on `cv_text` and returns normalized, de-duplicated
/// keyword sets. Transport failures are retried up to the policy limit.
pub fn extract_entities(
    cv_text: &str,
    client: &dyn ExtractionClient,
    policy: RetryPolicy,
) -> Result<Entities, ExtractionError> {
    let request = ExtractionRequest {
        text: cv_text.to_string(),
    };
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        match client.extract(&request) {
            Ok(raw) => break raw,
            Err(err) if attempt >= max_attempts => {
                return Err(ExtractionError::Retryable {
                    attempts: attempt,
                    source: err,
                })
            }
            Err(_) => continue,
        }
    };
    let mut entities = Entities::new();
    for (key, keywords) in raw {
        let category = EntityCategory::from_key(&key)
            .ok_or_else(|| ExtractionError::Protocol(format!("unknown category key {key:?}")))?;
        for keyword in keywords {
            entities.insert(category, normalize_text(&keyword));
        }
    }
    Ok(entities)
}

/// Phrase-dictionary extractor matching whole tokens of normalized text.
#[derive(Debug, Clone, Default)]
pub struct DictionaryExtractor {
    entries: Vec<(Vec<String>, EntityCategory)>,
}

impl DictionaryExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entry(mut self, phrase: &str, category: EntityCategory) -> Self {
        self.add(phrase, category);
        self
    }

    pub fn add(&mut self, phrase: &str, category: EntityCategory) {
        let tokens: Vec<String> = normalize_text(phrase)
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if !tokens.is_empty() {
            self.entries.push((tokens, category));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads `{"phrase": "category_key", ...}`.
    pub fn from_json_file(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProfileError::io(path, e))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text)?;
        let mut out = Self::new();
        for (phrase, key) in map {
            let category = EntityCategory::from_key(&key).ok_or_else(|| ProfileError::Parse {
                line: 0,
                message: format!("unknown category {key:?} for phrase {phrase:?}"),
            })?;
            out.add(&phrase, category);
        }
        Ok(out)
    }

    /// A small general-purpose vocabulary for offline runs.
    pub fn builtin() -> Self {
        use EntityCategory::*;
        let table: &[(&str, EntityCategory)] = &[
            ("teamwork", SoftSkills),
            ("communication", SoftSkills),
            ("leadership", SoftSkills),
            ("problem solving", SoftSkills),
            ("time management", SoftSkills),
            ("negotiation", SoftSkills),
            ("adaptability", SoftSkills),
            ("python", HardSkills),
            ("java", HardSkills),
            ("sql", HardSkills),
            ("excel", HardSkills),
            ("accounting", HardSkills),
            ("project management", HardSkills),
            ("machine learning", HardSkills),
            ("autocad", HardSkills),
            ("sap", HardSkills),
            ("manufacturing", IndustrySector),
            ("banking", IndustrySector),
            ("retail", IndustrySector),
            ("healthcare", IndustrySector),
            ("automotive", IndustrySector),
            ("logistics", IndustrySector),
            ("consulting", IndustrySector),
            ("startups", IndustrySector),
            ("bachelor", Education),
            ("master", Education),
            ("phd", Education),
            ("high school diploma", Education),
            ("engineering degree", Education),
            ("management diploma", Education),
            ("english", LanguageSkills),
            ("italian", LanguageSkills),
            ("german", LanguageSkills),
            ("french", LanguageSkills),
            ("spanish", LanguageSkills),
        ];
        let mut out = Self::new();
        for (phrase, category) in table {
            out.add(phrase, *category);
        }
        out
    }
}

impl ExtractionClient for DictionaryExtractor {
    fn extract(&self, request: &ExtractionRequest) -> Result<RawEntityMap, ClientError> {
        let text = normalize_text(&request.text);
        let tokens: Vec<&str> = text.split(' ').filter(|t| !t.is_empty()).collect();
        // (first position, phrase, category)
        let mut hits: Vec<(usize, String, EntityCategory)> = Vec::new();
        for (phrase, category) in &self.entries {
            if phrase.len() > tokens.len() {
                continue;
            }
            let found = (0..=tokens.len() - phrase.len())
                .find(|&start| phrase.iter().zip(&tokens[start..]).all(|(a, b)| a == b));
            if let Some(pos) = found {
                hits.push((pos, phrase.join(" "), *category));
            }
        }
        hits.sort();
        let mut out: RawEntityMap = EntityCategory::ALL
            .into_iter()
            .map(|c| (c.key().to_string(), Vec::new()))
            .collect();
        for (_, phrase, category) in hits {
            out.get_mut(category.key()).unwrap().push(phrase);
        }
        Ok(out)
    }
}

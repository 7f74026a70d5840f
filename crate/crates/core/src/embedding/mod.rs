//! Keyword embeddings grouped per (candidate, category).
//!
//! Every keyword is embedded on its own and stored L2-normalized. The
//! [`StubProvider`] derives vectors from a hash of the keyword so the
//! pipeline can run without network access.

mod store;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::profile::{CandidateProfile, EntityCategory, RetryPolicy};

pub use store::{
    decode_store, encode_store, read_keyword_sidecar, read_store, sidecar_path, write_keyword_sidecar,
    write_store, EmbeddingStore, KeywordRecord, StoreError, STORE_MAGIC, STORE_VERSION,
};

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out")]
    Timeout,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding {keyword:?} failed after {attempts} attempts: {source}")]
    Retryable {
        keyword: String,
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

/// Maps one keyword to one vector of a fixed dimension.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, keyword: &str) -> Result<Vec<f32>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    External,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim < 2 {
            return Err(EmbeddingError::Config(format!("dimension {} < 2", self.dim)));
        }
        Ok(())
    }

    /// Builds the configured provider. No external provider ships with this
    /// crate; callers supply their own [`EmbeddingProvider`] for that case.
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        self.validate()?;
        match self.kind {
            ProviderKind::Stub => Ok(Box::new(StubProvider::new(self.dim, self.seed))),
            ProviderKind::External => Err(EmbeddingError::Config(
                "no external embedding provider is configured".into(),
            )),
        }
    }
}

/// All keyword vectors of one candidate in one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub candidate_id: String,
    pub category: EntityCategory,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Deterministic unit vector for `keyword`: a Gaussian draw seeded by
/// SHA-256 of `(seed, keyword)`, normalized onto the sphere.
pub fn stub_embed(keyword: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(keyword.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize_f64(&raw).unwrap_or_else(|| {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v
    })
}

/// L2-normalizes in 64-bit and rounds to 32-bit; `None` for a zero vector.
pub fn normalize_f64(v: &[f64]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    Some(v.iter().map(|x| (x / norm) as f32).collect())
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct StubProvider {
    dim: usize,
    seed: u64,
}

impl StubProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        StubProvider { dim, seed }
    }
}

impl EmbeddingProvider for StubProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, keyword: &str) -> Result<Vec<f32>, ProviderError> {
        Ok(stub_embed(keyword, self.dim, self.seed))
    }
}

/// Embeds every keyword of `profile`, one [`EmbeddingSet`] per category in
/// category order. Output vectors are unit length whatever the provider
/// returns.
pub fn embed_profile(
    profile: &CandidateProfile,
    provider: &dyn EmbeddingProvider,
    policy: RetryPolicy,
) -> Result<Vec<EmbeddingSet>, EmbeddingError> {
    let dim = provider.dim();
    let max_attempts = policy.max_attempts.max(1);
    let mut sets = Vec::with_capacity(EntityCategory::ALL.len());
    for (category, keywords) in profile.entities.iter() {
        let mut vectors = Vec::with_capacity(keywords.len());
        for keyword in keywords {
            let mut attempt = 0;
            let raw = loop {
                attempt += 1;
                match provider.embed(keyword) {
                    Ok(v) => break v,
                    Err(source) if attempt >= max_attempts => {
                        return Err(EmbeddingError::Retryable {
                            keyword: keyword.clone(),
                            attempts: attempt,
                            source,
                        })
                    }
                    Err(_) => continue,
                }
            };
            if raw.len() != dim {
                return Err(EmbeddingError::Protocol(format!(
                    "keyword {keyword:?}: expected dimension {dim}, got {}",
                    raw.len()
                )));
            }
            let wide: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
            let unit = normalize_f64(&wide).ok_or_else(|| {
                EmbeddingError::Protocol(format!("keyword {keyword:?}: zero or non-finite vector"))
            })?;
            vectors.push(unit);
        }
        sets.push(EmbeddingSet {
            candidate_id: profile.candidate_id.clone(),
            category,
            vectors,
        });
    }
    Ok(sets)
}

/// Embeds all profiles into a store of dimension `provider.dim()`.
pub fn embed_profiles(
    profiles: &[CandidateProfile],
    provider: &dyn EmbeddingProvider,
    policy: RetryPolicy,
) -> Result<EmbeddingStore, EmbeddingError> {
    let mut sets = Vec::new();
    for profile in profiles {
        sets.extend(embed_profile(profile, provider, policy)?);
    }
    Ok(EmbeddingStore {
        dim: provider.dim(),
        sets,
    })
}

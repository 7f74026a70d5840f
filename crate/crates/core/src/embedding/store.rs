//! EMB1 binary embedding store.
//!
//! ```text
//! "EMB1" | u32 version | u32 dim | u64 record_count | record*
//! record := u32 id_len | id bytes (UTF-8) | u8 category | u32 vec_count | vec_count*dim f32
//! ```
//!
//! All integers and floats are little-endian. Keyword strings live in a JSONL
//! sidecar next to the store (see [`sidecar_path`]).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EmbeddingSet;
use crate::profile::{CandidateProfile, EntityCategory};

pub const STORE_MAGIC: [u8; 4] = *b"EMB1";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated store at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("invalid category code {code} at byte {offset}")]
    InvalidCategory { offset: usize, code: u8 },
    #[error("candidate id at byte {offset} is not UTF-8")]
    InvalidUtf8 { offset: usize },
    #[error("vector of length {found} in store of dimension {dim}")]
    DimensionMismatch { dim: usize, found: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// A dimension plus every embedding set, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub sets: Vec<EmbeddingSet>,
}

impl EmbeddingStore {
    pub fn set_for(&self, candidate_id: &str, category: EntityCategory) -> Option<&EmbeddingSet> {
        self.sets
            .iter()
            .find(|s| s.candidate_id == candidate_id && s.category == category)
    }

    pub fn vector_count(&self) -> usize {
        self.sets.iter().map(EmbeddingSet::len).sum()
    }
}

pub fn encode_store(store: &EmbeddingStore) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::new();
    out.extend_from_slice(&STORE_MAGIC);
    out.extend_from_slice(&STORE_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.sets.len() as u64).to_le_bytes());
    for set in &store.sets {
        let id = set.candidate_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.push(set.category.code());
        out.extend_from_slice(&(set.vectors.len() as u32).to_le_bytes());
        for v in &set.vectors {
            if v.len() != store.dim {
                return Err(StoreError::DimensionMismatch {
                    dim: store.dim,
                    found: v.len(),
                });
            }
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let remaining = self.bytes.len() - self.offset;
        if remaining < n {
            return Err(StoreError::Truncated {
                offset: self.bytes.len(),
                needed: n - remaining,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<EmbeddingStore, StoreError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic: [u8; 4] = match cur.take(4) {
        Ok(m) => m.try_into().unwrap(),
        Err(_) => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(StoreError::BadMagic(m));
        }
    };
    if magic != STORE_MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != STORE_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()?;
    let mut sets = Vec::new();
    for _ in 0..count {
        let id_len = cur.u32()? as usize;
        let id_offset = cur.offset;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| StoreError::InvalidUtf8 { offset: id_offset })?
            .to_string();
        let cat_offset = cur.offset;
        let code = cur.u8()?;
        let category = EntityCategory::from_code(code).ok_or(StoreError::InvalidCategory {
            offset: cat_offset,
            code,
        })?;
        let vec_count = cur.u32()? as usize;
        let payload_len = vec_count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .unwrap_or(usize::MAX);
        let payload = cur.take(payload_len)?;
        let vectors = if dim == 0 {
            vec![Vec::new(); vec_count]
        } else {
            payload
                .chunks_exact(dim * 4)
                .map(|chunk| {
                    chunk
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                        .collect()
                })
                .collect()
        };
        sets.push(EmbeddingSet {
            candidate_id: id,
            category,
            vectors,
        });
    }
    if cur.offset != bytes.len() {
        return Err(StoreError::TrailingBytes(bytes.len() - cur.offset));
    }
    Ok(EmbeddingStore { dim, sets })
}

pub fn write_store(path: &Path, store: &EmbeddingStore) -> Result<(), StoreError> {
    let bytes = encode_store(store)?;
    std::fs::write(path, bytes).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore, StoreError> {
    let bytes = std::fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_store(&bytes)
}

/// `embeddings.emb` → `embeddings.emb.keywords.jsonl`.
pub fn sidecar_path(store_path: &Path) -> PathBuf {
    let mut name = store_path.as_os_str().to_owned();
    name.push(".keywords.jsonl");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRecord {
    pub candidate_id: String,
    pub category: EntityCategory,
    pub keywords: Vec<String>,
}

/// Writes one keyword record per (candidate, category), parallel to the
/// binary records.
pub fn write_keyword_sidecar(path: &Path, profiles: &[CandidateProfile]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for p in profiles {
        for (category, keywords) in p.entities.iter() {
            let record = KeywordRecord {
                candidate_id: p.candidate_id.clone(),
                category,
                keywords: keywords.to_vec(),
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_keyword_sidecar(path: &Path) -> Result<Vec<KeywordRecord>, StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(io_err)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::stub_embed;
    use proptest::prelude::*;

    fn sample_store() -> EmbeddingStore {
        let mut sets = Vec::new();
        for cand in ["alice", "bob"] {
            for (ci, category) in EntityCategory::ALL.into_iter().enumerate() {
                let vectors = (0..ci)
                    .map(|k| stub_embed(&format!("{cand}{ci}{k}"), 6, 1))
                    .collect();
                sets.push(EmbeddingSet {
                    candidate_id: cand.into(),
                    category,
                    vectors,
                });
            }
        }
        EmbeddingStore { dim: 6, sets }
    }

    #[test]
    fn round_trip_two_candidates_five_categories() {
        let store = sample_store();
        let bytes = encode_store(&store).unwrap();
        assert_eq!(decode_store(&bytes).unwrap(), store);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_store(&sample_store()).unwrap();
        assert_eq!(&bytes[0..4], b"EMB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 10);
        // first record: id_len 5, "alice", category 0, zero vectors
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 5);
        assert_eq!(&bytes[24..29], b"alice");
        assert_eq!(bytes[29], 0);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_store(&sample_store()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_store(&bytes), Err(StoreError::BadMagic(m)) if &m == b"XXXX"));
        assert!(matches!(decode_store(b"EM"), Err(StoreError::BadMagic(_))));
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut bytes = encode_store(&sample_store()).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_store(&bytes),
            Err(StoreError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn header_count_exceeding_records_is_truncation() {
        // fault-injection writer: declare 10 records, emit 9
        let mut store = sample_store();
        store.sets.truncate(9);
        let mut bytes = encode_store(&store).unwrap();
        bytes[12..20].copy_from_slice(&10u64.to_le_bytes());
        let len = bytes.len();
        match decode_store(&bytes) {
            Err(StoreError::Truncated { offset, .. }) => assert_eq!(offset, len),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn cut_payload_reports_offset() {
        let bytes = encode_store(&sample_store()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_store(cut),
            Err(StoreError::Truncated { offset, needed: 3 }) if offset == cut.len()
        ));
    }

    #[test]
    fn invalid_category_code() {
        let mut bytes = encode_store(&sample_store()).unwrap();
        bytes[29] = 9;
        assert!(matches!(
            decode_store(&bytes),
            Err(StoreError::InvalidCategory { offset: 29, code: 9 })
        ));
    }

    #[test]
    fn writer_rejects_ragged_vectors() {
        let mut store = sample_store();
        store.sets[1].vectors[0].push(0.0);
        assert!(matches!(
            encode_store(&store),
            Err(StoreError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn lossless_for_arbitrary_f32(
            dim in 1usize..5,
            raw in proptest::collection::vec(
                (any::<u8>(), proptest::collection::vec(any::<u32>(), 0..12)), 0..6),
        ) {
            let sets = raw.into_iter().enumerate().map(|(i, (cat, bits))| {
                let n = bits.len() / dim;
                let vectors = (0..n)
                    .map(|k| bits[k * dim..(k + 1) * dim].iter().map(|b| f32::from_bits(*b)).collect())
                    .collect();
                EmbeddingSet {
                    candidate_id: format!("c{i}"),
                    category: EntityCategory::from_code(cat % 5).unwrap(),
                    vectors,
                }
            }).collect();
            let store = EmbeddingStore { dim, sets };
            let back = decode_store(&encode_store(&store).unwrap()).unwrap();
            // compare bit patterns so NaN payloads count too
            prop_assert_eq!(back.sets.len(), store.sets.len());
            for (a, b) in back.sets.iter().zip(&store.sets) {
                prop_assert_eq!(&a.candidate_id, &b.candidate_id);
                prop_assert_eq!(a.category, b.category);
                let abits: Vec<u32> = a.vectors.iter().flatten().map(|x| x.to_bits()).collect();
                let bbits: Vec<u32> = b.vectors.iter().flatten().map(|x| x.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
        }
    }
}

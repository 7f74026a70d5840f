//! Checkpoint layout, little-endian:
//!
//! ```text
//! "CKP1" | u32 version | u32 header_len | header JSON
//! u32 tensor_count | { u32 name_len | name | u32 rows | u32 cols | f32 × rows·cols }*
//! ```
//!
//! The header holds the model spec, relation codes, layer widths, head kind
//! and selection ids. Parameters are stored as `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadKind, LearningError, StageModel};
use crate::gnn::ModelSpec;
use crate::profile::EntityCategory;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKP1";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: ModelSpec,
    relations: Vec<u8>,
    widths: Vec<usize>,
    head: HeadKind,
    selections: Vec<String>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), LearningError> {
    let v = u32::try_from(v).map_err(|_| LearningError::Checkpoint(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &StageModel) -> Result<Vec<u8>, LearningError> {
    let mut widths = vec![model.gnn.layers[0].in_dim()];
    widths.extend(model.gnn.layers.iter().map(|l| l.out_dim()));
    let header = Header {
        spec: model.spec(),
        relations: model.gnn.relations.iter().map(|r| r.code()).collect(),
        widths,
        head: model.head,
        selections: model.heads.iter().map(|h| h.selection_id.clone()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    let layout = model.param_layout();
    put_u32(&mut out, layout.len())?;
    for ((name, (rows, cols)), values) in layout.iter().zip(model.param_slices()) {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, *rows)?;
        put_u32(&mut out, *cols)?;
        for v in values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearningError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            LearningError::Checkpoint(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, LearningError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<StageModel, LearningError> {
    let bad = |m: String| LearningError::Checkpoint(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = r.u32()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;
    let relations: Vec<EntityCategory> = header
        .relations
        .iter()
        .map(|&c| EntityCategory::from_code(c).ok_or_else(|| bad(format!("unknown relation code {c}"))))
        .collect::<Result<_, _>>()?;
    if header.widths.len() != header.spec.depth + 1 {
        return Err(bad(format!(
            "{} widths for depth {}",
            header.widths.len(),
            header.spec.depth
        )));
    }
    let mut model = StageModel::new(
        header.spec,
        header.head,
        header.widths[0],
        &relations,
        &header.selections,
        0,
    )?;
    let layout = model.param_layout();
    let count = r.u32()?;
    if count != layout.len() {
        return Err(bad(format!("{count} tensors, model needs {}", layout.len())));
    }
    for ((name, shape), dst) in layout.iter().zip(model.param_slices_mut()) {
        let name_len = r.u32()?;
        let found = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("tensor name is not UTF-8".into()))?;
        let found_shape = (r.u32()?, r.u32()?);
        if found != name || found_shape != *shape {
            return Err(bad(format!(
                "tensor {found} {found_shape:?} where {name} {shape:?} was expected"
            )));
        }
        let payload = r.take(dst.len() * 4)?;
        for (d, chunk) in dst.iter_mut().zip(payload.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &StageModel) -> Result<(), LearningError> {
    std::fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<StageModel, LearningError> {
    decode_checkpoint(&std::fs::read(path)?)
}

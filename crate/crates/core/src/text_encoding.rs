//! Description embeddings and the other per-object feature vectors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::describe::DescriptionSet;
use crate::error::{Error, Result};
use crate::io::embedding::{read_embeddings, EmbeddingFile, EmbeddingKind};

pub use crate::io::embedding::EmbeddingRecord;

pub const DEFAULT_TEXT_DIM: usize = 768;
pub const DEFAULT_POINT_DIM: usize = 1024;
pub const DEFAULT_VISUAL_DIM: usize = 1024;

/// Embedding width per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingDims {
    pub point: usize,
    pub visual: usize,
    pub text: usize,
}

impl Default for EmbeddingDims {
    fn default() -> Self {
        Self {
            point: DEFAULT_POINT_DIM,
            visual: DEFAULT_VISUAL_DIM,
            text: DEFAULT_TEXT_DIM,
        }
    }
}

impl EmbeddingDims {
    pub fn of(&self, kind: EmbeddingKind) -> Option<usize> {
        match kind {
            EmbeddingKind::Point3D => Some(self.point),
            EmbeddingKind::Visual2D => Some(self.visual),
            EmbeddingKind::Text => Some(self.text),
            _ => None,
        }
    }
}

pub trait TextEncoder: Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

pub fn encode_description(text: &str, encoder: &dyn TextEncoder) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::domain("cannot encode an empty description"));
    }
    let v = encoder.encode(text)?;
    if v.len() != encoder.dim() {
        return Err(Error::domain(format!(
            "encoder produced {} values, declared {}",
            v.len(),
            encoder.dim()
        )));
    }
    Ok(v)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

/// Bucket of a 64-bit hash: XOR of its little-endian 32-bit halves, modulo `dim`.
fn fold(hash: u64, dim: usize) -> usize {
    let b = hash.to_le_bytes();
    let lo = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let hi = u32::from_le_bytes([b[4], b[5], b[6], b[7]]);
    (lo ^ hi) as usize % dim
}

/// Hashed bag of character trigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockTextEncoder {
    pub dim: usize,
}

impl Default for MockTextEncoder {
    fn default() -> Self {
        Self { dim: DEFAULT_TEXT_DIM }
    }
}

impl TextEncoder for MockTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        mock_text_encode(text, self.dim)
    }
}

/// Texts shorter than three characters count as a single gram.
pub fn mock_text_encode(text: &str, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::domain("zero embedding dimension"));
    }
    if text.is_empty() {
        return Err(Error::domain("cannot encode an empty text"));
    }
    let chars: Vec<char> = text.chars().collect();
    let mut v = vec![0.0; dim];
    let mut buf = [0u8; 12];
    if chars.len() < 3 {
        v[fold(fnv1a64(text.as_bytes()), dim)] += 1.0;
    } else {
        for w in chars.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            v[fold(fnv1a64(&buf[..n]), dim)] += 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// One vector per record; missing descriptions map to the zero vector.
pub fn encode_descriptions(
    records: &DescriptionSet,
    encoder: &dyn TextEncoder,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (&idx, record) in records {
        let v = if record.is_missing() || record.text.trim().is_empty() {
            log::warn!("object {idx}: no description, using a zero text embedding");
            vec![0.0; encoder.dim()]
        } else {
            encode_description(&record.text, encoder)?
        };
        out.insert(idx, v);
    }
    Ok(out)
}

/// Vectors loaded from an interchange file, plus the expected objects it lacks.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputed {
    pub vectors: BTreeMap<usize, Vec<f32>>,
    pub missing: Vec<usize>,
}

/// Reads an interchange file and checks it against the expected kind and width.
pub fn load_precomputed(
    path: impl AsRef<Path>,
    kind: EmbeddingKind,
    expected_dim: usize,
    expected_objects: &[usize],
) -> Result<Precomputed> {
    let path = path.as_ref();
    let file: EmbeddingFile = read_embeddings(path)?;
    if file.kind != kind {
        return Err(Error::format(
            path,
            "header",
            "kind",
            format!("expected {kind:?} embeddings, found {:?}", file.kind),
        ));
    }
    if file.dim != expected_dim {
        return Err(Error::format(
            path,
            "header",
            "dim",
            format!("dimension mismatch: file has {}, expected {expected_dim}", file.dim),
        ));
    }
    let vectors: BTreeMap<usize, Vec<f32>> = file
        .records
        .into_iter()
        .map(|r| (r.object_index as usize, r.vector))
        .collect();
    let missing: Vec<usize> = expected_objects
        .iter()
        .copied()
        .filter(|i| !vectors.contains_key(i))
        .collect();
    if !missing.is_empty() {
        log::warn!("{}: no vectors for objects {missing:?}", path.display());
    }
    Ok(Precomputed { vectors, missing })
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

//! `D3DE` embedding interchange files.
//!
//! ```text
//! magic    4 bytes  "D3DE"
//! version  u16      1
//! kind     u8       0 Point3D, 1 Visual2D, 2 Text, 3 HeadWeights, 4 FusedTokens
//! dim      u32
//! count    u32
//! [kind 3 only] layout_len u32, then layout_len x u32 layer widths
//! count x (object_index u32, dim x f32)
//! ```
//!
//! Every integer and float is little-endian. A head-weights file holds one
//! record whose vector is the flattened parameters (per layer, row-major
//! weights then bias) of the head described by the layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_bytes, write_bytes};

pub const MAGIC: &[u8; 4] = b"D3DE";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Point3D,
    Visual2D,
    Text,
    HeadWeights,
    FusedTokens,
}

impl EmbeddingKind {
    pub fn code(self) -> u8 {
        match self {
            EmbeddingKind::Point3D => 0,
            EmbeddingKind::Visual2D => 1,
            EmbeddingKind::Text => 2,
            EmbeddingKind::HeadWeights => 3,
            EmbeddingKind::FusedTokens => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => EmbeddingKind::Point3D,
            1 => EmbeddingKind::Visual2D,
            2 => EmbeddingKind::Text,
            3 => EmbeddingKind::HeadWeights,
            4 => EmbeddingKind::FusedTokens,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub object_index: u32,
    pub kind: EmbeddingKind,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub kind: EmbeddingKind,
    pub dim: usize,
    /// Layer widths; present exactly for [`EmbeddingKind::HeadWeights`].
    pub head_layout: Option<Vec<u32>>,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    pub fn new(kind: EmbeddingKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            head_layout: None,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, object_index: usize, vector: Vec<f32>) {
        self.records.push(EmbeddingRecord {
            object_index: object_index as u32,
            kind: self.kind,
            vector,
        });
    }

    pub fn get(&self, object_index: usize) -> Option<&[f32]> {
        self.records
            .iter()
            .find(|r| r.object_index as usize == object_index)
            .map(|r| r.vector.as_slice())
    }
}

pub fn encode_embeddings(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let dim = u32::try_from(file.dim).map_err(|_| Error::domain("embedding dim exceeds u32"))?;
    let count = u32::try_from(file.records.len()).map_err(|_| Error::domain("too many records"))?;
    if (file.kind == EmbeddingKind::HeadWeights) != file.head_layout.is_some() {
        return Err(Error::domain("a head layout is required for, and only for, head-weight files"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + file.records.len() * (4 + 4 * file.dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(file.kind.code());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    if let Some(layout) = &file.head_layout {
        out.extend_from_slice(&(layout.len() as u32).to_le_bytes());
        for w in layout {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    for (i, r) in file.records.iter().enumerate() {
        if r.vector.len() != file.dim {
            return Err(Error::domain(format!(
                "record {i} has {} values, header dim is {}",
                r.vector.len(),
                file.dim
            )));
        }
        if r.kind != file.kind {
            return Err(Error::domain(format!("record {i} kind differs from the file kind")));
        }
        out.extend_from_slice(&r.object_index.to_le_bytes());
        for v in &r.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses and validates a file. `path` only labels errors.
pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingFile> {
    let header = |field: &str, msg: &str| Error::format(path, "header", field, msg);
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(MAGIC.as_slice()) {
        return Err(header("magic", "expected \"D3DE\""));
    }
    let version = c
        .take(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| header("version", "truncated header"))?;
    if version != VERSION {
        return Err(header("version", &format!("unsupported version {version}")));
    }
    let code = c.take(1).ok_or_else(|| header("kind", "truncated header"))?[0];
    let kind = EmbeddingKind::from_code(code).ok_or_else(|| header("kind", &format!("unknown kind {code}")))?;
    let dim = c.u32().ok_or_else(|| header("dim", "truncated header"))? as usize;
    let count = c.u32().ok_or_else(|| header("count", "truncated header"))? as usize;
    let head_layout = if kind == EmbeddingKind::HeadWeights {
        let n = c.u32().ok_or_else(|| header("layout", "truncated head descriptor"))? as usize;
        let mut layout = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            layout.push(c.u32().ok_or_else(|| header("layout", "truncated head descriptor"))?);
        }
        let params: usize = layout.windows(2).map(|w| (w[0] as usize + 1) * w[1] as usize).sum();
        if layout.len() < 2 || params != dim {
            return Err(header("layout", "head layout does not match dim"));
        }
        Some(layout)
    } else {
        None
    };

    let mut records = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let rec = |field: &str, msg: String| Error::format(path, i, field, msg);
        let object_index = c
            .u32()
            .ok_or_else(|| rec("object_index", format!("truncated: header declares {count} records")))?;
        let raw = c.take(dim * 4).ok_or_else(|| {
            rec("vector", format!("truncated: expected {dim} float32 values"))
        })?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if let Some(j) = vector.iter().position(|v| !v.is_finite()) {
            return Err(rec("vector", format!("non-finite value at position {j}")));
        }
        if records.iter().any(|r: &EmbeddingRecord| r.object_index == object_index) {
            return Err(rec("object_index", format!("duplicate object index {object_index}")));
        }
        records.push(EmbeddingRecord { object_index, kind, vector });
    }
    if c.pos != bytes.len() {
        return Err(Error::format(
            path,
            "trailer",
            "count",
            format!("{} bytes beyond the declared {count} records", bytes.len() - c.pos),
        ));
    }
    Ok(EmbeddingFile { kind, dim, head_layout, records })
}

pub fn write_embeddings(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embeddings(file)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let path = path.as_ref();
    decode_embeddings(&read_bytes(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingFile {
        let mut f = EmbeddingFile::new(EmbeddingKind::Text, 4);
        f.push(1, vec![0.1, -0.2, 3.5e-8, 1.0]);
        f.push(2, vec![f32::MIN_POSITIVE, 0.0, -0.0, 7.25]);
        f.push(5, vec![1.0, 2.0, 3.0, 4.0]);
        f
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample();
        let bytes = encode_embeddings(&f).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 3 * (4 + 16));
        let back = decode_embeddings(&bytes, Path::new("x")).unwrap();
        for (a, b) in f.records.iter().zip(&back.records) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.vector), bits(&b.vector));
        }
        assert_eq!(back, f);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = encode_embeddings(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"D3DE");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[7..11], &[4, 0, 0, 0]);
        assert_eq!(&bytes[11..15], &[3, 0, 0, 0]);
        assert_eq!(&bytes[15..19], &[1, 0, 0, 0]);
    }

    #[test]
    fn short_record_names_record_index() {
        let mut bytes = encode_embeddings(&sample()).unwrap();
        bytes.truncate(bytes.len() - 4);
        let err = decode_embeddings(&bytes, Path::new("emb.d3de")).unwrap_err();
        match err {
            Error::Format { record, field, .. } => {
                assert_eq!(record, "2");
                assert_eq!(field, "vector");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nan_rejected() {
        let mut f = sample();
        f.records[1].vector[2] = f32::NAN;
        let bytes = encode_embeddings(&f).unwrap();
        let err = decode_embeddings(&bytes, Path::new("x")).unwrap_err().to_string();
        assert!(err.contains("record 1") && err.contains("non-finite"), "{err}");
    }

    #[test]
    fn corrupt_headers_rejected() {
        let good = encode_embeddings(&sample()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_embeddings(&bad, Path::new("x")).is_err());
        let mut bad = good.clone();
        bad[6] = 9;
        assert!(decode_embeddings(&bad, Path::new("x")).is_err());
        let mut bad = good.clone();
        bad.push(0);
        assert!(decode_embeddings(&bad, Path::new("x")).is_err());
        assert!(decode_embeddings(&good[..9], Path::new("x")).is_err());
    }

    #[test]
    fn head_weights_need_consistent_layout() {
        let mut f = EmbeddingFile::new(EmbeddingKind::HeadWeights, 2 * 3 + 3);
        f.head_layout = Some(vec![2, 3]);
        f.push(0, vec![0.5; 9]);
        let back = decode_embeddings(&encode_embeddings(&f).unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, f);

        f.head_layout = None;
        assert!(encode_embeddings(&f).is_err());
        f.head_layout = Some(vec![2, 4]);
        let bytes = encode_embeddings(&f).unwrap();
        assert!(decode_embeddings(&bytes, Path::new("x")).is_err());
    }
}

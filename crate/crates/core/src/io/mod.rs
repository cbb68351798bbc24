//! On-disk formats.
//!
//! - Scenes: a JSON manifest plus a little-endian point blob (see [`scene`]).
//! - Embeddings: the `D3DE` binary interchange format (see [`embedding`]).
//! - Descriptions, tasks, predictions and prompts: JSON Lines, one record per line.
//! - Results: a single JSON document.
//!
//! All writers are deterministic: struct fields serialize in declaration
//! order, maps are sorted, floats use the shortest round-trip decimal form in
//! JSON and raw IEEE bits in binary files.

pub mod embedding;
pub mod jsonl;
pub mod scene;

pub use embedding::{read_embeddings, write_embeddings, EmbeddingFile, EmbeddingKind};
pub use jsonl::{read_json, read_jsonl, write_json, write_jsonl};
pub use scene::{read_scene, read_views, write_scene};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes only when the content differs, so re-running a stage leaves files untouched.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if std::fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

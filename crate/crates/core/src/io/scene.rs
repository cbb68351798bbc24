//! Scene manifest (JSON) plus point blob.
//!
//! The blob holds, for each object in manifest order, a `u32` point count
//! followed by that many `(x, y, z, r, g, b)` float32 tuples, little-endian.
//! The manifest records the blob's file name and SHA-256.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{identifier_for, ObjectProposal, Point, Scene, DEFAULT_PROPOSAL_CAP};
use crate::projection::CameraView;

use super::{read_bytes, write_bytes};

pub const SCENE_FORMAT: &str = "relscene-scene";
pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub index: usize,
    pub identifier: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub point_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub format: String,
    pub version: u32,
    pub scene_id: String,
    pub points_file: String,
    pub points_sha256: String,
    pub objects: Vec<ObjectEntry>,
    pub views: Vec<CameraView>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_points(scene: &Scene) -> Vec<u8> {
    let mut out = Vec::new();
    for o in scene.objects() {
        out.extend_from_slice(&(o.points().len() as u32).to_le_bytes());
        for p in o.points() {
            for v in [p.x, p.y, p.z, p.r, p.g, p.b] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn blob_path(manifest_path: &Path, points_file: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(points_file)
}

/// Writes `manifest_path` and a sibling `<stem>.bin` blob.
pub fn write_scene(manifest_path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad manifest path {}", manifest_path.display())))?;
    let points_file = format!("{stem}.bin");
    let blob = encode_points(scene);
    let manifest = SceneManifest {
        format: SCENE_FORMAT.to_string(),
        version: SCENE_VERSION,
        scene_id: scene.scene_id.clone(),
        points_sha256: sha256_hex(&blob),
        points_file: points_file.clone(),
        objects: scene
            .objects()
            .iter()
            .map(|o| ObjectEntry {
                index: o.index(),
                identifier: o.identifier().to_string(),
                label: o.label().map(str::to_string),
                point_count: o.points().len() as u32,
            })
            .collect(),
        views: scene.views.clone(),
        extra: Default::default(),
    };
    write_bytes(&blob_path(manifest_path, &points_file), &blob)?;
    super::write_json(manifest_path, &manifest)
}

pub fn read_scene(manifest_path: impl AsRef<Path>) -> Result<Scene> {
    read_scene_with_cap(manifest_path, DEFAULT_PROPOSAL_CAP)
}

pub fn read_scene_with_cap(manifest_path: impl AsRef<Path>, cap: usize) -> Result<Scene> {
    let path = manifest_path.as_ref();
    let manifest: SceneManifest = super::read_json(path)?;
    let err = |record: String, field: &str, msg: String| Error::format(path, record, field, msg);
    if manifest.format != SCENE_FORMAT {
        return Err(err("manifest".into(), "format", format!("expected {SCENE_FORMAT:?}")));
    }
    if manifest.version != SCENE_VERSION {
        return Err(err("manifest".into(), "version", format!("unsupported version {}", manifest.version)));
    }
    let blob_file = blob_path(path, &manifest.points_file);
    let blob = read_bytes(&blob_file)?;
    if sha256_hex(&blob) != manifest.points_sha256 {
        return Err(Error::format(&blob_file, "blob", "points_sha256", "checksum mismatch"));
    }

    let mut pos = 0usize;
    let mut objects = Vec::with_capacity(manifest.objects.len());
    for (i, entry) in manifest.objects.iter().enumerate() {
        let record = format!("object {i}");
        if entry.identifier != identifier_for(entry.index) {
            return Err(err(record, "identifier", format!("{} does not match index {}", entry.identifier, entry.index)));
        }
        let count_bytes = blob
            .get(pos..pos + 4)
            .ok_or_else(|| Error::format(&blob_file, &record, "point_count", "truncated blob"))?;
        let count = u32::from_le_bytes(count_bytes.try_into().unwrap());
        pos += 4;
        if count != entry.point_count {
            return Err(Error::format(
                &blob_file,
                &record,
                "point_count",
                format!("blob has {count} points, manifest says {}", entry.point_count),
            ));
        }
        let len = count as usize * 24;
        let raw = blob
            .get(pos..pos + len)
            .ok_or_else(|| Error::format(&blob_file, &record, "points", "truncated blob"))?;
        pos += len;
        let points = raw
            .chunks_exact(24)
            .map(|c| {
                let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
                Point::new(f(0), f(1), f(2), f(3), f(4), f(5))
            })
            .collect();
        let proposal = ObjectProposal::new(entry.index, points, entry.label.clone())
            .map_err(|e| err(record.clone(), "points", e.to_string()))?;
        objects.push(proposal);
    }
    if pos != blob.len() {
        return Err(Error::format(&blob_file, "trailer", "points", "bytes beyond the last object"));
    }
    for (i, v) in manifest.views.iter().enumerate() {
        v.validate().map_err(|e| err(format!("view {i}"), "views", e.to_string()))?;
    }
    Scene::with_cap(manifest.scene_id, objects, manifest.views, cap)
        .map_err(|e| err("manifest".into(), "objects", e.to_string()))
}

/// A JSON array of camera views.
pub fn read_views(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let path = path.as_ref();
    let views: Vec<CameraView> = super::read_json(path)?;
    for (i, v) in views.iter().enumerate() {
        v.validate().map_err(|e| Error::format(path, i, "view", e.to_string()))?;
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        let objs = vec![
            ObjectProposal::new(2, vec![Point::new(0.1, 0.2, 0.3, 1.0, 0.0, 0.25); 3], Some("chair".into())).unwrap(),
            ObjectProposal::new(1, vec![Point::at(-1.5, 2.0, 0.0)], None).unwrap(),
        ];
        let view = CameraView::look_at("v0", [0.0, -3.0, 1.0], [0.0; 3], [0.0, 0.0, 1.0], 200.0, 64, 48).unwrap();
        Scene::new("toy", objs, vec![view]).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let s = scene();
        write_scene(&path, &s).unwrap();
        assert!(dir.path().join("scene.bin").exists());
        assert_eq!(read_scene(&path).unwrap(), s);
    }

    #[test]
    fn checksum_and_truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        write_scene(&path, &scene()).unwrap();
        let bin = dir.path().join("scene.bin");
        let mut blob = std::fs::read(&bin).unwrap();
        blob[10] ^= 0xff;
        std::fs::write(&bin, &blob).unwrap();
        let e = read_scene(&path).unwrap_err().to_string();
        assert!(e.contains("checksum"), "{e}");

        // consistent checksum but a truncated blob
        blob.truncate(blob.len() - 8);
        std::fs::write(&bin, &blob).unwrap();
        let mut m: SceneManifest = super::super::read_json(&path).unwrap();
        m.points_sha256 = sha256_hex(&blob);
        super::super::write_json(&path, &m).unwrap();
        let e = read_scene(&path).unwrap_err().to_string();
        assert!(e.contains("truncated"), "{e}");
    }

    #[test]
    fn invariant_violations_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        write_scene(&path, &scene()).unwrap();
        let mut m: SceneManifest = super::super::read_json(&path).unwrap();
        m.objects[0].identifier = "<OBJ009>".into();
        super::super::write_json(&path, &m).unwrap();
        let e = read_scene(&path).unwrap_err();
        assert!(matches!(&e, Error::Format { field, .. } if field == "identifier"), "{e}");
    }
}

//! Scenes, object proposals, identifier tokens and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::CameraView;

/// Default number of proposals kept per scene.
pub const DEFAULT_PROPOSAL_CAP: usize = 100;
/// Largest index representable by a three-digit identifier token.
pub const MAX_OBJECT_INDEX: usize = 999;

/// Identifier token for an object index, e.g. `7` -> `<OBJ007>`.
pub fn identifier_for(index: usize) -> String {
    format!("<OBJ{index:03}>")
}

/// Inverse of [`identifier_for`]. Only the exact `<OBJnnn>` form is accepted.
pub fn parse_identifier(token: &str) -> Option<usize> {
    let digits = token.strip_prefix("<OBJ")?.strip_suffix('>')?;
    if digits.len() != 3 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Every identifier token in `text`, in order of appearance.
pub fn identifiers_in(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("<OBJ") {
        let candidate = &rest[pos..];
        if candidate.len() >= 8 {
            if let Some(idx) = candidate.get(..8).and_then(parse_identifier) {
                out.push(idx);
                rest = &candidate[8..];
                continue;
            }
        }
        rest = &candidate[4..];
    }
    out
}

/// One colored point of a proposal. Stored in single precision, matching the
/// on-disk blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub r: f32,
    pub g: f32,
    pub b: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, r: f32, g: f32, b: f32) -> Self {
        Self { x, y, z, r, g, b }
    }

    /// Grey point at the given position.
    pub fn at(x: f32, y: f32, z: f32) -> Self {
        Self::new(x, y, z, 0.5, 0.5, 0.5)
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    pub fn rgb(&self) -> [f64; 3] {
        [self.r as f64, self.g as f64, self.b as f64]
    }
}

/// A segmented object: its points, identifier token and optional category.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectProposal {
    index: usize,
    identifier: String,
    points: Vec<Point>,
    label: Option<String>,
}

impl ObjectProposal {
    pub fn new(index: usize, points: Vec<Point>, label: Option<String>) -> Result<Self> {
        if index > MAX_OBJECT_INDEX {
            return Err(Error::domain(format!(
                "object index {index} exceeds {MAX_OBJECT_INDEX}"
            )));
        }
        if points.is_empty() {
            return Err(Error::domain(format!("object {index} has no points")));
        }
        for (i, p) in points.iter().enumerate() {
            let rgb = [p.r, p.g, p.b];
            if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::domain(format!(
                    "object {index} point {i}: color {rgb:?} outside [0,1]"
                )));
            }
            if [p.x, p.y, p.z].iter().any(|c| !c.is_finite()) {
                return Err(Error::domain(format!(
                    "object {index} point {i}: non-finite coordinate"
                )));
            }
        }
        if let Some(l) = &label {
            if l.trim().is_empty() {
                return Err(Error::domain(format!("object {index} has an empty label")));
            }
        }
        Ok(Self {
            index,
            identifier: identifier_for(index),
            points,
            label,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Category name used in prompts; unlabeled objects are called "object".
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or("object")
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for (acc, v) in c.iter_mut().zip(p.xyz()) {
                *acc += v;
            }
        }
        c.map(|v| v / n)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.points).expect("proposal points are non-empty")
    }
}

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|k| !(min[k].is_finite() && max[k].is_finite()) || min[k] > max[k]) {
            return Err(Error::domain(format!(
                "invalid box: min {min:?} max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    /// Componentwise envelope of the points.
    pub fn from_points(points: &[Point]) -> Result<Self> {
        Self::from_coords(points.iter().map(Point::xyz))
    }

    pub fn from_coords(coords: impl IntoIterator<Item = [f64; 3]>) -> Result<Self> {
        let mut iter = coords.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::domain("cannot bound an empty point list"))?;
        let (mut min, mut max) = (first, first);
        for p in iter {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Self::new(min, max)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn translated(&self, by: [f64; 3]) -> Aabb {
        Aabb {
            min: [self.min[0] + by[0], self.min[1] + by[1], self.min[2] + by[2]],
            max: [self.max[0] + by[0], self.max[1] + by[1], self.max[2] + by[2]],
        }
    }

    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|k| (self.max[k].min(other.max[k]) - self.min[k].max(other.min[k])).max(0.0))
            .product()
    }

    /// Intersection over union. A zero-volume union yields 0, so degenerate
    /// predictions never count as hits.
    pub fn iou(&self, other: &Aabb) -> f64 {
        let inter = self.intersection_volume(other);
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn aabb_from_points(points: &[Point]) -> Result<Aabb> {
    Aabb::from_points(points)
}

pub fn iou_aabb(a: &Aabb, b: &Aabb) -> f64 {
    a.iou(b)
}

/// A scene: proposals sorted by index plus the camera views it was captured from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    objects: Vec<ObjectProposal>,
    pub views: Vec<CameraView>,
}

impl Scene {
    pub fn new(
        scene_id: impl Into<String>,
        objects: Vec<ObjectProposal>,
        views: Vec<CameraView>,
    ) -> Result<Self> {
        Self::with_cap(scene_id, objects, views, DEFAULT_PROPOSAL_CAP)
    }

    pub fn with_cap(
        scene_id: impl Into<String>,
        mut objects: Vec<ObjectProposal>,
        views: Vec<CameraView>,
        cap: usize,
    ) -> Result<Self> {
        let scene_id = scene_id.into();
        if objects.len() > cap {
            return Err(Error::domain(format!(
                "scene {scene_id}: {} proposals exceed the cap of {cap}",
                objects.len()
            )));
        }
        objects.sort_by_key(ObjectProposal::index);
        if let Some(w) = objects.windows(2).find(|w| w[0].index == w[1].index) {
            return Err(Error::domain(format!(
                "scene {scene_id}: duplicate identifier {}",
                w[0].identifier
            )));
        }
        for (i, v) in views.iter().enumerate() {
            if views[..i].iter().any(|o| o.view_id == v.view_id) {
                return Err(Error::domain(format!(
                    "scene {scene_id}: duplicate view id {}",
                    v.view_id
                )));
            }
        }
        Ok(Self {
            scene_id,
            objects,
            views,
        })
    }

    /// Proposals in ascending index order.
    pub fn objects(&self) -> &[ObjectProposal] {
        &self.objects
    }

    pub fn object(&self, index: usize) -> Option<&ObjectProposal> {
        self.objects
            .binary_search_by_key(&index, ObjectProposal::index)
            .ok()
            .map(|i| &self.objects[i])
    }

    pub fn view(&self, view_id: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    /// Distinct lowercased category labels, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .objects
            .iter()
            .filter_map(|o| o.label().map(str::to_lowercase))
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(min: [f64; 3], max: [f64; 3]) -> Aabb {
        Aabb::new(min, max).unwrap()
    }

    #[test]
    fn envelope_of_two_points() {
        let b = aabb_from_points(&[Point::at(0.0, 0.0, 0.0), Point::at(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(b, bx([0.0; 3], [1.0, 2.0, 3.0]));
    }

    #[test]
    fn single_point_box_is_degenerate() {
        let b = aabb_from_points(&[Point::at(5.0, 5.0, 5.0)]).unwrap();
        assert_eq!(b.min, [5.0; 3]);
        assert_eq!(b.max, [5.0; 3]);
        assert_eq!(b.volume(), 0.0);
    }

    #[test]
    fn empty_points_rejected() {
        assert!(matches!(aabb_from_points(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn iou_cases() {
        let unit = bx([0.0; 3], [1.0; 3]);
        assert_eq!(iou_aabb(&unit, &unit), 1.0);
        assert_eq!(iou_aabb(&unit, &bx([2.0; 3], [3.0; 3])), 0.0);
        let shifted = bx([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert!((iou_aabb(&unit, &shifted) - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_iou_is_zero() {
        let p = bx([1.0; 3], [1.0; 3]);
        assert_eq!(p.iou(&p), 0.0);
        let flat = bx([0.0; 3], [1.0, 1.0, 0.0]);
        assert_eq!(flat.iou(&flat), 0.0);
    }

    #[test]
    fn identifier_format() {
        assert_eq!(identifier_for(1), "<OBJ001>");
        assert_eq!(identifier_for(23), "<OBJ023>");
        assert_eq!(parse_identifier("<OBJ007>"), Some(7));
        assert_eq!(parse_identifier("<OBJ07>"), None);
        assert_eq!(parse_identifier("<obj007>"), None);
        assert_eq!(identifiers_in("a <OBJ004> b<OBJ009>, <OBJ12> <OBJ"), vec![4, 9]);
    }

    #[test]
    fn proposal_invariants() {
        assert!(ObjectProposal::new(1, vec![], None).is_err());
        assert!(ObjectProposal::new(1, vec![Point::new(0., 0., 0., 1.5, 0., 0.)], None).is_err());
        assert!(ObjectProposal::new(1000, vec![Point::at(0., 0., 0.)], None).is_err());
        let o = ObjectProposal::new(1, vec![Point::at(0., 0., 0.)], Some("chair".into())).unwrap();
        assert_eq!(o.identifier(), "<OBJ001>");
    }

    #[test]
    fn scene_rejects_duplicates_and_overflow() {
        let o = |i| ObjectProposal::new(i, vec![Point::at(0., 0., 0.)], None).unwrap();
        assert!(Scene::new("s", vec![o(1), o(1)], vec![]).is_err());
        assert!(Scene::with_cap("s", vec![o(1), o(2), o(3)], vec![], 2).is_err());
        let s = Scene::new("s", vec![o(3), o(1)], vec![]).unwrap();
        assert_eq!(s.objects()[0].index(), 1);
        assert_eq!(s.object(3).unwrap().index(), 3);
        assert!(s.object(2).is_none());
    }
}

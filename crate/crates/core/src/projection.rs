//! Pinhole projection of proposals into camera views.
//!
//! Cameras are right-handed with +z forward, +x right and +y down, so pixel
//! `u` grows with camera-space x and `v` with camera-space y.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObjectProposal, Scene};

/// Points at or closer than this depth are behind the camera.
pub const DEPTH_EPS: f64 = 1e-6;
/// Orthonormality tolerance for the rotation block of a pose.
pub const ROTATION_TOL: f64 = 1e-6;
/// Margin kept between a label anchor and the image border.
pub const LABEL_MARGIN_PX: f64 = 2.0;
/// Default z-test tolerance when a depth map is supplied.
pub const DEFAULT_DEPTH_TOLERANCE_M: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub view_id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major rigid transform taking world points into camera space.
    pub world_to_camera: [[f64; 4]; 4],
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl CameraView {
    /// Camera at `eye` looking at `target`; `up` only fixes the roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        view_id: impl Into<String>,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = normalize(sub(target, eye))
            .ok_or_else(|| Error::domain("look_at: eye and target coincide"))?;
        let right = normalize(cross(forward, up))
            .ok_or_else(|| Error::domain("look_at: up is parallel to the viewing direction"))?;
        let down = cross(forward, right);
        let rows = [right, down, forward];
        let mut m = [[0.0; 4]; 4];
        for (r, axis) in rows.iter().enumerate() {
            m[r][..3].copy_from_slice(axis);
            m[r][3] = -dot(*axis, eye);
        }
        m[3][3] = 1.0;
        let view = Self {
            view_id: view_id.into(),
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            world_to_camera: m,
            width,
            height,
            image_ref: None,
        };
        view.validate()?;
        Ok(view)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.view_id;
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::domain(format!("view {id}: focal lengths must be positive")));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::domain(format!("view {id}: empty image size")));
        }
        let m = &self.world_to_camera;
        if m.iter().flatten().any(|v| !v.is_finite()) || ![self.cx, self.cy].iter().all(|v| v.is_finite()) {
            return Err(Error::domain(format!("view {id}: non-finite camera parameter")));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::domain(format!("view {id}: last pose row must be [0,0,0,1]")));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (d - expected).abs() > ROTATION_TOL {
                    return Err(Error::domain(format!(
                        "view {id}: rotation block is not orthonormal"
                    )));
                }
            }
        }
        let r = |i: usize| [m[i][0], m[i][1], m[i][2]];
        if dot(cross(r(0), r(1)), r(2)) < 0.0 {
            return Err(Error::domain(format!("view {id}: rotation is a reflection")));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.world_to_camera;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
        }
        out
    }

    /// Central region `[u0, u1] x [v0, v1]` covering `fraction` of each axis.
    pub fn central_region(&self, fraction: f64) -> [f64; 4] {
        let (w, h) = (self.width as f64, self.height as f64);
        let lo = (1.0 - fraction) / 2.0;
        let hi = (1.0 + fraction) / 2.0;
        [lo * w, lo * h, hi * w, hi * h]
    }
}

/// Pixel position and depth of a visible point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a world point; `None` when behind the camera or outside the image.
pub fn project_point(view: &CameraView, p: [f64; 3]) -> Option<PixelHit> {
    let [x, y, z] = view.to_camera(p);
    if z <= DEPTH_EPS {
        return None;
    }
    let u = view.fx * x / z + view.cx;
    let v = view.fy * y / z + view.cy;
    let inside = (0.0..view.width as f64).contains(&u) && (0.0..view.height as f64).contains(&v);
    inside.then_some(PixelHit { u, v, depth: z })
}

/// Per-pixel depth image aligned with a view, row-major, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, depths: Vec<f32>) -> Result<Self> {
        if depths.len() != width as usize * height as usize {
            return Err(Error::domain("depth map size does not match its dimensions"));
        }
        Ok(Self { width, height, depths })
    }

    pub fn at(&self, u: f64, v: f64) -> Option<f64> {
        let (col, row) = (u.floor() as i64, v.floor() as i64);
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return None;
        }
        let d = self.depths[row as usize * self.width as usize + col as usize];
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }
}

/// Optional occlusion handling during projection.
#[derive(Debug, Clone, Copy, Default)]
pub enum Occlusion<'a> {
    #[default]
    None,
    /// A point is hidden when it lies more than `tolerance` behind the depth map.
    DepthTest { map: &'a DepthMap, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub object_index: usize,
    pub visible_point_count: usize,
    pub visible_fraction: f64,
    pub center_px: Option<[f64; 2]>,
    /// `[u_min, v_min, u_max, v_max]` of the visible points.
    pub bbox2d: Option<[f64; 4]>,
    pub mean_depth: Option<f64>,
}

impl ProjectionResult {
    pub fn is_visible(&self) -> bool {
        self.visible_point_count > 0
    }
}

pub fn project_object(view: &CameraView, proposal: &ObjectProposal) -> ProjectionResult {
    project_object_with(view, proposal, Occlusion::None)
}

pub fn project_object_with(
    view: &CameraView,
    proposal: &ObjectProposal,
    occlusion: Occlusion<'_>,
) -> ProjectionResult {
    let mut count = 0usize;
    let (mut su, mut sv, mut sd) = (0.0, 0.0, 0.0);
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in proposal.points() {
        let Some(hit) = project_point(view, p.xyz()) else {
            continue;
        };
        if let Occlusion::DepthTest { map, tolerance } = occlusion {
            if let Some(surface) = map.at(hit.u, hit.v) {
                if hit.depth > surface + tolerance {
                    continue;
                }
            }
        }
        count += 1;
        su += hit.u;
        sv += hit.v;
        sd += hit.depth;
        bbox = [bbox[0].min(hit.u), bbox[1].min(hit.v), bbox[2].max(hit.u), bbox[3].max(hit.v)];
    }
    let total = proposal.points().len();
    let n = count as f64;
    ProjectionResult {
        object_index: proposal.index(),
        visible_point_count: count,
        visible_fraction: n / total as f64,
        center_px: (count > 0).then(|| [su / n, sv / n]),
        bbox2d: (count > 0).then_some(bbox),
        mean_depth: (count > 0).then(|| sd / n),
    }
}

/// All projections of one view, in ascending object order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProjections {
    pub view_id: String,
    pub results: Vec<ProjectionResult>,
}

impl ViewProjections {
    pub fn result(&self, object_index: usize) -> Option<&ProjectionResult> {
        self.results.iter().find(|r| r.object_index == object_index)
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        self.results
            .iter()
            .filter(|r| r.is_visible())
            .map(|r| r.object_index)
            .collect()
    }
}

/// Projects every object into every view. Views run on separate threads; the
/// output is in scene view order regardless of scheduling.
pub fn project_scene(scene: &Scene) -> Vec<ViewProjections> {
    std::thread::scope(|s| {
        let handles: Vec<_> = scene
            .views
            .iter()
            .map(|view| {
                s.spawn(move || ViewProjections {
                    view_id: view.view_id.clone(),
                    results: scene.objects().iter().map(|o| project_object(view, o)).collect(),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("projection thread panicked"))
            .collect()
    })
}

/// Which projected objects may anchor a description in a view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyObjectPolicy {
    /// Fraction of width and height covered by the centered region.
    pub central_fraction: f64,
    pub min_visible: usize,
}

impl Default for KeyObjectPolicy {
    fn default() -> Self {
        Self {
            central_fraction: 0.5,
            min_visible: 50,
        }
    }
}

/// Objects whose projected center falls in the central region with enough
/// visible support, largest support first, ties by ascending index.
pub fn select_key_objects(
    view: &CameraView,
    results: &[ProjectionResult],
    policy: &KeyObjectPolicy,
) -> Vec<usize> {
    let [u0, v0, u1, v1] = view.central_region(policy.central_fraction);
    let mut keys: Vec<&ProjectionResult> = results
        .iter()
        .filter(|r| r.is_visible() && r.visible_point_count >= policy.min_visible)
        .filter(|r| {
            r.center_px
                .is_some_and(|[u, v]| (u0..=u1).contains(&u) && (v0..=v1).contains(&v))
        })
        .collect();
    keys.sort_by(|a, b| {
        b.visible_point_count
            .cmp(&a.visible_point_count)
            .then(a.object_index.cmp(&b.object_index))
    });
    keys.into_iter().map(|r| r.object_index).collect()
}

/// Where to draw an object's name: its projected center pulled inside the image border.
pub fn label_anchor(view: &CameraView, result: &ProjectionResult) -> Result<[f64; 2]> {
    let [u, v] = result.center_px.ok_or_else(|| {
        Error::domain(format!(
            "object {} is not visible in view {}",
            result.object_index, view.view_id
        ))
    })?;
    let clamp = |x: f64, extent: u32| {
        let hi = (extent as f64 - LABEL_MARGIN_PX).max(LABEL_MARGIN_PX);
        x.max(LABEL_MARGIN_PX).min(hi)
    };
    Ok([clamp(u, view.width), clamp(v, view.height)])
}

/// Size-weighted mean of per-view embeddings: `sum(w_i * e_i) / sum(w_i)`.
pub fn aggregate_view_features(per_view: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let dim = per_view
        .first()
        .map(|(e, _)| e.len())
        .ok_or_else(|| Error::domain("no per-view features to aggregate"))?;
    let mut total = 0.0;
    let mut acc = vec![0.0; dim];
    for (i, (e, w)) in per_view.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::domain(format!(
                "view feature {i} has dimension {}, expected {dim}",
                e.len()
            )));
        }
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::domain(format!("view weight {i} is {w}")));
        }
        total += w;
        for (a, x) in acc.iter_mut().zip(e) {
            *a += w * x;
        }
    }
    if total <= 0.0 {
        return Err(Error::domain("all view weights are zero"));
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(a, a).sqrt();
    (n > 1e-12).then(|| a.map(|x| x / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;

    const IDENTITY: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];

    fn camera() -> CameraView {
        CameraView {
            view_id: "v".into(),
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            world_to_camera: IDENTITY,
            width: 100,
            height: 100,
            image_ref: None,
        }
    }

    fn result(index: usize, count: usize, center: [f64; 2]) -> ProjectionResult {
        ProjectionResult {
            object_index: index,
            visible_point_count: count,
            visible_fraction: 1.0,
            center_px: Some(center),
            bbox2d: Some([center[0], center[1], center[0], center[1]]),
            mean_depth: Some(1.0),
        }
    }

    #[test]
    fn principal_axis_maps_to_principal_point() {
        let hit = project_point(&camera(), [0.0, 0.0, 1.0]).unwrap();
        assert_eq!((hit.u, hit.v, hit.depth), (50.0, 50.0, 1.0));
    }

    #[test]
    fn behind_camera_is_invisible() {
        assert!(project_point(&camera(), [0.0, 0.0, -1.0]).is_none());
        assert!(project_point(&camera(), [0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn offset_point() {
        let hit = project_point(&camera(), [0.1, 0.0, 1.0]).unwrap();
        assert!((hit.u - 60.0).abs() < 1e-12);
        assert_eq!(hit.v, 50.0);
    }

    #[test]
    fn outside_image_is_invisible() {
        // u = 100 * 0.5 + 50 = 100, just past the last column
        assert!(project_point(&camera(), [0.5, 0.0, 1.0]).is_none());
    }

    #[test]
    fn invalid_views_rejected() {
        let mut v = camera();
        v.fx = 0.0;
        assert!(v.validate().is_err());
        let mut v = camera();
        v.world_to_camera[0][0] = 2.0;
        assert!(v.validate().is_err());
        let mut v = camera();
        v.world_to_camera[2][2] = -1.0;
        assert!(v.validate().is_err(), "reflection accepted");
        assert!(camera().validate().is_ok());
    }

    #[test]
    fn look_at_centers_target() {
        let v = CameraView::look_at("v", [0.0, -3.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], 300.0, 640, 480)
            .unwrap();
        let hit = project_point(&v, [0.0, 0.0, 1.0]).unwrap();
        assert!((hit.u - 320.0).abs() < 1e-9 && (hit.v - 240.0).abs() < 1e-9);
        assert!((hit.depth - 3.0).abs() < 1e-12);
        // world +x is image right, world +z is image up
        assert!(project_point(&v, [0.5, 0.0, 1.0]).unwrap().u > 320.0);
        assert!(project_point(&v, [0.0, 0.0, 1.5]).unwrap().v < 240.0);
    }

    #[test]
    fn project_object_aggregates_visible_points() {
        let o = ObjectProposal::new(
            3,
            vec![Point::at(0.0, 0.0, 1.0), Point::at(0.1, 0.1, 1.0), Point::at(0.0, 0.0, -1.0)],
            None,
        )
        .unwrap();
        let r = project_object(&camera(), &o);
        assert_eq!(r.visible_point_count, 2);
        assert!((r.visible_fraction - 2.0 / 3.0).abs() < 1e-12);
        let [u, v] = r.center_px.unwrap();
        // points are stored as f32
        assert!((u - 55.0).abs() < 1e-5 && (v - 55.0).abs() < 1e-5);
        assert_eq!(r.bbox2d.unwrap()[0], 50.0);
        assert_eq!(r.mean_depth, Some(1.0));

        let hidden = ObjectProposal::new(4, vec![Point::at(0.0, 0.0, -2.0)], None).unwrap();
        let r = project_object(&camera(), &hidden);
        assert!(!r.is_visible());
        assert!(r.center_px.is_none() && r.bbox2d.is_none() && r.mean_depth.is_none());
    }

    #[test]
    fn depth_test_hides_occluded_points() {
        let map = DepthMap::new(100, 100, vec![1.0; 100 * 100]).unwrap();
        let o = ObjectProposal::new(
            1,
            vec![Point::at(0.0, 0.0, 1.03), Point::at(0.0, 0.0, 2.0)],
            None,
        )
        .unwrap();
        let occ = Occlusion::DepthTest { map: &map, tolerance: DEFAULT_DEPTH_TOLERANCE_M };
        assert_eq!(project_object_with(&camera(), &o, occ).visible_point_count, 1);
        assert_eq!(project_object(&camera(), &o).visible_point_count, 2);
    }

    #[test]
    fn key_selection() {
        let view = camera();
        let policy = KeyObjectPolicy::default();
        let results = vec![
            result(1, 200, [50.0, 50.0]),
            result(2, 300, [40.0, 60.0]),
            result(3, 500, [10.0, 50.0]), // at the edge
            result(4, 10, [50.0, 50.0]),  // too small
            result(5, 200, [60.0, 45.0]),
        ];
        assert_eq!(select_key_objects(&view, &results, &policy), vec![2, 1, 5]);
    }

    #[test]
    fn label_anchor_clamps() {
        let view = camera();
        assert_eq!(label_anchor(&view, &result(1, 1, [0.5, 99.9])).unwrap(), [2.0, 98.0]);
        assert_eq!(label_anchor(&view, &result(1, 1, [30.0, 40.0])).unwrap(), [30.0, 40.0]);
        let mut r = result(1, 0, [0.0, 0.0]);
        r.center_px = None;
        assert!(label_anchor(&view, &r).is_err());
    }

    #[test]
    fn aggregation_cases() {
        let e = vec![0.25, -1.0];
        assert_eq!(aggregate_view_features(&[(e.clone(), 5.0)]).unwrap(), e);
        let mean = aggregate_view_features(&[(vec![1.0, 0.0], 2.0), (vec![0.0, 1.0], 2.0)]).unwrap();
        assert_eq!(mean, vec![0.5, 0.5]);
        let w = aggregate_view_features(&[(vec![4.0, 0.0], 1.0), (vec![0.0, 4.0], 3.0)]).unwrap();
        assert!((w[0] - 1.0).abs() <= 1e-12 && (w[1] - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn aggregation_errors() {
        assert!(aggregate_view_features(&[]).is_err());
        assert!(aggregate_view_features(&[(vec![1.0], 0.0), (vec![2.0], 0.0)]).is_err());
        assert!(aggregate_view_features(&[(vec![1.0], 1.0), (vec![2.0, 3.0], 1.0)]).is_err());
        assert!(aggregate_view_features(&[(vec![1.0], -1.0)]).is_err());
    }
}

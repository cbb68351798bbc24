//! Relational description generation.
//!
//! Views are visited in scene order. In each view the key objects (see
//! [`select_key_objects`]) that have not been described yet get one request
//! listing every object visible in that view, so each object is described at
//! most once per scene.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scene;
use crate::projection::{label_anchor, select_key_objects, CameraView, KeyObjectPolicy, ViewProjections};

/// Centroids closer than this are "near".
pub const NEAR_DISTANCE_M: f64 = 1.0;
/// Camera-space x separation for "to the left of" / "to the right of".
pub const LATERAL_OFFSET_M: f64 = 0.2;
/// World z separation for "above" / "below".
pub const VERTICAL_OFFSET_M: f64 = 0.3;

/// Name overlaid on the image at an object's projected center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub object_index: usize,
    pub anchor: [f64; 2],
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub view_id: String,
    pub key_object_index: usize,
    pub visible_object_indices: Vec<usize>,
    pub prompt_text: String,
    pub annotations: Vec<Annotation>,
}

impl VlmRequest {
    pub fn display_name(&self, object_index: usize) -> Option<&str> {
        self.annotations
            .iter()
            .find(|a| a.object_index == object_index)
            .map(|a| a.display_name.as_str())
    }

    /// Display name -> object index for every annotated object.
    pub fn name_map(&self) -> BTreeMap<String, usize> {
        self.annotations
            .iter()
            .map(|a| (a.display_name.clone(), a.object_index))
            .collect()
    }

    /// Annotation overlay as plain text, for backends that cannot draw on the image.
    pub fn annotation_text(&self) -> String {
        let labels: Vec<String> = self
            .annotations
            .iter()
            .map(|a| format!("{} at ({:.1}, {:.1})", a.display_name, a.anchor[0], a.anchor[1]))
            .collect();
        format!("Object labels in the image: {}.", labels.join("; "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionStatus {
    Generated,
    Fallback,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub object_index: usize,
    pub text: String,
    pub source_view: Option<String>,
    pub status: DescriptionStatus,
    /// Display names used when the text was generated, for identifier substitution.
    #[serde(default)]
    pub names: BTreeMap<String, usize>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DescriptionRecord {
    pub fn missing(object_index: usize) -> Self {
        Self {
            object_index,
            text: String::new(),
            source_view: None,
            status: DescriptionStatus::Missing,
            names: BTreeMap::new(),
            extra: Default::default(),
        }
    }

    pub fn is_missing(&self) -> bool {
        self.status == DescriptionStatus::Missing
    }
}

/// One record per object index.
pub type DescriptionSet = BTreeMap<usize, DescriptionRecord>;

/// Something that turns a request into a relational description.
pub trait DescriptionBackend: Sync {
    fn describe(&self, request: &VlmRequest) -> Result<String>;
}

impl<T: DescriptionBackend + ?Sized> DescriptionBackend for &T {
    fn describe(&self, request: &VlmRequest) -> Result<String> {
        (**self).describe(request)
    }
}

/// The describer prompt with the key and other object names filled in.
pub fn build_vlm_prompt(key_name: &str, other_names: &[String]) -> String {
    let mut prompt = format!(
        "Describe clearly and briefly the relationships between the {key_name} in the scene and nearby objects"
    );
    if !other_names.is_empty() {
        prompt.push_str(&format!(" ({})", other_names.join(", ")));
    }
    prompt.push_str(". Do not describe objects you cannot see.");
    prompt
}

/// Labels of `indices` with repeated categories numbered in index order
/// ("chair 1", "chair 2").
pub fn display_names(scene: &Scene, indices: &[usize]) -> BTreeMap<usize, String> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &sorted {
        if let Some(o) = scene.object(i) {
            *totals.entry(o.display_label()).or_default() += 1;
        }
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for &i in &sorted {
        let Some(o) = scene.object(i) else { continue };
        let label = o.display_label();
        let name = if totals[label] > 1 {
            let n = seen.entry(label).or_default();
            *n += 1;
            format!("{label} {n}")
        } else {
            label.to_string()
        };
        out.insert(i, name);
    }
    out
}

fn make_request(
    scene: &Scene,
    view: &CameraView,
    projections: &ViewProjections,
    key: usize,
) -> Result<VlmRequest> {
    let visible = projections.visible_indices();
    if !visible.contains(&key) {
        return Err(Error::domain(format!(
            "key object {key} is not visible in view {}",
            view.view_id
        )));
    }
    let names = display_names(scene, &visible);
    let mut annotations = Vec::with_capacity(visible.len());
    for &i in &visible {
        let result = projections.result(i).expect("visible index has a projection");
        annotations.push(Annotation {
            object_index: i,
            anchor: label_anchor(view, result)?,
            display_name: names[&i].clone(),
        });
    }
    let others: Vec<String> = visible
        .iter()
        .filter(|&&i| i != key)
        .map(|i| names[i].clone())
        .collect();
    Ok(VlmRequest {
        view_id: view.view_id.clone(),
        key_object_index: key,
        visible_object_indices: visible,
        prompt_text: build_vlm_prompt(&names[&key], &others),
        annotations,
    })
}

fn projections_for<'a>(
    projections: &'a [ViewProjections],
    view: &CameraView,
) -> Result<&'a ViewProjections> {
    projections
        .iter()
        .find(|p| p.view_id == view.view_id)
        .ok_or_else(|| Error::domain(format!("no projections for view {}", view.view_id)))
}

/// Requests in view order; an object already covered by an earlier request is skipped.
pub fn plan_description_requests(
    scene: &Scene,
    projections: &[ViewProjections],
    policy: &KeyObjectPolicy,
) -> Result<Vec<VlmRequest>> {
    let mut covered = BTreeSet::new();
    let mut plan = Vec::new();
    for view in &scene.views {
        let vp = projections_for(projections, view)?;
        for key in select_key_objects(view, &vp.results, policy) {
            if covered.insert(key) {
                plan.push(make_request(scene, view, vp, key)?);
            }
        }
    }
    Ok(plan)
}

/// Requests for objects that never anchor a planned request, each issued from
/// the view where the object has the most visible points (earliest view on ties).
/// Objects visible in no view get no request.
pub fn plan_fallback_requests(
    scene: &Scene,
    projections: &[ViewProjections],
    plan: &[VlmRequest],
) -> Result<Vec<VlmRequest>> {
    let covered: BTreeSet<usize> = plan.iter().map(|r| r.key_object_index).collect();
    let mut out = Vec::new();
    for object in scene.objects() {
        if covered.contains(&object.index()) {
            continue;
        }
        let mut best: Option<(&CameraView, &ViewProjections, usize)> = None;
        for view in &scene.views {
            let vp = projections_for(projections, view)?;
            let count = vp.result(object.index()).map_or(0, |r| r.visible_point_count);
            if count > 0 && best.is_none_or(|(_, _, c)| count > c) {
                best = Some((view, vp, count));
            }
        }
        if let Some((view, vp, _)) = best {
            out.push(make_request(scene, view, vp, object.index())?);
        }
    }
    Ok(out)
}

/// Calls the backend for every request with at most `parallelism` calls in
/// flight. Results come back in plan order.
pub fn execute_requests<B: DescriptionBackend + ?Sized>(
    plan: &[VlmRequest],
    backend: &B,
    parallelism: usize,
) -> Vec<Result<String>> {
    let workers = parallelism.max(1).min(plan.len());
    if workers <= 1 {
        return plan.iter().map(|r| backend.describe(r)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<String>>>> = Mutex::new((0..plan.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(request) = plan.get(i) else { break };
                let outcome = backend.describe(request);
                slots.lock().expect("result slots poisoned")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every request executed"))
        .collect()
}

fn commit(
    records: &mut DescriptionSet,
    plan: &[VlmRequest],
    outcomes: Vec<Result<String>>,
    status: DescriptionStatus,
) {
    for (request, outcome) in plan.iter().zip(outcomes) {
        let key = request.key_object_index;
        if records.get(&key).is_some_and(|r| !r.is_missing()) {
            continue;
        }
        let record = match outcome {
            Ok(text) if !text.trim().is_empty() => DescriptionRecord {
                object_index: key,
                text: text.trim().to_string(),
                source_view: Some(request.view_id.clone()),
                status,
                names: request.name_map(),
                extra: Default::default(),
            },
            Ok(_) => {
                log::warn!("object {key}: backend returned an empty description");
                DescriptionRecord::missing(key)
            }
            Err(e) => {
                log::warn!("object {key}: description failed: {e}");
                DescriptionRecord::missing(key)
            }
        };
        records.insert(key, record);
    }
}

/// Runs a plan. Failed requests become `Missing` records; nothing aborts the scene.
pub fn run_descriptions<B: DescriptionBackend + ?Sized>(
    plan: &[VlmRequest],
    backend: &B,
    parallelism: usize,
) -> DescriptionSet {
    let mut records = DescriptionSet::new();
    commit(&mut records, plan, execute_requests(plan, backend, parallelism), DescriptionStatus::Generated);
    records
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptionPolicy {
    pub key: KeyObjectPolicy,
    /// Describe never-central objects from their best view.
    pub fallback: bool,
}

impl Default for DescriptionPolicy {
    fn default() -> Self {
        Self {
            key: KeyObjectPolicy::default(),
            fallback: true,
        }
    }
}

/// Plans, runs, applies the fallback policy and fills in `Missing` records so
/// the result has exactly one entry per scene object.
pub fn describe_scene<B: DescriptionBackend + ?Sized>(
    scene: &Scene,
    projections: &[ViewProjections],
    policy: &DescriptionPolicy,
    backend: &B,
    parallelism: usize,
) -> Result<DescriptionSet> {
    let plan = plan_description_requests(scene, projections, &policy.key)?;
    let mut records = run_descriptions(&plan, backend, parallelism);
    if policy.fallback {
        let extra = plan_fallback_requests(scene, projections, &plan)?;
        let outcomes = execute_requests(&extra, backend, parallelism);
        commit(&mut records, &extra, outcomes, DescriptionStatus::Fallback);
    }
    for o in scene.objects() {
        records
            .entry(o.index())
            .or_insert_with(|| DescriptionRecord::missing(o.index()));
    }
    Ok(records)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub generated: Vec<usize>,
    pub fallback: Vec<usize>,
    pub missing: Vec<usize>,
}

pub fn coverage_report(scene: &Scene, records: &DescriptionSet) -> CoverageReport {
    let mut report = CoverageReport::default();
    for o in scene.objects() {
        let bucket = match records.get(&o.index()).map(|r| r.status) {
            Some(DescriptionStatus::Generated) => &mut report.generated,
            Some(DescriptionStatus::Fallback) => &mut report.fallback,
            Some(DescriptionStatus::Missing) | None => &mut report.missing,
        };
        bucket.push(o.index());
    }
    report
}

/// Deterministic geometric stand-in for the vision-language describer.
///
/// Relations are read off centroids: "near" by distance, left/right by
/// camera-space x, above/below by world z. Only annotated names are used.
pub fn mock_describe(request: &VlmRequest, scene: &Scene, view: &CameraView) -> Result<String> {
    let key = scene
        .object(request.key_object_index)
        .ok_or_else(|| Error::domain(format!("unknown key object {}", request.key_object_index)))?;
    let key_name = request
        .display_name(key.index())
        .ok_or_else(|| Error::domain("key object has no annotation"))?;
    let key_world = key.centroid();
    let key_cam = view.to_camera(key_world);

    let mut text = format!("There is a {key_name} in the room.");
    let mut others = request.visible_object_indices.clone();
    others.sort_unstable();
    for idx in others.into_iter().filter(|&i| i != key.index()) {
        let (Some(other), Some(name)) = (scene.object(idx), request.display_name(idx)) else {
            continue;
        };
        let world = other.centroid();
        let cam = view.to_camera(world);
        let dist = (0..3).map(|k| (world[k] - key_world[k]).powi(2)).sum::<f64>().sqrt();
        let dx = key_cam[0] - cam[0];
        let dz = key_world[2] - world[2];

        let mut predicates = Vec::new();
        if dist < NEAR_DISTANCE_M {
            predicates.push("near");
        }
        if dx < -LATERAL_OFFSET_M {
            predicates.push("to the left of");
        } else if dx > LATERAL_OFFSET_M {
            predicates.push("to the right of");
        }
        if dz > VERTICAL_OFFSET_M {
            predicates.push("above");
        } else if dz < -VERTICAL_OFFSET_M {
            predicates.push("below");
        }
        for p in predicates {
            text.push_str(&format!(" The {key_name} is {p} the {name}."));
        }
    }
    Ok(text)
}

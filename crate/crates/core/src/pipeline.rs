//! The stages chained together. Each stage reads and writes files under the
//! run's output directory:
//!
//! | stage      | writes |
//! |------------|--------|
//! | `ingest`   | `scene.json`, `scene.bin`, `tasks.jsonl` (toy only) |
//! | `project`  | `projections.json` |
//! | `describe` | `descriptions.jsonl`, `coverage.json` |
//! | `encode`   | `emb_point.d3de`, `emb_visual.d3de`, `emb_text.d3de` |
//! | `fuse`     | `head_point.d3de`, `head_visual.d3de`, `head_text.d3de`, `tokens.d3de` |
//! | `prompt`   | `prompts.jsonl` |
//! | `answer`   | `predictions.jsonl` |
//! | `eval`     | `results.json` |
//!
//! Outputs depend only on the inputs and the seed, and files are rewritten
//! only when their bytes change.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{answer_all, BackendConfig, ChatClient, HttpVlm, MockLlm, MockVlm, Responder};
use crate::config::{BackendKind, RunConfig};
use crate::describe::{coverage_report, describe_scene, DescriptionBackend, DescriptionSet};
use crate::error::{Error, Result};
use crate::fusion::{
    build_object_block, serialize_scene_tokens, HeadSet, IdentifierTable, ObjectTokenBlock, ProjectionHead, SceneTokens,
};
use crate::io::{self, EmbeddingFile, EmbeddingKind};
use crate::metrics::{evaluate, EvalReport, Prediction, TaskInstance, TaskKind};
use crate::model::{identifiers_in, ObjectProposal, Scene};
use crate::projection::{aggregate_view_features, project_scene, CameraView, ProjectionResult, ViewProjections};
use crate::prompt::{assemble_prompt, IntegrationFlags, PromptBundle, ReferenceStyle};
use crate::text_encoding::{encode_descriptions, load_precomputed, to_f32, to_f64, MockTextEncoder};
use crate::toy;

/// File locations inside an output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub out: PathBuf,
}

impl RunPaths {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn scene(&self) -> PathBuf {
        self.file("scene.json")
    }
    pub fn tasks(&self) -> PathBuf {
        self.file("tasks.jsonl")
    }
    pub fn projections(&self) -> PathBuf {
        self.file("projections.json")
    }
    pub fn descriptions(&self) -> PathBuf {
        self.file("descriptions.jsonl")
    }
    pub fn coverage(&self) -> PathBuf {
        self.file("coverage.json")
    }
    pub fn embeddings(&self, kind: EmbeddingKind) -> PathBuf {
        self.file(match kind {
            EmbeddingKind::Point3D => "emb_point.d3de",
            EmbeddingKind::Visual2D => "emb_visual.d3de",
            EmbeddingKind::Text => "emb_text.d3de",
            EmbeddingKind::HeadWeights => "head_weights.d3de",
            EmbeddingKind::FusedTokens => "tokens.d3de",
        })
    }
    pub fn head(&self, modality: &str) -> PathBuf {
        self.file(&format!("head_{modality}.d3de"))
    }
    pub fn tokens(&self) -> PathBuf {
        self.embeddings(EmbeddingKind::FusedTokens)
    }
    pub fn prompts(&self) -> PathBuf {
        self.file("prompts.jsonl")
    }
    pub fn predictions(&self) -> PathBuf {
        self.file("predictions.jsonl")
    }
    pub fn results(&self) -> PathBuf {
        self.file("results.json")
    }
}

fn paths(cfg: &RunConfig) -> RunPaths {
    RunPaths::new(&cfg.out)
}

fn or_default(explicit: &Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    explicit.clone().unwrap_or(fallback)
}

/// Scene from `cfg.scene` (else the ingested one), with views replaced by
/// `cfg.views` when given.
pub fn load_scene(cfg: &RunConfig) -> Result<Scene> {
    let scene = io::read_scene(or_default(&cfg.scene, paths(cfg).scene()))?;
    match &cfg.views {
        Some(v) => {
            let views = io::read_views(v)?;
            Scene::new(scene.scene_id.clone(), scene.objects().to_vec(), views)
        }
        None => Ok(scene),
    }
}

pub fn load_tasks(cfg: &RunConfig) -> Result<Vec<TaskInstance>> {
    let path = or_default(&cfg.tasks, paths(cfg).tasks());
    let tasks: Vec<TaskInstance> = io::read_jsonl(&path)?;
    let mut ids = BTreeSet::new();
    for (i, t) in tasks.iter().enumerate() {
        t.validate()
            .map_err(|e| Error::format(&path, format!("line {}", i + 1), "task", e.to_string()))?;
        if !ids.insert(t.task_id.as_str()) {
            return Err(Error::format(&path, format!("line {}", i + 1), "task_id", "duplicate task id"));
        }
    }
    Ok(tasks)
}

/// Copies the scene (or the toy scene) into the output directory.
pub fn ingest(cfg: &RunConfig, use_toy: bool) -> Result<Scene> {
    let p = paths(cfg);
    let scene = if use_toy {
        let scene = toy::toy_scene();
        io::write_jsonl(p.tasks(), &toy::toy_tasks(&scene))?;
        scene
    } else {
        let src = cfg
            .scene
            .as_ref()
            .ok_or_else(|| Error::Config("ingest needs --scene or --toy".into()))?;
        io::read_scene(src)?
    };
    let scene = match &cfg.views {
        Some(v) => Scene::new(scene.scene_id.clone(), scene.objects().to_vec(), io::read_views(v)?)?,
        None => scene,
    };
    for v in &scene.views {
        v.validate()?;
    }
    io::write_scene(p.scene(), &scene)?;
    if !use_toy {
        if let Some(t) = &cfg.tasks {
            let tasks = load_tasks(&RunConfig { tasks: Some(t.clone()), ..cfg.clone() })?;
            io::write_jsonl(p.tasks(), &tasks)?;
        }
    }
    Ok(scene)
}

pub fn project(cfg: &RunConfig) -> Result<Vec<ViewProjections>> {
    let scene = load_scene(cfg)?;
    let projections = project_scene(&scene);
    io::write_json(paths(cfg).projections(), &projections)?;
    Ok(projections)
}

fn load_projections(cfg: &RunConfig, scene: &Scene) -> Result<Vec<ViewProjections>> {
    let path = paths(cfg).projections();
    if path.exists() {
        io::read_json(path)
    } else {
        Ok(project_scene(scene))
    }
}

fn backend_config(cfg: &RunConfig) -> Result<BackendConfig> {
    let path = cfg
        .backend_config
        .as_ref()
        .ok_or_else(|| Error::Config("the http backend needs a backend config file".into()))?;
    BackendConfig::from_file(path)
}

pub fn describe(cfg: &RunConfig) -> Result<DescriptionSet> {
    let scene = load_scene(cfg)?;
    let projections = load_projections(cfg, &scene)?;
    let records = match cfg.backend {
        BackendKind::Mock => run_describe(&scene, &projections, cfg, &MockVlm { scene: &scene })?,
        BackendKind::Http => {
            let client = ChatClient::new(backend_config(cfg)?)?;
            let parallelism = cfg.parallelism.min(client.config().request_parallelism);
            let backend = HttpVlm { client, scene: &scene };
            run_describe(&scene, &projections, &RunConfig { parallelism, ..cfg.clone() }, &backend)?
        }
    };
    let p = paths(cfg);
    io::write_jsonl(p.descriptions(), &records.values().cloned().collect::<Vec<_>>())?;
    io::write_json(p.coverage(), &coverage_report(&scene, &records))?;
    Ok(records)
}

fn run_describe<B: DescriptionBackend>(
    scene: &Scene,
    projections: &[ViewProjections],
    cfg: &RunConfig,
    backend: &B,
) -> Result<DescriptionSet> {
    describe_scene(scene, projections, &cfg.description, backend, cfg.parallelism)
}

pub fn load_descriptions(cfg: &RunConfig) -> Result<DescriptionSet> {
    let path = or_default(&cfg.descriptions, paths(cfg).descriptions());
    let records: Vec<crate::describe::DescriptionRecord> = io::read_jsonl(&path)?;
    let mut set = DescriptionSet::new();
    for (i, r) in records.into_iter().enumerate() {
        let idx = r.object_index;
        if set.insert(idx, r).is_some() {
            return Err(Error::format(&path, format!("line {}", i + 1), "object_index", "duplicate object"));
        }
    }
    Ok(set)
}

/// Fixed random map from a summary vector to `dim` features in (-1, 1).
fn mock_features(stats: &[f64], dim: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..dim)
        .map(|_| {
            let s: f64 = stats.iter().map(|x| x * rng.random_range(-1.0..1.0)).sum();
            s.tanh()
        })
        .collect()
}

const POINT_STREAM: u64 = 1;
const VISUAL_STREAM: u64 = 2;

fn mean_rgb(o: &ObjectProposal) -> [f64; 3] {
    let n = o.points().len() as f64;
    let mut rgb = [0.0; 3];
    for p in o.points() {
        for (acc, c) in rgb.iter_mut().zip(p.rgb()) {
            *acc += c / n;
        }
    }
    rgb
}

/// Stand-in 3D encoder: box geometry, mean color and point count.
pub fn mock_point_features(o: &ObjectProposal, dim: usize, seed: u64) -> Vec<f64> {
    let b = o.aabb();
    let c = o.centroid();
    let rgb = mean_rgb(o);
    let stats = [
        c[0],
        c[1],
        c[2],
        b.max[0] - b.min[0],
        b.max[1] - b.min[1],
        b.max[2] - b.min[2],
        rgb[0],
        rgb[1],
        rgb[2],
        (o.points().len() as f64).ln(),
    ];
    mock_features(&stats, dim, seed, POINT_STREAM)
}

/// Stand-in 2D encoder for one view: where and how large the object appears.
pub fn mock_view_features(
    o: &ObjectProposal,
    view: &CameraView,
    r: &ProjectionResult,
    dim: usize,
    seed: u64,
) -> Option<Vec<f64>> {
    let [u, v] = r.center_px?;
    let bb = r.bbox2d?;
    let (w, h) = (view.width as f64, view.height as f64);
    let rgb = mean_rgb(o);
    let stats = [
        u / w,
        v / h,
        (bb[2] - bb[0]) / w,
        (bb[3] - bb[1]) / h,
        r.visible_fraction,
        r.mean_depth?,
        rgb[0],
        rgb[1],
        rgb[2],
        1.0,
    ];
    Some(mock_features(&stats, dim, seed, VISUAL_STREAM))
}

/// Per-view visual features averaged with visible point counts as weights.
pub fn mock_visual_features(
    scene: &Scene,
    projections: &[ViewProjections],
    o: &ObjectProposal,
    dim: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let mut per_view = Vec::new();
    for vp in projections {
        let Some(view) = scene.view(&vp.view_id) else { continue };
        let Some(r) = vp.result(o.index()).filter(|r| r.is_visible()) else { continue };
        if let Some(f) = mock_view_features(o, view, r, dim, seed) {
            per_view.push((f, r.visible_point_count as f64));
        }
    }
    if per_view.is_empty() {
        return Ok(None);
    }
    aggregate_view_features(&per_view).map(Some)
}

fn write_modality(
    path: &Path,
    kind: EmbeddingKind,
    dim: usize,
    vectors: impl IntoIterator<Item = (usize, Vec<f32>)>,
) -> Result<()> {
    let mut file = EmbeddingFile::new(kind, dim);
    for (i, v) in vectors {
        file.push(i, v);
    }
    io::write_embeddings(path, &file)
}

fn precomputed(path: &Path, kind: EmbeddingKind, dim: usize, scene: &Scene) -> Result<BTreeMap<usize, Vec<f32>>> {
    let indices: Vec<usize> = scene.objects().iter().map(ObjectProposal::index).collect();
    let loaded = load_precomputed(path, kind, dim, &indices)?;
    let mut out = BTreeMap::new();
    for i in indices {
        let v = loaded.vectors.get(&i).cloned().unwrap_or_else(|| vec![0.0; dim]);
        out.insert(i, v);
    }
    Ok(out)
}

/// Writes one embedding file per modality, covering every scene object.
/// Objects without a vector get zeros (with a warning).
pub fn encode(cfg: &RunConfig) -> Result<()> {
    let scene = load_scene(cfg)?;
    let p = paths(cfg);
    let dims = cfg.dims;

    let point = match &cfg.point_embeddings {
        Some(path) => precomputed(path, EmbeddingKind::Point3D, dims.point, &scene)?,
        None => scene
            .objects()
            .iter()
            .map(|o| (o.index(), to_f32(&mock_point_features(o, dims.point, cfg.seed))))
            .collect(),
    };
    write_modality(&p.embeddings(EmbeddingKind::Point3D), EmbeddingKind::Point3D, dims.point, point)?;

    let visual = match &cfg.visual_embeddings {
        Some(path) => precomputed(path, EmbeddingKind::Visual2D, dims.visual, &scene)?,
        None => {
            let projections = load_projections(cfg, &scene)?;
            let mut out = BTreeMap::new();
            for o in scene.objects() {
                let v = mock_visual_features(&scene, &projections, o, dims.visual, cfg.seed)?.unwrap_or_else(|| {
                    log::warn!("object {}: visible in no view, using a zero visual embedding", o.index());
                    vec![0.0; dims.visual]
                });
                out.insert(o.index(), to_f32(&v));
            }
            out
        }
    };
    write_modality(&p.embeddings(EmbeddingKind::Visual2D), EmbeddingKind::Visual2D, dims.visual, visual)?;

    let text = match &cfg.text_embeddings {
        Some(path) => precomputed(path, EmbeddingKind::Text, dims.text, &scene)?,
        None => {
            let records = load_descriptions(cfg)?;
            let mut encoded = encode_descriptions(&records, &MockTextEncoder { dim: dims.text })?;
            scene
                .objects()
                .iter()
                .map(|o| {
                    let v = encoded.remove(&o.index()).unwrap_or_else(|| vec![0.0; dims.text]);
                    (o.index(), to_f32(&v))
                })
                .collect()
        }
    };
    write_modality(&p.embeddings(EmbeddingKind::Text), EmbeddingKind::Text, dims.text, text)
}

fn head_file(head: &ProjectionHead) -> EmbeddingFile {
    let mut f = EmbeddingFile::new(EmbeddingKind::HeadWeights, head.param_count());
    f.head_layout = Some(head.layout().into_iter().map(|w| w as u32).collect());
    f.push(0, to_f32(&head.parameters()));
    f
}

fn token_file(tokens: &SceneTokens) -> Result<EmbeddingFile> {
    let mut f = EmbeddingFile::new(EmbeddingKind::FusedTokens, tokens.cols * 4);
    for (id, block) in &tokens.entries {
        let idx = crate::model::parse_identifier(id).ok_or_else(|| Error::domain(format!("bad identifier {id}")))?;
        f.push(idx, to_f32(&block.concat()));
    }
    Ok(f)
}

/// Token blocks for every object from the three embedding files.
pub fn fuse(cfg: &RunConfig) -> Result<SceneTokens> {
    let scene = load_scene(cfg)?;
    let p = paths(cfg);
    let dims = cfg.dims;
    let load = |kind: EmbeddingKind, dim: usize| precomputed(&p.embeddings(kind), kind, dim, &scene);
    let point = load(EmbeddingKind::Point3D, dims.point)?;
    let visual = load(EmbeddingKind::Visual2D, dims.visual)?;
    let text = load(EmbeddingKind::Text, dims.text)?;

    let heads = HeadSet::random([dims.point, dims.visual, dims.text], &cfg.head, cfg.seed)?;
    let ids = IdentifierTable::new(heads.token_dim(), cfg.seed);
    let mut blocks: BTreeMap<usize, ObjectTokenBlock> = BTreeMap::new();
    for o in scene.objects() {
        let i = o.index();
        let block = build_object_block(
            &ids.embedding(i),
            Some(&to_f64(&point[&i])),
            Some(&to_f64(&visual[&i])),
            Some(&to_f64(&text[&i])),
            &heads,
        )?;
        blocks.insert(i, block);
    }
    let tokens = serialize_scene_tokens(&scene, &blocks)?;

    for (name, head) in [("point", &heads.point), ("visual", &heads.visual), ("text", &heads.text)] {
        io::write_embeddings(p.head(name), &head_file(head))?;
    }
    io::write_embeddings(p.tokens(), &token_file(&tokens)?)?;
    Ok(tokens)
}

/// Token blocks read back from `tokens.d3de`.
pub fn load_tokens(cfg: &RunConfig, scene: &Scene) -> Result<SceneTokens> {
    let path = paths(cfg).tokens();
    let file = io::read_embeddings(&path)?;
    if file.kind != EmbeddingKind::FusedTokens || file.dim % 4 != 0 {
        return Err(Error::format(&path, "header", "kind", "not a fused token file"));
    }
    let d = file.dim / 4;
    let mut blocks = BTreeMap::new();
    for r in &file.records {
        let v = to_f64(&r.vector);
        blocks.insert(
            r.object_index as usize,
            ObjectTokenBlock {
                identifier_embedding: v[..d].to_vec(),
                f_vp: v[d..2 * d].to_vec(),
                f_vf: v[2 * d..3 * d].to_vec(),
                f_vt: v[3 * d..].to_vec(),
            },
        );
    }
    serialize_scene_tokens(scene, &blocks)
}

/// One line of `prompts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task_id: String,
    pub task_kind: TaskKind,
    pub style: ReferenceStyle,
    pub flags: IntegrationFlags,
    pub referenced: Vec<usize>,
    #[serde(flatten)]
    pub bundle: PromptBundle,
    /// SHA-256 of the token matrix the language model would receive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_sha256: Option<String>,
}

pub fn tokens_digest(tokens: &SceneTokens) -> String {
    Sha256::digest(tokens.matrix_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Prompts for a task list against an in-memory scene, descriptions and tokens.
pub fn build_prompts(
    scene: &Scene,
    tasks: &[TaskInstance],
    records: &DescriptionSet,
    tokens: Option<&SceneTokens>,
    cfg: &RunConfig,
) -> Vec<PromptRecord> {
    tasks
        .iter()
        .map(|t| {
            let a = assemble_prompt(scene, tokens, records, &t.query, cfg.style, cfg.flags, &cfg.template);
            PromptRecord {
                task_id: t.task_id.clone(),
                task_kind: t.task_kind,
                style: cfg.style,
                flags: cfg.flags,
                referenced: a.referenced,
                bundle: a.bundle,
                tokens_sha256: a.tokens.as_ref().map(tokens_digest),
            }
        })
        .collect()
}

pub fn prompt(cfg: &RunConfig) -> Result<Vec<PromptRecord>> {
    let scene = load_scene(cfg)?;
    let tasks = load_tasks(cfg)?;
    let records = load_descriptions(cfg)?;
    let tokens = if paths(cfg).tokens().exists() {
        Some(load_tokens(cfg, &scene)?)
    } else {
        log::warn!("no fused tokens found, prompts carry text only");
        None
    };
    let prompts = build_prompts(&scene, &tasks, &records, tokens.as_ref(), cfg);
    io::write_jsonl(paths(cfg).prompts(), &prompts)?;
    Ok(prompts)
}

/// Turns a raw answer into boxes and text: identifiers become the boxes of
/// those objects; caption and QA answers keep their text with identifiers removed.
pub fn parse_answer(scene: &Scene, task: &TaskInstance, answer: &str) -> Prediction {
    let mut ids = Vec::new();
    for i in identifiers_in(answer) {
        if scene.object(i).is_some() && !ids.contains(&i) {
            ids.push(i);
        }
    }
    if matches!(task.task_kind, TaskKind::GroundSingle | TaskKind::Caption) {
        ids.truncate(1);
    }
    let boxes = ids.iter().filter_map(|&i| scene.object(i)).map(|o| o.aabb()).collect();
    let text = match task.task_kind {
        TaskKind::Caption | TaskKind::Qa => {
            let mut t = answer.to_string();
            for i in identifiers_in(answer) {
                t = t.replace(&crate::model::identifier_for(i), "");
            }
            Some(t.split_whitespace().collect::<Vec<_>>().join(" "))
        }
        _ => None,
    };
    let mut extra = serde_json::Map::new();
    extra.insert("answer".into(), serde_json::Value::String(answer.to_string()));
    Prediction {
        task_id: task.task_id.clone(),
        boxes,
        text,
        extra,
    }
}

pub fn answer(cfg: &RunConfig) -> Result<Vec<Prediction>> {
    let scene = load_scene(cfg)?;
    let tasks = load_tasks(cfg)?;
    let prompts: Vec<PromptRecord> = io::read_jsonl(paths(cfg).prompts())?;
    let by_id: BTreeMap<&str, &PromptRecord> = prompts.iter().map(|p| (p.task_id.as_str(), p)).collect();
    let mut items = Vec::with_capacity(tasks.len());
    for t in &tasks {
        let p = by_id
            .get(t.task_id.as_str())
            .ok_or_else(|| Error::Config(format!("no prompt for task {}", t.task_id)))?;
        items.push((t.clone(), p.bundle.clone()));
    }
    let answers = match cfg.backend {
        BackendKind::Mock => {
            let records = load_descriptions(cfg)?;
            let llm = MockLlm { scene: &scene, descriptions: &records };
            respond(&llm, &items, cfg.parallelism)?
        }
        BackendKind::Http => {
            let client = ChatClient::new(backend_config(cfg)?)?;
            let parallelism = cfg.parallelism.min(client.config().request_parallelism);
            respond(&client, &items, parallelism)?
        }
    };
    let predictions: Vec<Prediction> = tasks
        .iter()
        .zip(&answers)
        .map(|(t, a)| parse_answer(&scene, t, a))
        .collect();
    io::write_jsonl(paths(cfg).predictions(), &predictions)?;
    Ok(predictions)
}

fn respond<R: Responder>(responder: &R, items: &[(TaskInstance, PromptBundle)], parallelism: usize) -> Result<Vec<String>> {
    answer_all(responder, items, parallelism).into_iter().collect()
}

pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let tasks = load_tasks(cfg)?;
    let predictions: Vec<Prediction> = io::read_jsonl(or_default(&cfg.predictions, paths(cfg).predictions()))?;
    let report = evaluate(&tasks, &predictions);
    io::write_json(paths(cfg).results(), &report)?;
    Ok(report)
}

/// Every stage with mock backends. Uses the toy scene unless `cfg.scene` is set.
pub fn run_e2e_mock(cfg: &RunConfig) -> Result<EvalReport> {
    let cfg = RunConfig {
        backend: BackendKind::Mock,
        ..cfg.clone()
    };
    ingest(&cfg, cfg.scene.is_none())?;
    // later stages read the ingested copies
    let staged = RunConfig {
        scene: None,
        views: None,
        tasks: None,
        ..cfg.clone()
    };
    project(&staged)?;
    describe(&staged)?;
    encode(&staged)?;
    fuse(&staged)?;
    prompt(&staged)?;
    answer(&staged)?;
    eval(&staged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visual_features_weight_views_by_support() {
        let scene = toy::toy_scene();
        let projections = project_scene(&scene);
        let o = scene.object(1).unwrap();
        let f = mock_visual_features(&scene, &projections, o, 16, 42).unwrap().unwrap();
        assert_eq!(f.len(), 16);
        let mut num = [0.0; 16];
        let mut den = 0.0;
        for vp in &projections {
            let r = vp.result(1).unwrap();
            if !r.is_visible() {
                continue;
            }
            let view = scene.view(&vp.view_id).unwrap();
            let v = mock_view_features(o, view, r, 16, 42).unwrap();
            let w = r.visible_point_count as f64;
            for k in 0..16 {
                num[k] += w * v[k];
            }
            den += w;
        }
        for k in 0..16 {
            assert!((f[k] - num[k] / den).abs() < 1e-12);
        }
    }

    #[test]
    fn answers_become_predictions() {
        let scene = toy::toy_scene();
        let tasks = toy::toy_tasks(&scene);
        let p = parse_answer(&scene, &tasks[0], "It is <OBJ004>.");
        assert_eq!(p.boxes, vec![scene.object(4).unwrap().aabb()]);
        assert!(p.text.is_none());
        let cap = tasks.iter().find(|t| t.task_kind == TaskKind::Caption).unwrap();
        let p = parse_answer(&scene, cap, "<OBJ006> There is a tv in the room.");
        assert_eq!(p.text.as_deref(), Some("There is a tv in the room."));
        assert_eq!(p.boxes.len(), 1);
        let p = parse_answer(&scene, &tasks[0], "<OBJ099> nothing");
        assert!(p.boxes.is_empty());
    }
}

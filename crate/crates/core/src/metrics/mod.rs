//! Benchmark metrics: grounding accuracy, multi-target F1, IoU-gated
//! captioning and question answering.

pub mod grounding;
pub mod text;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Aabb;

pub use grounding::{instance_f1, max_matched_pairs, min_cost_assignment};
pub use text::{
    bleu, cider, cider_scores, em_refined, exact_match, meteor_lite, rouge_l, sentence_bleu, tokenize, CiderIdf,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GroundSingle,
    GroundMulti,
    Caption,
    Qa,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::GroundSingle => "ground_single",
            TaskKind::GroundMulti => "ground_multi",
            TaskKind::Caption => "caption",
            TaskKind::Qa => "qa",
        }
    }
}

/// One benchmark item with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub task_kind: TaskKind,
    /// Grounding query, caption request or question.
    pub query: String,
    #[serde(default)]
    pub gt_boxes: Vec<Aabb>,
    /// Reference captions or accepted answers.
    #[serde(default)]
    pub gt_texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_object: Option<usize>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TaskInstance {
    pub fn new(task_id: impl Into<String>, task_kind: TaskKind, query: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            task_kind,
            query: query.into(),
            gt_boxes: Vec::new(),
            gt_texts: Vec::new(),
            target_object: None,
            extra: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::domain(format!("task {}: {m}", self.task_id)));
        for b in &self.gt_boxes {
            Aabb::new(b.min, b.max).map_err(|e| Error::domain(format!("task {}: {e}", self.task_id)))?;
        }
        match self.task_kind {
            TaskKind::GroundSingle if self.gt_boxes.len() != 1 => bad("single grounding needs exactly one box"),
            TaskKind::Caption if self.gt_boxes.len() != 1 => bad("captioning needs exactly one box"),
            TaskKind::Caption if self.gt_texts.is_empty() => bad("captioning needs a reference text"),
            TaskKind::Qa if self.gt_texts.is_empty() => bad("QA needs at least one answer"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default)]
    pub task_id: String,
    #[serde(default)]
    pub boxes: Vec<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Prediction {
    pub fn boxes(boxes: Vec<Aabb>) -> Self {
        Self { boxes, ..Default::default() }
    }
}

/// Fraction of instances whose single predicted box has IoU above `thr`.
/// Instances without exactly one predicted and one target box score 0.
pub fn acc_at_iou(instances: &[TaskInstance], predictions: &[Prediction], thr: f64) -> f64 {
    assert_eq!(instances.len(), predictions.len(), "one prediction per instance");
    text::mean(instances.iter().zip(predictions).map(|(inst, pred)| {
        if pred.boxes.len() != 1 || inst.gt_boxes.len() != 1 {
            log::warn!(
                "task {}: expected one predicted and one target box, got {} and {}",
                inst.task_id,
                pred.boxes.len(),
                inst.gt_boxes.len()
            );
            return 0.0;
        }
        grounding::single_hit(&pred.boxes, &inst.gt_boxes, thr) as u8 as f64
    }))
}

/// Mean per-instance set F1 under optimal one-to-one matching at `thr`.
pub fn multi_object_f1(instances: &[TaskInstance], predictions: &[Prediction], thr: f64) -> f64 {
    assert_eq!(instances.len(), predictions.len(), "one prediction per instance");
    text::mean(
        instances
            .iter()
            .zip(predictions)
            .map(|(inst, pred)| instance_f1(&pred.boxes, &inst.gt_boxes, thr)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMetric {
    Cider,
    Bleu4,
}

fn caption_iou(inst: &TaskInstance, pred: &Prediction) -> f64 {
    match (pred.boxes.first(), inst.gt_boxes.first()) {
        (Some(p), Some(g)) => p.iou(g),
        _ => 0.0,
    }
}

/// Per-instance caption scores, zeroed when the predicted box has IoU below `thr`.
/// CIDEr document frequencies always come from the full reference corpus.
pub fn captioning_scores(
    instances: &[TaskInstance],
    predictions: &[Prediction],
    thr: f64,
    metric: CaptionMetric,
) -> Vec<f64> {
    assert_eq!(instances.len(), predictions.len(), "one prediction per instance");
    let refs: Vec<Vec<String>> = instances.iter().map(|i| i.gt_texts.clone()).collect();
    let idf = CiderIdf::new(&refs);
    instances
        .iter()
        .zip(predictions)
        .map(|(inst, pred)| {
            let Some(text) = pred.text.as_deref() else {
                return 0.0;
            };
            if caption_iou(inst, pred) < thr {
                return 0.0;
            }
            match metric {
                CaptionMetric::Cider => idf.score(text, &inst.gt_texts),
                CaptionMetric::Bleu4 => sentence_bleu(text, &inst.gt_texts, 4),
            }
        })
        .collect()
}

pub fn captioning_at_iou(
    instances: &[TaskInstance],
    predictions: &[Prediction],
    thr: f64,
    metric: CaptionMetric,
) -> f64 {
    text::mean(captioning_scores(instances, predictions, thr, metric).into_iter())
}

/// Scores of one instance, keyed by metric name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub task_id: String,
    pub task_kind: TaskKind,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_instances: usize,
    /// task kind -> metric -> score
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub instances: Vec<InstanceScores>,
}

impl EvalReport {
    pub fn score(&self, kind: TaskKind, metric: &str) -> Option<f64> {
        self.scores.get(kind.as_str())?.get(metric).copied()
    }

    /// One line per task kind and metric.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (kind, metrics) in &self.scores {
            for (name, value) in metrics {
                out.push_str(&format!("{kind:<14} {name:<10} {value:.4}\n"));
            }
        }
        out
    }
}

/// Scores every task against the prediction with the same `task_id`
/// (an absent prediction counts as empty).
pub fn evaluate(tasks: &[TaskInstance], predictions: &[Prediction]) -> EvalReport {
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.task_id.as_str(), p)).collect();
    let empty = Prediction::default();
    let paired: Vec<(&TaskInstance, &Prediction)> = tasks
        .iter()
        .map(|t| (t, by_id.get(t.task_id.as_str()).copied().unwrap_or(&empty)))
        .collect();

    let mut per_instance: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); tasks.len()];
    let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();

    for kind in [TaskKind::GroundSingle, TaskKind::GroundMulti, TaskKind::Caption, TaskKind::Qa] {
        let idx: Vec<usize> = (0..tasks.len()).filter(|&i| tasks[i].task_kind == kind).collect();
        if idx.is_empty() {
            continue;
        }
        let insts: Vec<TaskInstance> = idx.iter().map(|&i| paired[i].0.clone()).collect();
        let preds: Vec<Prediction> = idx.iter().map(|&i| paired[i].1.clone()).collect();
        let agg = scores.entry(kind.as_str().to_string()).or_default();
        let mut put = |i: usize, name: &str, v: f64| {
            per_instance[idx[i]].insert(name.to_string(), v);
        };
        match kind {
            TaskKind::GroundSingle => {
                for thr in [0.25, 0.5] {
                    agg.insert(format!("acc@{thr}"), acc_at_iou(&insts, &preds, thr));
                }
                for (i, (inst, pred)) in insts.iter().zip(&preds).enumerate() {
                    let iou = match (pred.boxes.as_slice(), inst.gt_boxes.as_slice()) {
                        ([p], [g]) => p.iou(g),
                        _ => 0.0,
                    };
                    put(i, "iou", iou);
                }
            }
            TaskKind::GroundMulti => {
                for thr in [0.25, 0.5] {
                    agg.insert(format!("f1@{thr}"), multi_object_f1(&insts, &preds, thr));
                    for (i, (inst, pred)) in insts.iter().zip(&preds).enumerate() {
                        put(i, &format!("f1@{thr}"), instance_f1(&pred.boxes, &inst.gt_boxes, thr));
                    }
                }
            }
            TaskKind::Caption => {
                for (metric, name) in [(CaptionMetric::Cider, "cider@0.5"), (CaptionMetric::Bleu4, "bleu4@0.5")] {
                    let s = captioning_scores(&insts, &preds, 0.5, metric);
                    agg.insert(name.to_string(), text::mean(s.iter().copied()));
                    for (i, v) in s.into_iter().enumerate() {
                        put(i, name, v);
                    }
                }
                for (i, (inst, pred)) in insts.iter().zip(&preds).enumerate() {
                    put(i, "iou", caption_iou(inst, pred));
                }
            }
            TaskKind::Qa => {
                let cands: Vec<String> = preds.iter().map(|p| p.text.clone().unwrap_or_default()).collect();
                let refs: Vec<Vec<String>> = insts.iter().map(|i| i.gt_texts.clone()).collect();
                let cider_items = cider_scores(&cands, &refs);
                agg.insert("cider".into(), text::mean(cider_items.iter().copied()));
                agg.insert("bleu4".into(), bleu(&cands, &refs, 4));
                agg.insert("rouge_l".into(), text::rouge_l_corpus(&cands, &refs));
                agg.insert("meteor".into(), text::meteor_corpus(&cands, &refs));
                let em: Vec<f64> = cands.iter().zip(&refs).map(|(c, r)| exact_match(c, r) as u8 as f64).collect();
                let emr: Vec<f64> = cands.iter().zip(&refs).map(|(c, r)| em_refined(c, r) as u8 as f64).collect();
                agg.insert("em".into(), text::mean(em.iter().copied()));
                agg.insert("em_r".into(), text::mean(emr.iter().copied()));
                for i in 0..insts.len() {
                    put(i, "cider", cider_items[i]);
                    put(i, "em", em[i]);
                    put(i, "em_r", emr[i]);
                }
            }
        }
    }

    EvalReport {
        num_instances: tasks.len(),
        scores,
        instances: tasks
            .iter()
            .zip(per_instance)
            .map(|(t, s)| InstanceScores {
                task_id: t.task_id.clone(),
                task_kind: t.task_kind,
                scores: s,
            })
            .collect(),
    }
}

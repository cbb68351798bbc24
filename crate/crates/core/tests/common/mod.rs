//! Helpers shared by the integration suites: random scenes and independent
//! reference implementations used as oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relscene::fusion::{Linear, ProjectionHead};
use relscene::{Aabb, CameraView, ObjectProposal, Point, Scene};

pub const LABELS: [&str; 12] = [
    "chair", "table", "lamp", "sofa", "tv", "plant", "bookshelf", "cabinet", "door", "window", "curtain", "bed",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scene with 1..=12 labelled blobs in an 8 m room and 1..=4 views.
pub fn random_scene(seed: u64) -> Scene {
    let mut r = rng(seed);
    let n = r.random_range(1..=12);
    let mut indices: BTreeSet<usize> = BTreeSet::new();
    while indices.len() < n {
        indices.insert(r.random_range(1..=60));
    }
    let objects = indices
        .into_iter()
        .map(|idx| {
            let c = [r.random_range(-4.0..4.0f32), r.random_range(-4.0..4.0f32), r.random_range(0.2..1.8f32)];
            let count = r.random_range(40..160);
            let points = (0..count)
                .map(|_| {
                    Point::new(
                        c[0] + r.random_range(-0.3..0.3),
                        c[1] + r.random_range(-0.3..0.3),
                        c[2] + r.random_range(-0.3..0.3),
                        0.5,
                        0.5,
                        0.5,
                    )
                })
                .collect();
            // a small label pool forces repeated categories
            let label = LABELS[r.random_range(0..6)];
            ObjectProposal::new(idx, points, Some(label.to_string())).unwrap()
        })
        .collect();
    let views = (0..r.random_range(1..=4))
        .map(|k| {
            let eye = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), 1.6];
            let target = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), 0.8];
            let fx = r.random_range(200.0..400.0);
            CameraView::look_at(format!("v{k}").as_str(), eye, target, [0.0, 0.0, 1.0], fx, 320, 240).unwrap()
        })
        .collect();
    Scene::new(format!("random_{seed}"), objects, views).unwrap()
}

pub fn random_box<R: Rng>(r: &mut R) -> Aabb {
    let min = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
    let ext = [r.random_range(0.05..3.0), r.random_range(0.05..3.0), r.random_range(0.05..3.0)];
    Aabb::new(min, [min[0] + ext[0], min[1] + ext[1], min[2] + ext[2]]).unwrap()
}

/// Box near `anchor`, so random sets have overlapping pairs.
pub fn jittered_box<R: Rng>(r: &mut R, anchor: &Aabb) -> Aabb {
    let s = r.random_range(0.0..0.6);
    let by = [r.random_range(-s..=s), r.random_range(-s..=s), r.random_range(-s..=s)];
    anchor.translated(by)
}

/// Straight-line IoU used as the test oracle.
pub fn iou_oracle(a: &Aabb, b: &Aabb) -> f64 {
    let mut inter = 1.0;
    for k in 0..3 {
        let lo = a.min[k].max(b.min[k]);
        let hi = a.max[k].min(b.max[k]);
        inter *= (hi - lo).max(0.0);
    }
    let va = (0..3).map(|k| a.max[k] - a.min[k]).product::<f64>();
    let vb = (0..3).map(|k| b.max[k] - b.min[k]).product::<f64>();
    let union = va + vb - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Largest matched pair count over every injective partial matching.
pub fn brute_force_matches(preds: &[Aabb], gts: &[Aabb], thr: f64) -> usize {
    fn go(i: usize, preds: &[Aabb], gts: &[Aabb], used: &mut Vec<bool>, thr: f64) -> usize {
        if i == preds.len() {
            return 0;
        }
        let mut best = go(i + 1, preds, gts, used, thr);
        for j in 0..gts.len() {
            if !used[j] && iou_oracle(&preds[i], &gts[j]) >= thr {
                used[j] = true;
                best = best.max(1 + go(i + 1, preds, gts, used, thr));
                used[j] = false;
            }
        }
        best
    }
    go(0, preds, gts, &mut vec![false; gts.len()], thr)
}

pub fn brute_force_f1(preds: &[Aabb], gts: &[Aabb], thr: f64) -> f64 {
    if gts.is_empty() && preds.is_empty() {
        return 1.0;
    }
    if gts.is_empty() {
        return 0.0;
    }
    let tp = brute_force_matches(preds, gts, thr) as f64;
    let precision = if preds.is_empty() { 0.0 } else { tp / preds.len() as f64 };
    let recall = tp / gts.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .replace(['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'], "")
        .split_whitespace()
        .map(String::from)
        .collect()
}

fn grams(tokens: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for i in 0..tokens.len().saturating_sub(n - 1) {
        *m.entry(tokens[i..i + n].join(" ")).or_insert(0.0) += 1.0;
    }
    m
}

/// Textbook tf-idf cosine CIDEr: idf = ln(N / df) with df over reference sets,
/// averaged over references and n = 1..4, times 10.
pub fn cider_oracle(cands: &[&str], refs: &[Vec<&str>]) -> Vec<f64> {
    let n_docs = refs.len() as f64;
    let mut df: BTreeMap<String, f64> = BTreeMap::new();
    for set in refs {
        let mut seen = BTreeSet::new();
        for r in set {
            for n in 1..=4 {
                seen.extend(grams(&words(r), n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let weigh = |tf: BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        tf.into_iter()
            .map(|(g, c)| {
                let d = df.get(&g).copied().unwrap_or(1.0);
                let w = c * (n_docs / d).ln();
                (g, w)
            })
            .collect()
    };
    let cos = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| {
        let dot: f64 = a.iter().map(|(g, x)| x * b.get(g).unwrap_or(&0.0)).sum();
        let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    cands
        .iter()
        .zip(refs)
        .map(|(c, set)| {
            let mut total = 0.0;
            for n in 1..=4 {
                let cv = weigh(grams(&words(c), n));
                let s: f64 = set.iter().map(|r| cos(&cv, &weigh(grams(&words(r), n)))).sum();
                total += s / set.len() as f64;
            }
            10.0 * total / 4.0
        })
        .collect()
}

/// Random three-layer head with widths in 1..=8.
pub fn random_head<R: Rng>(r: &mut R) -> ProjectionHead {
    let widths: Vec<usize> = (0..4).map(|_| r.random_range(1..=8)).collect();
    let layers = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[0] * w[1]).map(|_| r.random_range(-1.0..1.0)).collect();
            let bias = (0..w[1]).map(|_| r.random_range(-0.5..0.5)).collect();
            Linear::new(w[0], w[1], weights, bias).unwrap()
        })
        .collect();
    ProjectionHead::new(layers).unwrap()
}

/// Largest relative error between analytic and central-difference gradients
/// of `L = upstream . head(z)` with respect to every parameter.
pub fn gradient_check(head: &ProjectionHead, z: &[f64], upstream: &[f64], step: f64) -> f64 {
    let analytic = head.gradient(z, upstream).unwrap().flatten();
    let layout = head.layout();
    let params = head.parameters();
    let loss = |p: &[f64]| -> f64 {
        let h = ProjectionHead::from_parameters(&layout, p).unwrap();
        h.apply(z).unwrap().iter().zip(upstream).map(|(a, b)| a * b).sum()
    };
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..params.len() {
        p[i] = params[i] + step;
        let up = loss(&p);
        p[i] = params[i] - step;
        let down = loss(&p);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

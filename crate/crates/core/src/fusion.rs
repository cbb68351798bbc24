//! Projection heads, per-object token blocks, scene token serialization and
//! the response-token cross-entropy objective.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scene;

pub const DEFAULT_TOKEN_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 128;
/// Scale of the Gaussian used to initialize identifier embeddings.
pub const IDENTIFIER_INIT_STD: f64 = 0.02;

/// Affine map `y = W x + b` with `W` stored row-major (`out_dim x in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::domain("linear layer with a zero dimension"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::domain(format!(
                "linear {in_dim}->{out_dim}: got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::domain("non-finite layer parameter"));
        }
        Ok(Self { in_dim, out_dim, weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Shape of a head: layer count and widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// 3 for the MLP head, 1 for a single linear map.
    pub depth: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            out_dim: DEFAULT_TOKEN_DIM,
        }
    }
}

/// Chain of affine layers with a rectifier between consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    layers: Vec<Linear>,
}

/// Parameter gradients of a head, layer by layer, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub layers: Vec<Linear>,
    pub input: Vec<f64>,
}

impl HeadGradient {
    /// Same order as [`ProjectionHead::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Linear]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
    out
}

fn relu(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

impl ProjectionHead {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("a head needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::domain(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn random<R: Rng>(in_dim: usize, config: &HeadConfig, rng: &mut R) -> Result<Self> {
        let dims = match config.depth {
            1 => vec![in_dim, config.out_dim],
            3 => vec![in_dim, config.hidden_dim, config.hidden_dim, config.out_dim],
            d => return Err(Error::domain(format!("unsupported head depth {d}"))),
        };
        Self::new(dims.windows(2).map(|w| Linear::random(w[0], w[1], rng)).collect())
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Layer widths: input, hidden..., output.
    pub fn layout(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    /// All parameters, per layer weights then bias.
    pub fn parameters(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn from_parameters(layout: &[usize], params: &[f64]) -> Result<Self> {
        if layout.len() < 2 {
            return Err(Error::domain("head layout needs at least two widths"));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(layout.len() - 1);
        for w in layout.windows(2) {
            let (i, o) = (w[0], w[1]);
            let end = offset + i * o + o;
            let chunk = params
                .get(offset..end)
                .ok_or_else(|| Error::domain("too few head parameters for the layout"))?;
            layers.push(Linear::new(i, o, chunk[..i * o].to_vec(), chunk[i * o..].to_vec())?);
            offset = end;
        }
        if offset != params.len() {
            return Err(Error::domain("too many head parameters for the layout"));
        }
        Self::new(layers)
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.in_dim() {
            return Err(Error::domain(format!(
                "head expects a {}-vector, got {}",
                self.in_dim(),
                z.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let last = self.layers.len() - 1;
        let mut x = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x);
            if i < last {
                relu(&mut x);
            }
        }
        Ok(x)
    }

    /// Backpropagates `upstream = dL/d(output)` to every parameter and the input.
    pub fn gradient(&self, z: &[f64], upstream: &[f64]) -> Result<HeadGradient> {
        self.check_input(z)?;
        if upstream.len() != self.out_dim() {
            return Err(Error::domain(format!(
                "upstream gradient has {} entries, head outputs {}",
                upstream.len(),
                self.out_dim()
            )));
        }
        let last = self.layers.len() - 1;
        // inputs[i] is what layer i consumed; pre[i] its pre-activation output
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(&x);
            inputs.push(x);
            x = y.clone();
            if i < last {
                relu(&mut x);
            }
            pre.push(y);
        }

        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                for (d, p) in delta.iter_mut().zip(&pre[i]) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &inputs[i];
            let mut gw = Vec::with_capacity(layer.weights.len());
            for d in &delta {
                gw.extend(input.iter().map(|x| d * x));
            }
            let mut back = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            grads.push(Linear {
                in_dim: layer.in_dim,
                out_dim: layer.out_dim,
                weights: gw,
                bias: delta,
            });
            delta = back;
        }
        grads.reverse();
        Ok(HeadGradient { layers: grads, input: delta })
    }
}

pub fn apply_head(head: &ProjectionHead, z: &[f64]) -> Result<Vec<f64>> {
    head.apply(z)
}

pub fn head_gradient(head: &ProjectionHead, z: &[f64], upstream: &[f64]) -> Result<HeadGradient> {
    head.gradient(z, upstream)
}

/// Per-modality heads: 3D points, 2D appearance, description text.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet {
    pub point: ProjectionHead,
    pub visual: ProjectionHead,
    pub text: ProjectionHead,
}

impl HeadSet {
    pub fn random(dims: [usize; 3], config: &HeadConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            point: ProjectionHead::random(dims[0], config, &mut rng)?,
            visual: ProjectionHead::random(dims[1], config, &mut rng)?,
            text: ProjectionHead::random(dims[2], config, &mut rng)?,
        })
    }

    pub fn token_dim(&self) -> usize {
        self.point.out_dim()
    }
}

/// Learnable identifier embeddings. Row `i` is drawn from its own ChaCha
/// stream, so it does not depend on which other objects exist.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierTable {
    pub dim: usize,
    pub seed: u64,
}

impl IdentifierTable {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn embedding(&self, index: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.dim)
            .map(|_| IDENTIFIER_INIT_STD * normal.sample(&mut rng))
            .collect()
    }
}

/// `[OBJ_i, F_vp, F_vf, F_vt]` for one object; the order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTokenBlock {
    pub identifier_embedding: Vec<f64>,
    pub f_vp: Vec<f64>,
    pub f_vf: Vec<f64>,
    pub f_vt: Vec<f64>,
}

impl ObjectTokenBlock {
    pub fn dim(&self) -> usize {
        self.identifier_embedding.len()
    }

    pub fn rows(&self) -> [&[f64]; 4] {
        [&self.identifier_embedding, &self.f_vp, &self.f_vf, &self.f_vt]
    }

    /// Rows concatenated in block order.
    pub fn concat(&self) -> Vec<f64> {
        self.rows().concat()
    }
}

pub fn build_object_block(
    identifier_embedding: &[f64],
    z_vp: Option<&[f64]>,
    z_vf: Option<&[f64]>,
    z_vt: Option<&[f64]>,
    heads: &HeadSet,
) -> Result<ObjectTokenBlock> {
    fn need<'a>(z: Option<&'a [f64]>, what: &str) -> Result<&'a [f64]> {
        z.ok_or_else(|| Error::domain(format!("missing {what} embedding")))
    }
    let block = ObjectTokenBlock {
        identifier_embedding: identifier_embedding.to_vec(),
        f_vp: heads.point.apply(need(z_vp, "3D point")?)?,
        f_vf: heads.visual.apply(need(z_vf, "2D visual")?)?,
        f_vt: heads.text.apply(need(z_vt, "text")?)?,
    };
    let d = block.dim();
    if block.rows().iter().any(|r| r.len() != d) {
        return Err(Error::domain(format!(
            "identifier embedding has dimension {d}, heads output {}",
            heads.token_dim()
        )));
    }
    Ok(block)
}

/// Scene tokens in ascending object order, with a flat `4n x d` matrix view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTokens {
    pub entries: Vec<(String, ObjectTokenBlock)>,
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
}

impl SceneTokens {
    fn from_entries(entries: Vec<(String, ObjectTokenBlock)>) -> Self {
        let cols = entries.first().map_or(0, |(_, b)| b.dim());
        let matrix: Vec<f64> = entries.iter().flat_map(|(_, b)| b.concat()).collect();
        Self {
            rows: entries.len() * 4,
            cols,
            matrix,
            entries,
        }
    }

    /// Copy with every text-modality row zeroed (description embeddings not fused).
    pub fn without_text_modality(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(id, b)| {
                let mut b = b.clone();
                b.f_vt.iter_mut().for_each(|v| *v = 0.0);
                (id.clone(), b)
            })
            .collect();
        Self::from_entries(entries)
    }

    /// Canonical little-endian bytes of the matrix, for equality checks.
    pub fn matrix_bytes(&self) -> Vec<u8> {
        self.matrix.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

pub fn serialize_scene_tokens(
    scene: &Scene,
    blocks: &BTreeMap<usize, ObjectTokenBlock>,
) -> Result<SceneTokens> {
    if blocks.len() != scene.objects().len() {
        return Err(Error::domain(format!(
            "{} token blocks for {} objects",
            blocks.len(),
            scene.objects().len()
        )));
    }
    let mut entries = Vec::with_capacity(blocks.len());
    let mut dim = None;
    for o in scene.objects() {
        let block = blocks
            .get(&o.index())
            .ok_or_else(|| Error::domain(format!("no token block for {}", o.identifier())))?;
        if *dim.get_or_insert(block.dim()) != block.dim() {
            return Err(Error::domain("token blocks differ in dimension"));
        }
        entries.push((o.identifier().to_string(), block.clone()));
    }
    Ok(SceneTokens::from_entries(entries))
}

/// Treatment of a zero probability at a target token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroProbability {
    /// Reject with a domain error.
    #[default]
    Strict,
    /// Clamp to [`LENIENT_FLOOR`].
    Lenient,
}

pub const LENIENT_FLOOR: f64 = 1e-12;
/// Allowed deviation of a distribution's total mass from 1.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

/// Response tokens occupy positions `start..start + len` of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseSpan {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLoss {
    pub per_position_nll: Vec<f64>,
    pub total: f64,
}

/// Negative log-likelihood summed over the response positions only.
///
/// `probabilities[i]` is the model's next-token distribution at position `i`
/// and `targets[i]` the token actually at that position.
pub fn response_cross_entropy(
    probabilities: &[Vec<f64>],
    targets: &[usize],
    span: ResponseSpan,
    mode: ZeroProbability,
) -> Result<ResponseLoss> {
    if probabilities.len() != targets.len() {
        return Err(Error::domain(format!(
            "{} distributions for {} targets",
            probabilities.len(),
            targets.len()
        )));
    }
    if span.len == 0 {
        return Err(Error::domain("empty response span"));
    }
    let end = span.start + span.len;
    if end > targets.len() {
        return Err(Error::domain(format!(
            "response span {}..{end} exceeds sequence length {}",
            span.start,
            targets.len()
        )));
    }
    for (i, dist) in probabilities.iter().enumerate() {
        let mass: f64 = dist.iter().sum();
        if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (mass - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::domain(format!("position {i}: not a probability distribution")));
        }
    }
    let mut nll = Vec::with_capacity(span.len);
    for i in span.start..end {
        let p = *probabilities[i]
            .get(targets[i])
            .ok_or_else(|| Error::domain(format!("position {i}: target {} outside vocabulary", targets[i])))?;
        let p = match (p > 0.0, mode) {
            (true, _) => p,
            (false, ZeroProbability::Lenient) => LENIENT_FLOOR,
            (false, ZeroProbability::Strict) => {
                return Err(Error::domain(format!("position {i}: target has zero probability")))
            }
        };
        nll.push(-p.ln());
    }
    Ok(ResponseLoss {
        total: nll.iter().sum(),
        per_position_nll: nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head_2x2() -> ProjectionHead {
        ProjectionHead::new(vec![
            Linear::new(2, 2, vec![1.0, -2.0, 0.5, 1.0], vec![0.1, -0.2]).unwrap(),
            Linear::new(2, 2, vec![2.0, 0.0, -1.0, 1.0], vec![0.0, 0.3]).unwrap(),
            Linear::new(2, 2, vec![1.0, 1.0, 0.5, -0.5], vec![-0.1, 0.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn zero_head_gives_zero() {
        let head = ProjectionHead::new(vec![Linear::zeros(3, 4), Linear::zeros(4, 4), Linear::zeros(4, 2)]).unwrap();
        assert_eq!(head.apply(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_head_passes_positive_input() {
        let eye = || Linear::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0.0; 3]).unwrap();
        let head = ProjectionHead::new(vec![eye(), eye(), eye()]).unwrap();
        assert_eq!(head.apply(&[0.5, 2.0, 7.0]).unwrap(), vec![0.5, 2.0, 7.0]);
    }

    #[test]
    #[allow(clippy::neg_multiply, clippy::erasing_op, clippy::identity_op)]
    fn hand_forward_pass() {
        // straight-line evaluation of head_2x2 at (1, 1)
        let (x0, x1) = (1.0_f64, 1.0_f64);
        let a0 = (1.0 * x0 - 2.0 * x1 + 0.1_f64).max(0.0); // -0.9 -> 0
        let a1 = (0.5 * x0 + 1.0 * x1 - 0.2_f64).max(0.0); // 1.3
        let b0 = (2.0 * a0 + 0.0 * a1 + 0.0_f64).max(0.0); // 0
        let b1 = (-1.0 * a0 + 1.0 * a1 + 0.3_f64).max(0.0); // 1.6
        let y0 = b0 + b1 - 0.1;
        let y1 = 0.5 * b0 - 0.5 * b1;
        let out = head_2x2().apply(&[x0, x1]).unwrap();
        assert!((out[0] - y0).abs() < 1e-15 && (out[1] - y1).abs() < 1e-15, "{out:?}");
        assert!((out[0] - 1.5).abs() < 1e-12 && (out[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatches() {
        let head = head_2x2();
        assert!(head.apply(&[1.0]).is_err());
        assert!(head.gradient(&[1.0, 1.0], &[1.0]).is_err());
        assert!(ProjectionHead::new(vec![Linear::zeros(2, 3), Linear::zeros(2, 2)]).is_err());
        assert!(Linear::new(2, 2, vec![f64::NAN, 0., 0., 0.], vec![0., 0.]).is_err());
    }

    #[test]
    fn parameter_round_trip() {
        let head = head_2x2();
        let back = ProjectionHead::from_parameters(&head.layout(), &head.parameters()).unwrap();
        assert_eq!(back, head);
        assert!(ProjectionHead::from_parameters(&[2, 2], &[0.0; 5]).is_err());
    }

    #[test]
    fn linear_depth_switch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = HeadConfig { depth: 1, hidden_dim: 0, out_dim: 4 };
        let head = ProjectionHead::random(6, &cfg, &mut rng).unwrap();
        assert_eq!(head.layout(), vec![6, 4]);
        assert!(ProjectionHead::random(6, &HeadConfig { depth: 2, ..cfg }, &mut rng).is_err());
    }

    #[test]
    fn identifier_rows_are_seeded_and_independent() {
        let t = IdentifierTable::new(16, 42);
        assert_eq!(t.embedding(3), IdentifierTable::new(16, 42).embedding(3));
        assert_ne!(t.embedding(3), t.embedding(4));
        assert_ne!(t.embedding(3), IdentifierTable::new(16, 43).embedding(3));
        assert!(t.embedding(1).iter().all(|v| v.abs() < 0.2));
    }

    #[test]
    fn missing_modality_rejected() {
        let heads = HeadSet::random([3, 3, 3], &HeadConfig { depth: 3, hidden_dim: 4, out_dim: 2 }, 0).unwrap();
        let z = [1.0, 2.0, 3.0];
        assert!(build_object_block(&[0.0, 0.0], Some(&z), Some(&z), None, &heads).is_err());
        assert!(build_object_block(&[0.0; 3], Some(&z), Some(&z), Some(&z), &heads).is_err());
        let b = build_object_block(&[0.5, 0.5], Some(&z), Some(&z), Some(&z), &heads).unwrap();
        assert_eq!(b.rows()[0], &[0.5, 0.5]);
        assert_eq!(b.f_vt, heads.text.apply(&z).unwrap());
    }

    #[test]
    fn loss_cases() {
        let one_hot = |t: usize| {
            let mut d = vec![0.0; 4];
            d[t] = 1.0;
            d
        };
        let probs = vec![one_hot(1), one_hot(2), one_hot(3)];
        let l = response_cross_entropy(&probs, &[1, 2, 3], ResponseSpan { start: 0, len: 3 }, ZeroProbability::Strict)
            .unwrap();
        assert_eq!(l.total, 0.0);

        let uniform = vec![vec![0.1; 10]; 5];
        let l = response_cross_entropy(&uniform, &[0, 1, 2, 3, 4], ResponseSpan { start: 2, len: 3 }, ZeroProbability::Strict)
            .unwrap();
        assert!((l.total - 3.0 * 10f64.ln()).abs() < 1e-9);
        assert!((l.total - 6.9078).abs() < 1e-4);

        let probs = vec![vec![0.5, 0.5], vec![0.75, 0.25]];
        let l = response_cross_entropy(&probs, &[0, 1], ResponseSpan { start: 0, len: 2 }, ZeroProbability::Strict)
            .unwrap();
        assert!((l.total + (0.5f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        assert_eq!(l.per_position_nll.len(), 2);
    }

    #[test]
    fn loss_errors_and_lenient_mode() {
        let probs = vec![vec![1.0, 0.0]];
        let span = ResponseSpan { start: 0, len: 1 };
        assert!(response_cross_entropy(&probs, &[1], span, ZeroProbability::Strict).is_err());
        let l = response_cross_entropy(&probs, &[1], span, ZeroProbability::Lenient).unwrap();
        assert!((l.total - (-LENIENT_FLOOR.ln())).abs() < 1e-9);
        assert!(response_cross_entropy(&probs, &[0], ResponseSpan { start: 0, len: 2 }, ZeroProbability::Strict).is_err());
        assert!(response_cross_entropy(&probs, &[0], ResponseSpan { start: 0, len: 0 }, ZeroProbability::Strict).is_err());
        assert!(response_cross_entropy(&[vec![0.5, 0.4]], &[0], span, ZeroProbability::Strict).is_err());
    }
}

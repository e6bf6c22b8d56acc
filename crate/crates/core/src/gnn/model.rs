use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::{axpy, dot, l2, Mat};
use crate::crbg::{Crbg, EdgeType, EDGE_TYPES, NODE_DIM};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const CLASSES: usize = 2;

/// Marks the self-loop entry of a neighborhood; it carries a zero edge feature.
const SELF_LOOP: u8 = u8::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum GnnError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset must contain both classes")]
    SingleClass,
    #[error("graph `{0}` is unlabeled")]
    Unlabeled(String),
}

/// Which edge kinds the model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "DF+CF")]
    DfCf,
    #[serde(rename = "DF")]
    Df,
    #[serde(rename = "CF")]
    Cf,
    #[serde(rename = "NE")]
    Ne,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::DfCf, Mode::Df, Mode::Cf, Mode::Ne];

    pub fn keeps(self, kind: EdgeType) -> bool {
        match self {
            Mode::DfCf => true,
            Mode::Df => kind.is_data() || kind == EdgeType::Connection,
            Mode::Cf => kind.is_control() || kind == EdgeType::Connection,
            Mode::Ne => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::DfCf => "DF+CF",
            Mode::Df => "DF",
            Mode::Cf => "CF",
            Mode::Ne => "NE",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// A graph prepared for the network: deduplicated input rows and in-edge
/// neighborhoods with the self-loop first.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub n: usize,
    /// Distinct feature rows (`u × NODE_DIM`).
    pub rows: Mat,
    pub row_of: Vec<u32>,
    /// CSR over destination nodes: entries `offsets[i]..offsets[i+1]`.
    pub offsets: Vec<usize>,
    pub nbr: Vec<u32>,
    pub kind: Vec<u8>,
    /// Graph edge index for each non-self entry.
    pub edge_of: Vec<u32>,
    pub edge_count: usize,
    pub label: Option<usize>,
}

impl GraphInput {
    pub fn from_crbg(g: &Crbg, mode: Mode) -> Self {
        let n = g.nodes.len();
        let mut index: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut rows = Vec::new();
        let mut row_of = Vec::with_capacity(n);
        for node in &g.nodes {
            let key: Vec<u64> = node.feat.iter().map(|x| x.to_bits()).collect();
            let next = index.len() as u32;
            let id = *index.entry(key).or_insert_with(|| {
                rows.extend_from_slice(&node.feat);
                next
            });
            row_of.push(id);
        }
        let u = index.len();
        let mut incoming: Vec<Vec<(u32, u8, u32)>> = vec![Vec::new(); n];
        for (ei, e) in g.edges.iter().enumerate() {
            if mode.keeps(e.kind) {
                incoming[e.dst as usize].push((e.src, e.kind.index() as u8, ei as u32));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let (mut nbr, mut kind, mut edge_of) = (Vec::new(), Vec::new(), Vec::new());
        offsets.push(0);
        for (i, inc) in incoming.iter().enumerate() {
            nbr.push(i as u32);
            kind.push(SELF_LOOP);
            edge_of.push(u32::MAX);
            for &(j, t, ei) in inc {
                nbr.push(j);
                kind.push(t);
                edge_of.push(ei);
            }
            offsets.push(nbr.len());
        }
        GraphInput {
            n,
            rows: Mat {
                rows: u,
                cols: NODE_DIM,
                data: rows,
            },
            row_of,
            offsets,
            nbr,
            kind,
            edge_of,
            edge_count: g.edges.len(),
            label: g.label.class(),
        }
    }

    pub fn entries(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub w: Mat,
    pub w_e: Mat,
    /// `[a_src ‖ a_nbr ‖ a_edge]`, each of the output width.
    pub a: Vec<f64>,
    pub leaky_slope: f64,
}

impl GatLayerParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let a = Mat::glorot(3 * d_out, 1, rng).data;
        GatLayerParams {
            w: Mat::glorot(d_in, d_out, rng),
            w_e: Mat::glorot(EDGE_TYPES, d_out, rng),
            a,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    fn zeros_like(&self) -> Self {
        GatLayerParams {
            w: Mat::zeros(self.w.rows, self.w.cols),
            w_e: Mat::zeros(self.w_e.rows, self.w_e.cols),
            a: vec![0.0; self.a.len()],
            leaky_slope: self.leaky_slope,
        }
    }

    fn d(&self) -> usize {
        self.w.cols
    }

    /// Attention contribution of each edge type: `a_edge · W_e[t]`.
    fn edge_scores(&self) -> [f64; EDGE_TYPES] {
        let d = self.d();
        let a3 = &self.a[2 * d..];
        let mut c = [0.0; EDGE_TYPES];
        for (t, ct) in c.iter_mut().enumerate() {
            *ct = dot(a3, self.w_e.row(t));
        }
        c
    }

    /// `W_e · a_edge`: gradient of a pre-activation score w.r.t. the edge feature.
    fn edge_feature_direction(&self) -> [f64; EDGE_TYPES] {
        self.edge_scores()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layer1: GatLayerParams,
    pub layer2: GatLayerParams,
    pub fc_w: Mat,
    pub fc_b: Vec<f64>,
    pub dropout: f64,
    /// Whether the self term enters the aggregation (it always enters the
    /// attention normalization).
    pub include_self: bool,
}

impl ModelParams {
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            layer1: GatLayerParams::init(NODE_DIM, hidden, &mut rng),
            layer2: GatLayerParams::init(hidden, hidden, &mut rng),
            fc_w: Mat::glorot(hidden, CLASSES, &mut rng),
            fc_b: vec![0.0; CLASSES],
            dropout: DEFAULT_DROPOUT,
            include_self: true,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            fc_w: Mat::zeros(self.fc_w.rows, self.fc_w.cols),
            fc_b: vec![0.0; self.fc_b.len()],
            dropout: self.dropout,
            include_self: self.include_self,
        }
    }

    /// Every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.layer1.w.data,
            &self.layer1.w_e.data,
            &self.layer1.a,
            &self.layer2.w.data,
            &self.layer2.w_e.data,
            &self.layer2.a,
            &self.fc_w.data,
            &self.fc_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.layer1.w.data,
            &mut self.layer1.w_e.data,
            &mut self.layer1.a,
            &mut self.layer2.w.data,
            &mut self.layer2.w_e.data,
            &mut self.layer2.a,
            &mut self.fc_w.data,
            &mut self.fc_b,
        ]
    }

    /// `self += s · other` over all trainable tensors.
    pub fn add_scaled(&mut self, s: f64, other: &ModelParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(dst, s, src);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Intermediate values of one attention layer.
#[derive(Clone, Debug)]
pub struct LayerCache {
    pub z: Mat,
    /// Pre-activation score per neighborhood entry.
    pub pre: Vec<f64>,
    /// Attention coefficient per neighborhood entry; sums to 1 per node.
    pub alpha: Vec<f64>,
    pub agg: Mat,
    pub out: Mat,
}

fn layer_forward(
    p: &GatLayerParams,
    z: Mat,
    g: &GraphInput,
    include_self: bool,
) -> Result<LayerCache, GnnError> {
    let d = p.d();
    let (a1, a2) = (&p.a[..d], &p.a[d..2 * d]);
    let c = p.edge_scores();
    let s: Vec<f64> = (0..g.n).map(|i| dot(a1, z.row(i))).collect();
    let r: Vec<f64> = (0..g.n).map(|i| dot(a2, z.row(i))).collect();
    let mut pre = vec![0.0; g.nbr.len()];
    let mut alpha = vec![0.0; g.nbr.len()];
    let mut agg = Mat::zeros(g.n, d);
    for i in 0..g.n {
        let range = g.entries(i);
        let mut max = f64::NEG_INFINITY;
        for k in range.clone() {
            let t = g.kind[k];
            let edge = if t == SELF_LOOP { 0.0 } else { c[t as usize] };
            pre[k] = s[i] + r[g.nbr[k] as usize] + edge;
            max = max.max(leaky(pre[k], p.leaky_slope));
        }
        let mut total = 0.0;
        for k in range.clone() {
            alpha[k] = (leaky(pre[k], p.leaky_slope) - max).exp();
            total += alpha[k];
        }
        let row = agg.row_mut(i);
        for k in range {
            alpha[k] /= total;
            if include_self || g.kind[k] != SELF_LOOP {
                axpy(row, alpha[k], z.row(g.nbr[k] as usize));
            }
        }
    }
    let out = Mat {
        rows: agg.rows,
        cols: agg.cols,
        data: agg.data.iter().map(|&x| elu(x)).collect(),
    };
    if !out.is_finite() {
        return Err(GnnError::NonFinite("attention layer"));
    }
    Ok(LayerCache {
        z,
        pre,
        alpha,
        agg,
        out,
    })
}

/// Gradient w.r.t. `z` and per-entry pre-activation scores; accumulates
/// the attention vector and edge-matrix gradients into `grad`.
fn layer_backward(
    p: &GatLayerParams,
    cache: &LayerCache,
    g: &GraphInput,
    g_out: &Mat,
    include_self: bool,
    grad: &mut GatLayerParams,
) -> (Mat, Vec<f64>) {
    let d = p.d();
    let (a1, a2, a3) = (&p.a[..d], &p.a[d..2 * d], &p.a[2 * d..]);
    let mut g_z = Mat::zeros(g.n, d);
    let mut g_pre = vec![0.0; g.nbr.len()];
    let mut g_s = vec![0.0; g.n];
    let mut g_r = vec![0.0; g.n];
    let mut g_c = [0.0; EDGE_TYPES];
    let mut g_agg = vec![0.0; d];
    let mut g_alpha: Vec<f64> = Vec::new();
    for i in 0..g.n {
        for (ga, (&go, &x)) in g_agg
            .iter_mut()
            .zip(g_out.row(i).iter().zip(cache.agg.row(i)))
        {
            *ga = go * elu_grad(x);
        }
        let range = g.entries(i);
        g_alpha.clear();
        for k in range.clone() {
            let j = g.nbr[k] as usize;
            if include_self || g.kind[k] != SELF_LOOP {
                axpy(g_z.row_mut(j), cache.alpha[k], &g_agg);
                g_alpha.push(dot(&g_agg, cache.z.row(j)));
            } else {
                g_alpha.push(0.0);
            }
        }
        let weighted: f64 = range
            .clone()
            .zip(&g_alpha)
            .map(|(k, ga)| cache.alpha[k] * ga)
            .sum();
        for (k, ga) in range.zip(&g_alpha) {
            let g_e = cache.alpha[k] * (ga - weighted);
            let gp = g_e * leaky_grad(cache.pre[k], p.leaky_slope);
            g_pre[k] = gp;
            g_s[i] += gp;
            g_r[g.nbr[k] as usize] += gp;
            if g.kind[k] != SELF_LOOP {
                g_c[g.kind[k] as usize] += gp;
            }
        }
    }
    for i in 0..g.n {
        let zi = cache.z.row(i);
        axpy(&mut grad.a[..d], g_s[i], zi);
        axpy(&mut grad.a[d..2 * d], g_r[i], zi);
        let row = g_z.row_mut(i);
        axpy(row, g_s[i], a1);
        axpy(row, g_r[i], a2);
    }
    for (t, &gc) in g_c.iter().enumerate() {
        if gc == 0.0 {
            continue;
        }
        let we = p.w_e.row(t).to_vec();
        axpy(&mut grad.a[2 * d..], gc, &we);
        axpy(grad.w_e.row_mut(t), gc, a3);
    }
    (g_z, g_pre)
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// First-layer transform of the distinct input rows.
    pub z1_rows: Mat,
    pub l1: LayerCache,
    pub h1: Mat,
    pub l2: LayerCache,
    pub pooled: Vec<f64>,
    /// Dropout scaling per pooled unit (1 in eval mode).
    pub mask: Vec<f64>,
    pub logits: [f64; CLASSES],
}

pub fn forward<R: Rng + ?Sized>(
    g: &GraphInput,
    params: &ModelParams,
    train_mode: bool,
    rng: &mut R,
) -> Result<ForwardCache, GnnError> {
    if g.n == 0 {
        return Err(GnnError::EmptyGraph);
    }
    let d1 = params.layer1.d();
    let z1_rows = g.rows.matmul(&params.layer1.w);
    let mut z1 = Mat::zeros(g.n, d1);
    for i in 0..g.n {
        z1.row_mut(i)
            .copy_from_slice(z1_rows.row(g.row_of[i] as usize));
    }
    let l1 = layer_forward(&params.layer1, z1, g, params.include_self)?;
    let h1 = Mat {
        rows: g.n,
        cols: d1,
        data: l1.out.data.iter().map(|&x| x.max(0.0)).collect(),
    };
    let z2 = h1.matmul(&params.layer2.w);
    let l2 = layer_forward(&params.layer2, z2, g, params.include_self)?;
    let d2 = params.layer2.d();
    let mut pooled = vec![0.0; d2];
    for i in 0..g.n {
        axpy(&mut pooled, 1.0 / g.n as f64, l2.out.row(i));
    }
    let mask: Vec<f64> = if train_mode && params.dropout > 0.0 {
        let keep = 1.0 - params.dropout;
        (0..d2)
            .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
            .collect()
    } else {
        vec![1.0; d2]
    };
    let mut logits = [0.0; CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        *l = params.fc_b[c]
            + (0..d2)
                .map(|k| pooled[k] * mask[k] * params.fc_w.data[k * CLASSES + c])
                .sum::<f64>();
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(GnnError::NonFinite("logits"));
    }
    Ok(ForwardCache {
        z1_rows,
        l1,
        h1,
        l2,
        pooled,
        mask,
        logits,
    })
}

/// Deterministic evaluation-mode logits.
pub fn predict(g: &GraphInput, params: &ModelParams) -> Result<[f64; CLASSES], GnnError> {
    // eval mode draws no randomness
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(g, params, false, &mut rng)?.logits)
}

pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|x| (x - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

pub fn cross_entropy(logits: &[f64; CLASSES], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Gradients from a seed on the logits back to the inputs.
struct Backward {
    /// Layer-1 `z` gradient per node; input saliency is this times `W1ᵀ`.
    g_z1: Mat,
    g_pre1: Vec<f64>,
    g_pre2: Vec<f64>,
}

fn backward(
    g: &GraphInput,
    params: &ModelParams,
    cache: &ForwardCache,
    g_logits: &[f64; CLASSES],
    grad: &mut ModelParams,
) -> Backward {
    let d2 = params.layer2.d();
    let mut g_pooled = vec![0.0; d2];
    for k in 0..d2 {
        let dropped = cache.pooled[k] * cache.mask[k];
        for c in 0..CLASSES {
            grad.fc_w.data[k * CLASSES + c] += dropped * g_logits[c];
            g_pooled[k] += params.fc_w.data[k * CLASSES + c] * g_logits[c];
        }
        g_pooled[k] *= cache.mask[k];
    }
    for c in 0..CLASSES {
        grad.fc_b[c] += g_logits[c];
    }
    let mut g_out2 = Mat::zeros(g.n, d2);
    for i in 0..g.n {
        axpy(g_out2.row_mut(i), 1.0 / g.n as f64, &g_pooled);
    }
    let (g_z2, g_pre2) = layer_backward(
        &params.layer2,
        &cache.l2,
        g,
        &g_out2,
        params.include_self,
        &mut grad.layer2,
    );
    grad.layer2.w.add_scaled(1.0, &cache.h1.matmul_tn(&g_z2));
    let mut g_out1 = g_z2.matmul_nt(&params.layer2.w);
    for (gv, &h) in g_out1.data.iter_mut().zip(&cache.h1.data) {
        // ReLU derivative taken as 0 at 0
        if h <= 0.0 {
            *gv = 0.0;
        }
    }
    let (g_z1, g_pre1) = layer_backward(
        &params.layer1,
        &cache.l1,
        g,
        &g_out1,
        params.include_self,
        &mut grad.layer1,
    );
    let mut g_z1_rows = Mat::zeros(g.rows.rows, g_z1.cols);
    for i in 0..g.n {
        axpy(g_z1_rows.row_mut(g.row_of[i] as usize), 1.0, g_z1.row(i));
    }
    grad.layer1.w.add_scaled(1.0, &g.rows.matmul_tn(&g_z1_rows));
    Backward {
        g_z1,
        g_pre1,
        g_pre2,
    }
}

/// Loss of one labeled graph and its gradient, scaled by `weight`.
pub fn graph_loss_and_grad<R: Rng + ?Sized>(
    g: &GraphInput,
    params: &ModelParams,
    train_mode: bool,
    rng: &mut R,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<f64, GnnError> {
    let label = g.label.ok_or_else(|| GnnError::Unlabeled(String::new()))?;
    let cache = forward(g, params, train_mode, rng)?;
    let p = softmax(&cache.logits);
    let mut g_logits = [0.0; CLASSES];
    for c in 0..CLASSES {
        g_logits[c] = weight * (p[c] - f64::from(u8::from(c == label)));
    }
    backward(g, params, &cache, &g_logits, grad);
    Ok(weight * cross_entropy(&cache.logits, label))
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad<R: Rng + ?Sized>(
    batch: &[&GraphInput],
    params: &ModelParams,
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, ModelParams), GnnError> {
    let mut grad = params.zeros_like();
    let w = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for g in batch {
        loss += graph_loss_and_grad(g, params, train_mode, rng, w, &mut grad)?;
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub predicted: usize,
    pub node_scores: Vec<f64>,
    pub edge_scores: Vec<f64>,
}

/// L2 norm of the predicted-class logit's gradient w.r.t. each node's and
/// each edge's features. Edges hidden by `mode` score zero.
pub fn saliency(g: &GraphInput, params: &ModelParams) -> Result<SaliencyMap, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = forward(g, params, false, &mut rng)?;
    let predicted = usize::from(cache.logits[1] > cache.logits[0]);
    let mut seed = [0.0; CLASSES];
    seed[predicted] = 1.0;
    let mut scratch = params.zeros_like();
    let b = backward(g, params, &cache, &seed, &mut scratch);
    let g_x = b.g_z1.matmul_nt(&params.layer1.w);
    let node_scores = (0..g.n).map(|i| l2(g_x.row(i))).collect();
    let dir1 = params.layer1.edge_feature_direction();
    let dir2 = params.layer2.edge_feature_direction();
    let mut edge_grad = vec![[0.0; EDGE_TYPES]; g.edge_count];
    for k in 0..g.nbr.len() {
        if g.kind[k] == SELF_LOOP {
            continue;
        }
        let e = &mut edge_grad[g.edge_of[k] as usize];
        for t in 0..EDGE_TYPES {
            e[t] += b.g_pre1[k] * dir1[t] + b.g_pre2[k] * dir2[t];
        }
    }
    let edge_scores = edge_grad.iter().map(|v| l2(v)).collect();
    Ok(SaliencyMap {
        predicted,
        node_scores,
        edge_scores,
    })
}

/// Attention coefficients of both layers, for inspection and tests.
pub fn attention(g: &GraphInput, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>), GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = forward(g, params, false, &mut rng)?;
    Ok((c.l1.alpha, c.l2.alpha))
}

/// Output of the first attention layer (before the inter-layer ReLU).
pub fn first_layer_output(g: &GraphInput, params: &ModelParams) -> Result<Mat, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(g, params, false, &mut rng)?.l1.out)
}

//! Random graphs and the numeric checks on the attention model.

use crbg_core::crbg::{Crbg, CrbgEdge, CrbgNode, EdgeType, GraphLabel, NodeFeaturizer};
use crbg_core::evm::opcode_vocabulary;
use crbg_core::gnn::{
    attention, cross_entropy, forward, loss_and_grad, predict, GraphInput, Mode, ModelParams,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_graph(n: usize, m: usize, seed: u64, label: GraphLabel) -> Crbg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = opcode_vocabulary().entries();
    let f = NodeFeaturizer::standard();
    let nodes = (0..n)
        .map(|i| {
            let op = if rng.gen_bool(0.1) {
                None
            } else {
                Some(vocab[rng.gen_range(0..vocab.len())].value)
            };
            CrbgNode {
                id: i as u32,
                opcode: op,
                feat: f.row(op).unwrap(),
            }
        })
        .collect();
    let edges = (0..m)
        .map(|_| {
            let kind = EdgeType::ALL[rng.gen_range(0..15)];
            CrbgEdge {
                src: rng.gen_range(0..n) as u32,
                dst: rng.gen_range(0..n) as u32,
                kind,
                feat: kind.one_hot().to_vec(),
            }
        })
        .collect();
    Crbg {
        name: format!("g{seed}"),
        nodes,
        edges,
        label,
    }
}

pub fn small_params(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(8, seed);
    p.dropout = 0.0;
    p
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Signs of every piecewise-linear activation input; a central difference is
/// only meaningful when the perturbation leaves this pattern unchanged.
pub fn kink_pattern(g: &GraphInput, p: &ModelParams) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = forward(g, p, false, &mut rng).unwrap();
    c.l1.pre
        .iter()
        .chain(&c.l2.pre)
        .chain(&c.l1.agg.data)
        .map(|&x| x > 0.0)
        .collect()
}

/// Relabels nodes: `perm[old] = new`.
pub fn permuted(g: &Crbg, perm: &[usize]) -> Crbg {
    let mut nodes = g.nodes.clone();
    for (old, n) in g.nodes.iter().enumerate() {
        nodes[perm[old]] = CrbgNode {
            id: perm[old] as u32,
            ..n.clone()
        };
    }
    let edges = g
        .edges
        .iter()
        .map(|e| CrbgEdge {
            src: perm[e.src as usize] as u32,
            dst: perm[e.dst as usize] as u32,
            ..e.clone()
        })
        .collect();
    Crbg {
        nodes,
        edges,
        ..g.clone()
    }
}

/// Largest deviation of an attention row sum from 1 over random graphs.
pub fn check_attention_rows() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let g = GraphInput::from_crbg(&random_graph(30, 80, seed, GraphLabel::Benign), Mode::DfCf);
        let (a1, a2) = attention(&g, &ModelParams::init(16, seed)).map_err(|e| e.to_string())?;
        for alpha in [a1, a2] {
            for i in 0..g.n {
                let s: f64 = g.entries(i).map(|k| alpha[k]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    ensure!(worst < 1e-6, "attention row sum off by {worst}");
    Ok(worst)
}

/// Worst relative error of analytic against central-difference gradients
/// over every parameter of three random 10-node graphs.
///
/// Coordinates whose ±ε step moves an activation input across 0 measure the
/// kink rather than the gradient; they are rechecked with a much smaller
/// step and must stay rare.
pub fn check_gradients() -> Result<f64, String> {
    let eps = 1e-4;
    let mut overall: f64 = 0.0;
    for seed in 0..3 {
        let graph = random_graph(
            10,
            24,
            100 + seed,
            if seed % 2 == 0 {
                GraphLabel::Ponzi
            } else {
                GraphLabel::Benign
            },
        );
        let g = GraphInput::from_crbg(&graph, Mode::DfCf);
        let params = small_params(seed);
        let base = kink_pattern(&g, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, grad) =
            loss_and_grad(&[&g], &params, false, &mut rng).map_err(|e| e.to_string())?;
        let loss_at = |p: &ModelParams| cross_entropy(&predict(&g, p).unwrap(), g.label.unwrap());
        let (mut worst, mut checked, mut straddling) = (0.0f64, 0usize, 0usize);
        for t in 0..8 {
            for idx in 0..params.tensors()[t].len() {
                let shifted = |h: f64| {
                    let mut q = params.clone();
                    q.tensors_mut()[t][idx] += h;
                    q
                };
                let (plus, minus) = (shifted(eps), shifted(-eps));
                let analytic = grad.tensors()[t][idx];
                if kink_pattern(&g, &plus) != base || kink_pattern(&g, &minus) != base {
                    straddling += 1;
                    let h = 1e-7;
                    let numeric = (loss_at(&shifted(h)) - loss_at(&shifted(-h))) / (2.0 * h);
                    let err = relative_error(analytic, numeric);
                    ensure!(
                        err <= 1e-3,
                        "graph {seed}: tensor {t}[{idx}] near a kink, relative error {err}"
                    );
                    continue;
                }
                checked += 1;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
                worst = worst.max(relative_error(analytic, numeric));
            }
        }
        ensure!(worst <= 1e-3, "graph {seed}: worst relative error {worst}");
        ensure!(
            straddling * 50 < checked,
            "graph {seed}: {straddling} of {checked} coordinates straddle a kink"
        );
        overall = overall.max(worst);
    }
    Ok(overall)
}

/// Largest eval-mode logit change under random node relabelings.
pub fn check_permutation_invariance() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let g = random_graph(40, 90, 200 + seed, GraphLabel::Benign);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut rng);
        let p = ModelParams::init(16, seed);
        let a = predict(&GraphInput::from_crbg(&g, Mode::DfCf), &p).map_err(|e| e.to_string())?;
        let b = predict(&GraphInput::from_crbg(&permuted(&g, &perm), Mode::DfCf), &p)
            .map_err(|e| e.to_string())?;
        for c in 0..2 {
            worst = worst.max((a[c] - b[c]).abs());
        }
    }
    ensure!(worst < 1e-6, "logits moved by {worst} under relabeling");
    Ok(worst)
}

use super::graph::{RawGraph, EDGE_TYPES};
use crate::evm::{op, opcode_vocabulary, VOCAB_SIZE};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.95;

fn is_comparison(opcode: u8) -> bool {
    matches!(opcode, op::LT | op::GT | op::EQ | op::SLT | op::SGT)
}

/// Contains both CALLVALUE and CALLER.
pub fn is_investment_like(g: &RawGraph) -> bool {
    g.contains_opcode(op::CALLVALUE) && g.contains_opcode(op::CALLER)
}

/// Some comparison consumes tainted data that was read back from storage.
pub fn is_reward_like(g: &RawGraph) -> bool {
    let cmp_node = |i: u32| g.nodes[i as usize].opcode.is_some_and(is_comparison);
    let local = g
        .edges
        .iter()
        .any(|e| e.kind.is_data() && e.through_storage && cmp_node(e.dst));
    let inbound = g.inbound.iter().any(|e| {
        e.through_storage
            && g.nodes.iter().any(|n| {
                n.tx_index == e.sink_tx
                    && n.step_index == e.sink_step
                    && n.opcode.is_some_and(is_comparison)
            })
    });
    local || inbound
}

/// Keeps graphs that write storage and look like an investment or a reward.
pub fn prune_behavioral(graphs: Vec<RawGraph>) -> Vec<RawGraph> {
    graphs
        .into_iter()
        .filter(|g| g.contains_opcode(op::SSTORE) && (is_investment_like(g) || is_reward_like(g)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSignature {
    pub node_hist: Vec<f64>,
    pub edge_hist: [f64; EDGE_TYPES],
}

impl GraphSignature {
    pub fn of(g: &RawGraph) -> Self {
        let vocab = opcode_vocabulary();
        let mut node_hist = vec![0.0; VOCAB_SIZE];
        for n in &g.nodes {
            if let Some(i) = n.opcode.and_then(|o| vocab.index_of(o)) {
                node_hist[i] += 1.0;
            }
        }
        let mut edge_hist = [0.0; EDGE_TYPES];
        for e in &g.edges {
            edge_hist[e.kind.index()] += 1.0;
        }
        GraphSignature {
            node_hist,
            edge_hist,
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.node_hist.iter().chain(self.edge_hist.iter()).copied()
    }

    pub fn cosine(&self, other: &GraphSignature) -> f64 {
        let dot: f64 = self.values().zip(other.values()).map(|(a, b)| a * b).sum();
        let na: f64 = self.values().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.values().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return if na == nb { 1.0 } else { 0.0 };
        }
        dot / (na * nb)
    }
}

/// Greedy scan: keep a graph only if it is below `threshold` similarity to
/// every graph kept so far.
pub fn prune_similar(graphs: Vec<RawGraph>, threshold: f64) -> Vec<RawGraph> {
    assert!(
        threshold > 0.0 && threshold <= 1.0,
        "threshold must lie in (0, 1]"
    );
    let mut kept: Vec<(RawGraph, GraphSignature)> = Vec::new();
    for g in graphs {
        let sig = GraphSignature::of(&g);
        if kept.iter().all(|(_, k)| sig.cosine(k) < threshold) {
            kept.push((g, sig));
        }
    }
    kept.into_iter().map(|(g, _)| g).collect()
}

/// Count of control-flow edges, for accounting checks.
pub fn control_edge_count(g: &RawGraph) -> usize {
    g.edges.iter().filter(|e| e.kind.is_control()).count()
}

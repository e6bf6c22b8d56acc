//! The shipped corpus and the structural checks on its graphs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use crbg_core::crbg::{
    build_raw_graph, control_edge_count, is_weakly_connected, prune_behavioral, prune_similar,
    EdgeType, RawGraph, EDGE_TYPES, NODE_DIM,
};
use crbg_core::evm::opcode_vocabulary;
use crbg_core::pipeline::{
    build_contract_graph, contract_paths, load_contract, ContractRun, ContractSource,
    PipelineConfig,
};
use rayon::prelude::*;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn contract(rel: &str) -> ContractSource {
    load_contract(&corpus_dir().join(rel)).unwrap()
}

/// Every `.asm` contract under `corpus/`, sorted by path.
pub fn corpus() -> Vec<ContractSource> {
    contract_paths(&corpus_dir())
        .unwrap()
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "asm"))
        .map(|p| load_contract(p).unwrap())
        .collect()
}

pub fn runs(config: &PipelineConfig) -> Vec<(ContractSource, ContractRun)> {
    corpus()
        .into_par_iter()
        .map(|c| {
            let run =
                build_contract_graph(&c, config).unwrap_or_else(|e| panic!("{}: {e}", c.name));
            (c, run)
        })
        .collect()
}

pub fn raw_graphs(run: &ContractRun) -> Vec<RawGraph> {
    run.executed
        .iter()
        .filter(|e| !e.trace.steps.is_empty())
        .map(|e| build_raw_graph(&e.trace, &e.events, e.meta.clone()).unwrap())
        .collect()
}

fn tx_indices(gs: &[RawGraph]) -> Vec<u32> {
    gs.iter().map(|g| g.tx_meta[0].tx_index).collect()
}

fn is_subsequence(sub: &[u32], of: &[u32]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

fn size(gs: &[RawGraph]) -> (usize, usize) {
    (
        gs.iter().map(|g| g.nodes.len()).sum(),
        gs.iter().map(|g| g.edges.len()).sum(),
    )
}

/// Feature shapes, control-edge accounting, stack effects, pruning and join
/// invariants for one contract's run.
pub fn check_structure(name: &str, run: &ContractRun, threshold: f64) -> Result<(), String> {
    let vocab = opcode_vocabulary();
    let g = &run.crbg;
    ensure!(
        g.nodes.iter().all(|n| n.feat.len() == NODE_DIM),
        "{name}: node feature is not {NODE_DIM}-d"
    );
    for e in &g.edges {
        ensure!(
            e.feat.len() == EDGE_TYPES,
            "{name}: edge feature is not {EDGE_TYPES}-d"
        );
        ensure!(
            e.feat == e.kind.one_hot().to_vec(),
            "{name}: edge {}->{} row is not one-hot",
            e.src,
            e.dst
        );
    }

    let raw = raw_graphs(run);
    for (ex, rg) in run
        .executed
        .iter()
        .filter(|e| !e.trace.steps.is_empty())
        .zip(&raw)
    {
        let tx = ex.meta.tx_index;
        ensure!(
            control_edge_count(rg) == ex.trace.steps.len(),
            "{name}: tx {tx} control edges"
        );
        let steps = &ex.trace.steps;
        for (k, s) in steps.iter().enumerate() {
            if s.fault.is_some() {
                continue;
            }
            let info = vocab.get(s.opcode).unwrap();
            let after = s.stack_before as usize - info.delta as usize + info.alpha as usize;
            let next_in_frame = steps[k + 1..]
                .iter()
                .take_while(|n| n.depth >= s.depth)
                .find(|n| n.depth == s.depth);
            if let Some(n) = next_in_frame {
                ensure!(
                    n.stack_before as usize == after,
                    "{name}: tx {tx} step {k} ({}) stack depth",
                    info.mnemonic
                );
            }
        }
    }

    let behavioral = prune_behavioral(raw.clone());
    ensure!(
        is_subsequence(&tx_indices(&behavioral), &tx_indices(&raw)),
        "{name}: behavioral pruning reordered"
    );
    ensure!(
        run.stats.fallback == behavioral.is_empty(),
        "{name}: fallback flag"
    );
    let base = if behavioral.is_empty() {
        raw.clone()
    } else {
        behavioral.clone()
    };
    let similar = prune_similar(base.clone(), threshold);
    ensure!(
        is_subsequence(&tx_indices(&similar), &tx_indices(&base)),
        "{name}: similarity pruning reordered"
    );
    let ((n0, e0), (n1, e1), (nb, eb), (n2, e2)) =
        (size(&raw), size(&behavioral), size(&base), size(&similar));
    ensure!(
        n1 <= n0 && e1 <= e0,
        "{name}: behavioral pruning grew the graphs"
    );
    ensure!(
        n2 <= nb && e2 <= eb,
        "{name}: similarity pruning grew the graphs"
    );
    ensure!(
        similar.len() == run.stats.retained,
        "{name}: retained count"
    );

    let joined = &run.joined;
    ensure!(
        is_weakly_connected(joined),
        "{name}: joined graph is disconnected"
    );
    let connections = joined
        .edges
        .iter()
        .filter(|e| e.kind == EdgeType::Connection)
        .count();
    ensure!(
        connections + 1 == run.stats.retained,
        "{name}: {connections} Connection edges for {} graphs",
        run.stats.retained
    );
    let kept: BTreeSet<u32> = tx_indices(&similar).into_iter().collect();
    ensure!(
        joined.nodes.iter().all(|n| kept.contains(&n.tx_index)),
        "{name}: node from a pruned transaction"
    );
    ensure!(
        joined.nodes.len() == g.nodes.len() && joined.edges.len() == g.edges.len(),
        "{name}: featurizing changed the size"
    );
    Ok(())
}

/// Structural checks over the whole corpus at each threshold; returns the
/// number of graphs checked.
pub fn check_corpus(thresholds: &[f64]) -> Result<usize, String> {
    let mut n = 0;
    for &threshold in thresholds {
        let config = PipelineConfig {
            similarity_threshold: threshold,
            ..Default::default()
        };
        for (c, run) in runs(&config) {
            check_structure(&c.name, &run, threshold)?;
            n += 1;
        }
    }
    Ok(n)
}

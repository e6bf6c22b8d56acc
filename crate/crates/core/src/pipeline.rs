//! End-to-end orchestration: contracts in, behavior graphs and verdicts out.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crbg::{
    build_raw_graph, featurize, join_graphs, prune_behavioral, prune_similar, Crbg, GraphError,
    GraphLabel, NodeFeaturizer, RawGraph, TxMeta, DEFAULT_SIMILARITY_THRESHOLD,
};
use crate::evm::word::keccak256;
use crate::evm::{
    assemble, disassemble, execute_transaction, execute_transaction_with, opcode_vocabulary,
    Address, AsmError, Bytecode, ExecutionTrace, TxEnv, World, DEFAULT_STEP_LIMIT, U256,
    VOCAB_SIZE,
};
use crate::gnn::{ponzi_probability, GraphInput, Mode, ModelParams, TrainConfig};
use crate::taint::{DataFlowEvent, TaintEngine, TaintError};
use crate::txgen::{
    build_dependency_map, categorize, derive_manifest, generate_sequences, GeneratorConfig,
    Interface, Manifest, ManifestError, TxSequence, DEFAULT_BASE_VALUE, DEFAULT_MAX_SEQUENCES,
    DEFAULT_POOL_SIZE,
};

/// Address the contract under analysis is deployed at.
pub fn contract_address() -> Address {
    Address::synthetic(0xc0de)
}

const BASE_TIMESTAMP: u64 = 1_600_000_000;
const BASE_BLOCK: u64 = 10_000_000;
const BLOCK_INTERVAL: u64 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub max_sequences: usize,
    pub similarity_threshold: f64,
    pub step_limit: usize,
    pub base_value: U256,
    pub pool_size: usize,
    /// Replaces the keyword list of every manifest when non-empty.
    pub keywords: Vec<String>,
    pub mode: Mode,
    pub train: TrainConfig,
    pub folds: usize,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            output: PathBuf::from("out"),
            seed: 0,
            max_sequences: DEFAULT_MAX_SEQUENCES,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            step_limit: DEFAULT_STEP_LIMIT,
            base_value: U256::from(DEFAULT_BASE_VALUE),
            pool_size: DEFAULT_POOL_SIZE,
            keywords: Vec::new(),
            mode: Mode::DfCf,
            train: TrainConfig::default(),
            folds: 5,
            workers: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(format!(
                "similarity_threshold {} outside (0, 1]",
                self.similarity_threshold
            ));
        }
        if self.max_sequences == 0 {
            return Err("max_sequences must be positive".into());
        }
        if self.step_limit == 0 {
            return Err("step_limit must be positive".into());
        }
        if self.pool_size == 0 {
            return Err("pool_size must be positive".into());
        }
        if self.folds < 2 {
            return Err("folds must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.train.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.train.dropout));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err("learning rate must be positive".into());
        }
        if self.train.hidden == 0 {
            return Err("hidden width must be positive".into());
        }
        Ok(())
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            max_sequences: self.max_sequences,
            base_value: self.base_value,
            pool_size: self.pool_size,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Asm { path: PathBuf, source: AsmError },
    #[error("{path}: not valid hex bytecode")]
    Hex { path: PathBuf },
    #[error("{0}")]
    Manifest(#[from] ManifestError),
    #[error("taint engine: {0}")]
    Taint(#[from] TaintError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("features: {0}")]
    Feature(#[from] crate::crbg::FeatureError),
    #[error("model: {0}")]
    Model(#[from] crate::gnn::GnnError),
    #[error("no executed transactions produced a graph")]
    NoGraph,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct ContractSource {
    pub name: String,
    pub label: GraphLabel,
    pub code: Bytecode,
    pub interface: Option<Interface>,
}

fn label_from_dir(path: &Path) -> GraphLabel {
    match path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
    {
        Some("ponzi") => GraphLabel::Ponzi,
        Some("benign") => GraphLabel::Benign,
        _ => GraphLabel::Unlabeled,
    }
}

/// Reads `<name>.asm` (assembler) or `<name>.hex` (bytecode) plus an
/// optional interface file `<name>.json` next to it.
pub fn load_contract(path: &Path) -> Result<ContractSource, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let code = match path.extension().and_then(|e| e.to_str()) {
        Some("hex") => Bytecode::from_hex(text.trim()).ok_or_else(|| PipelineError::Hex {
            path: path.to_path_buf(),
        })?,
        _ => assemble(&text).map_err(|source| PipelineError::Asm {
            path: path.to_path_buf(),
            source,
        })?,
    };
    let iface_path = path.with_extension("json");
    let interface = if iface_path.exists() {
        let t = fs::read_to_string(&iface_path).map_err(io_err(&iface_path))?;
        Some(Interface::from_json(&t)?)
    } else {
        None
    };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("contract")
        .to_string();
    let label = match interface.as_ref().and_then(|i| i.label.as_deref()) {
        Some("ponzi") => GraphLabel::Ponzi,
        Some("benign") => GraphLabel::Benign,
        _ => label_from_dir(path),
    };
    Ok(ContractSource {
        name,
        label,
        code,
        interface,
    })
}

/// Contract files under `path` (a file, or a directory searched recursively),
/// sorted by path.
pub fn contract_paths(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = entry.map_err(io_err(&dir))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("asm" | "hex")) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn analyze(
    contract: &ContractSource,
    config: &PipelineConfig,
) -> Result<Manifest, PipelineError> {
    let mut m = derive_manifest(&contract.code, contract.interface.as_ref())?;
    if m.contract_name == "contract" {
        m.contract_name = contract.name.clone();
    }
    if !config.keywords.is_empty() {
        m.keyword_list = config.keywords.clone();
    }
    Ok(m)
}

pub fn generate(
    manifest: &Manifest,
    config: &PipelineConfig,
) -> Result<Vec<TxSequence>, PipelineError> {
    let groups = categorize(manifest)?;
    let dep = build_dependency_map(manifest);
    Ok(generate_sequences(manifest, &groups, &dep, &config.generator(), config.seed).sequences)
}

/// One executed transaction with its taint events.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExecutedTx {
    pub meta: TxMeta,
    pub trace: ExecutionTrace,
    pub events: Vec<DataFlowEvent>,
}

pub fn initial_world(
    contract: &ContractSource,
    manifest: &Manifest,
) -> Result<World, PipelineError> {
    let mut world = World::default();
    let me = contract_address();
    world.deploy(me, contract.code.clone());
    world.account_mut(me).balance = manifest.initial_balance_wei()?;
    for (slot, value) in manifest.initial_storage_words()? {
        if !value.is_zero() {
            world.account_mut(me).storage.insert(slot, value);
        }
    }
    Ok(world)
}

fn tx_env(seq_tx: &crate::txgen::Transaction, global_index: u64) -> TxEnv {
    let mut env = TxEnv::new(seq_tx.caller, contract_address());
    env.value = seq_tx.value;
    env.calldata = seq_tx.calldata.clone();
    env.block_number = BASE_BLOCK + global_index;
    env.timestamp = BASE_TIMESTAMP + BLOCK_INTERVAL * global_index;
    env.block_hash = U256::from_big_endian(&keccak256(&env.block_number.to_be_bytes()));
    env
}

/// Runs every sequence from a fresh deployment under the taint engine.
/// Transaction indices are global across sequences.
pub fn execute_sequences(
    contract: &ContractSource,
    manifest: &Manifest,
    sequences: &[TxSequence],
    step_limit: usize,
) -> Result<Vec<ExecutedTx>, PipelineError> {
    let mut out = Vec::new();
    let mut global = 0u32;
    for seq in sequences {
        let mut world = initial_world(contract, manifest)?;
        let mut engine = TaintEngine::new();
        for tx in &seq.txs {
            engine.begin_transaction(global);
            let env = tx_env(tx, global as u64);
            let ex = execute_transaction_with(
                &mut world,
                &env,
                &contract.code,
                step_limit,
                &mut engine,
            )?;
            let meta = TxMeta {
                tx_index: global,
                selector: tx.selector,
                value: tx.value,
                caller: tx.caller,
                outcome: ex.trace.outcome,
            };
            out.push(ExecutedTx {
                meta,
                trace: ex.trace,
                events: engine.take_events(),
            });
            global += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub raw_graphs: usize,
    pub after_behavioral: usize,
    pub retained: usize,
    /// Behavioral pruning removed everything and raw graphs were used instead.
    pub fallback: bool,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Clone, Debug)]
pub struct ContractRun {
    pub manifest: Manifest,
    pub sequences: Vec<TxSequence>,
    pub executed: Vec<ExecutedTx>,
    pub joined: RawGraph,
    pub crbg: Crbg,
    pub stats: GraphStats,
}

/// Prunes, joins and featurizes the per-transaction graphs of one contract.
pub fn graph_from_executions(
    name: &str,
    label: GraphLabel,
    executed: &[ExecutedTx],
    threshold: f64,
) -> Result<(RawGraph, Crbg, GraphStats), PipelineError> {
    let raw: Vec<RawGraph> = executed
        .iter()
        .filter(|e| !e.trace.steps.is_empty())
        .map(|e| build_raw_graph(&e.trace, &e.events, e.meta.clone()))
        .collect::<Result<_, _>>()?;
    if raw.is_empty() {
        return Err(PipelineError::NoGraph);
    }
    let raw_graphs = raw.len();
    let behavioral = prune_behavioral(raw.clone());
    let after_behavioral = behavioral.len();
    let fallback = behavioral.is_empty();
    let retained = prune_similar(if fallback { raw } else { behavioral }, threshold);
    let cross: Vec<DataFlowEvent> = executed
        .iter()
        .flat_map(|e| e.events.iter().copied())
        .filter(|e| e.is_cross_tx())
        .collect();
    let joined = join_graphs(&retained, &cross)?;
    let crbg = featurize(&joined, NodeFeaturizer::standard(), name, label)?;
    let stats = GraphStats {
        raw_graphs,
        after_behavioral,
        retained: retained.len(),
        fallback,
        nodes: crbg.nodes.len(),
        edges: crbg.edges.len(),
    };
    Ok((joined, crbg, stats))
}

pub fn build_contract_graph(
    contract: &ContractSource,
    config: &PipelineConfig,
) -> Result<ContractRun, PipelineError> {
    let manifest = analyze(contract, config)?;
    let sequences = generate(&manifest, config)?;
    let executed = execute_sequences(contract, &manifest, &sequences, config.step_limit)?;
    let (joined, crbg, stats) = graph_from_executions(
        &contract.name,
        contract.label,
        &executed,
        config.similarity_threshold,
    )?;
    Ok(ContractRun {
        manifest,
        sequences,
        executed,
        joined,
        crbg,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub contract: String,
    /// Probability of the Ponzi class; absent when no model was supplied.
    pub probability: Option<f64>,
    pub predicted: Option<GraphLabel>,
    pub stats: GraphStats,
}

pub fn classify(
    crbg: &Crbg,
    params: &ModelParams,
    mode: Mode,
) -> Result<(f64, GraphLabel), PipelineError> {
    let p = ponzi_probability(&GraphInput::from_crbg(crbg, mode), params)?;
    Ok((
        p,
        if p > 0.5 {
            GraphLabel::Ponzi
        } else {
            GraphLabel::Benign
        },
    ))
}

pub struct PipelineOutput {
    pub verdicts: Vec<Verdict>,
    pub graphs: Vec<Crbg>,
    pub failures: Vec<(String, String)>,
}

/// Builds graphs for all contracts in parallel, classifying each when a
/// model is given. Per-contract failures are collected, not fatal.
pub fn run_pipeline(
    contracts: &[ContractSource],
    config: &PipelineConfig,
    model: Option<&ModelParams>,
) -> PipelineOutput {
    let results: Vec<Result<(Verdict, Crbg), PipelineError>> = contracts
        .par_iter()
        .map(|c| {
            let run = build_contract_graph(c, config)?;
            let (probability, predicted) = match model {
                Some(m) => {
                    let (p, l) = classify(&run.crbg, m, config.mode)?;
                    (Some(p), Some(l))
                }
                None => (None, None),
            };
            Ok((
                Verdict {
                    contract: c.name.clone(),
                    probability,
                    predicted,
                    stats: run.stats,
                },
                run.crbg,
            ))
        })
        .collect();
    let mut out = PipelineOutput {
        verdicts: Vec::new(),
        graphs: Vec::new(),
        failures: Vec::new(),
    };
    for (c, r) in contracts.iter().zip(results) {
        match r {
            Ok((v, g)) => {
                out.verdicts.push(v);
                out.graphs.push(g);
            }
            Err(e) => {
                log::warn!("{}: {e}", c.name);
                out.failures.push((c.name.clone(), e.to_string()));
            }
        }
    }
    out
}

/// Dataset path of a graph record: `<root>/{ponzi,benign,unlabeled}/<name>.graph`.
pub fn graph_path(root: &Path, g: &Crbg) -> PathBuf {
    let class = match g.label {
        GraphLabel::Ponzi => "ponzi",
        GraphLabel::Benign => "benign",
        GraphLabel::Unlabeled => "unlabeled",
    };
    root.join(class).join(format!("{}.graph", g.name))
}

pub fn write_graph(root: &Path, g: &Crbg) -> Result<PathBuf, PipelineError> {
    let path = graph_path(root, g);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(&path, g.to_record()).map_err(io_err(&path))?;
    Ok(path)
}

/// Reads every `.graph` record under `root`, sorted by path.
pub fn read_dataset(root: &Path) -> Result<Vec<Crbg>, PipelineError> {
    let mut paths = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = entry.map_err(io_err(&dir))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|e| e.to_str()) == Some("graph") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let t = fs::read_to_string(p).map_err(io_err(p))?;
            Crbg::from_record(&t).map_err(|e| PipelineError::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            })
        })
        .collect()
}

/// Static opcode distribution over the vocabulary (unknown bytes ignored).
pub fn opcode_frequency(code: &Bytecode) -> Vec<f64> {
    let vocab = opcode_vocabulary();
    let mut counts = vec![0.0; VOCAB_SIZE];
    for ins in disassemble(code) {
        if let Some(i) = ins.info.and_then(|info| vocab.index_of(info.value)) {
            counts[i] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

pub const KL_EPSILON: f64 = 1e-9;

fn smooth(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().map(|x| x + KL_EPSILON).sum();
    p.iter().map(|x| (x + KL_EPSILON) / s).collect()
}

/// KL(p‖q) after add-ε smoothing and renormalization.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let (p, q) = (smooth(p), smooth(q));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// One benchmark unit: a transaction sequence replayed from its start state.
#[derive(Clone, Debug)]
pub struct BenchSequence {
    pub world: World,
    pub code: Bytecode,
    pub txs: Vec<TxEnv>,
}

pub fn bench_workload(contracts: &[ContractSource], config: &PipelineConfig) -> Vec<BenchSequence> {
    let mut out = Vec::new();
    for c in contracts {
        let Ok(manifest) = analyze(c, config) else {
            continue;
        };
        let Ok(sequences) = generate(&manifest, config) else {
            continue;
        };
        let Ok(world) = initial_world(c, &manifest) else {
            continue;
        };
        let mut global = 0u64;
        for seq in &sequences {
            let txs = seq
                .txs
                .iter()
                .map(|t| {
                    global += 1;
                    tx_env(t, global - 1)
                })
                .collect();
            out.push(BenchSequence {
                world: world.clone(),
                code: c.code.clone(),
                txs,
            });
        }
    }
    out
}

fn replay(work: &[BenchSequence], step_limit: usize, taint: bool) -> Result<usize, TaintError> {
    let mut steps = 0;
    for seq in work {
        let mut world = seq.world.clone();
        let mut engine = TaintEngine::new();
        for (i, tx) in seq.txs.iter().enumerate() {
            let ex = if taint {
                engine.begin_transaction(i as u32);
                execute_transaction_with(&mut world, tx, &seq.code, step_limit, &mut engine)?
            } else {
                execute_transaction(&mut world, tx, &seq.code, step_limit)
            };
            steps += ex.trace.steps.len();
        }
    }
    Ok(steps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub sequences: usize,
    pub steps_per_run: usize,
    pub taint_on_secs: Vec<f64>,
    pub taint_off_secs: Vec<f64>,
    pub mean_on: f64,
    pub mean_off: f64,
    /// mean_on / mean_off
    pub ratio: f64,
    /// Coefficient of variation of the per-repetition ratios.
    pub ratio_cv: f64,
}

/// Times identical workloads with and without taint tracking, alternating
/// the order each repetition.
pub fn overhead_benchmark(
    work: &[BenchSequence],
    repetitions: usize,
    step_limit: usize,
) -> Result<BenchReport, TaintError> {
    assert!(repetitions >= 3, "at least three repetitions");
    // warm caches and allocator once for each variant
    let steps = replay(work, step_limit, false)?;
    replay(work, step_limit, true)?;
    let (mut on, mut off) = (Vec::new(), Vec::new());
    for r in 0..repetitions {
        let time = |taint: bool| -> Result<f64, TaintError> {
            let t = Instant::now();
            std::hint::black_box(replay(work, step_limit, taint)?);
            Ok(t.elapsed().as_secs_f64())
        };
        if r % 2 == 0 {
            off.push(time(false)?);
            on.push(time(true)?);
        } else {
            on.push(time(true)?);
            off.push(time(false)?);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratios: Vec<f64> = on.iter().zip(&off).map(|(a, b)| a / b).collect();
    let rm = mean(&ratios);
    let ratio_cv =
        (ratios.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt() / rm;
    let (mean_on, mean_off) = (mean(&on), mean(&off));
    Ok(BenchReport {
        repetitions,
        sequences: work.len(),
        steps_per_run: steps,
        taint_on_secs: on,
        taint_off_secs: off,
        mean_on,
        mean_off,
        ratio: mean_on / mean_off,
        ratio_cv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub element: String,
    pub id: usize,
    pub label: String,
    pub score: f64,
}

/// Node and edge saliency rows labeled by opcode and edge type.
pub fn export_heatmap(
    saliency: &crate::gnn::SaliencyMap,
    g: &Crbg,
    sorted: bool,
) -> Vec<HeatmapRow> {
    assert_eq!(
        saliency.node_scores.len(),
        g.nodes.len(),
        "saliency does not match graph"
    );
    assert_eq!(
        saliency.edge_scores.len(),
        g.edges.len(),
        "saliency does not match graph"
    );
    let vocab = opcode_vocabulary();
    let mut rows: Vec<HeatmapRow> = g
        .nodes
        .iter()
        .zip(&saliency.node_scores)
        .map(|(n, &score)| HeatmapRow {
            element: "node".into(),
            id: n.id as usize,
            label: n
                .opcode
                .and_then(|o| vocab.get(o))
                .map(|i| i.mnemonic.clone())
                .unwrap_or_else(|| "SENTINEL".into()),
            score,
        })
        .collect();
    rows.extend(
        g.edges
            .iter()
            .zip(&saliency.edge_scores)
            .enumerate()
            .map(|(i, (e, &score))| HeatmapRow {
                element: "edge".into(),
                id: i,
                label: format!("{}->{}:{}", e.src, e.dst, e.kind),
                score,
            }),
    );
    if sorted {
        rows.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    rows
}

pub fn heatmap_tsv(rows: &[HeatmapRow]) -> String {
    let mut s = String::from("element\tid\tlabel\tscore\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:e}\n",
            r.element, r.id, r.label, r.score
        ));
    }
    s
}

/// Nodes whose saliency is in the top decile (at least one node).
pub fn top_decile_nodes(saliency: &crate::gnn::SaliencyMap) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..saliency.node_scores.len()).collect();
    idx.sort_by(|&a, &b| {
        saliency.node_scores[b]
            .total_cmp(&saliency.node_scores[a])
            .then(a.cmp(&b))
    });
    let k = saliency
        .node_scores
        .len()
        .div_ceil(10)
        .max(1)
        .min(idx.len());
    idx.truncate(k);
    idx
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crbg_core::crbg::Crbg;
use crbg_core::gnn::{
    cross_validate, evaluate, prepare, saliency, train, GraphInput, Mode, TrainedModel,
};
use crbg_core::pipeline::{
    analyze, bench_workload, contract_paths, execute_sequences, export_heatmap, generate,
    heatmap_tsv, kl_divergence, load_contract, opcode_frequency, overhead_benchmark, read_dataset,
    run_pipeline, write_graph, ContractSource, PipelineConfig,
};
use crbg_core::txgen::{Manifest, TxSequence};

/// Behavior-graph construction and Ponzi classification for EVM contracts.
#[derive(Parser)]
#[command(name = "crbg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the function manifest of a contract.
    Analyze {
        contract: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate transaction sequences for a contract.
    Gen {
        contract: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Execute generated sequences with taint tracking; writes traces and events.
    Run {
        contract: PathBuf,
        /// Sequences file written by `gen` (generated afresh when omitted).
        #[arg(long)]
        sequences: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build behavior graphs for contracts; classifies them when a model is given.
    Graph {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier on a graph dataset directory.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a model on a dataset, or cross-validate when no model is given.
    Eval {
        dataset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Cross-validate every mode instead of only the configured one.
        #[arg(long)]
        all_modes: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Export per-node and per-edge saliency of one graph as TSV.
    Explain {
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sorted: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Time interpretation with and without taint tracking.
    Bench {
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Static opcode-frequency distributions and their KL divergence.
    Freq {
        first: PathBuf,
        second: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags mirroring the pipeline config; a config file is applied first.
#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_sequences: Option<usize>,
    #[arg(long)]
    similarity_threshold: Option<f64>,
    #[arg(long)]
    step_limit: Option<usize>,
    /// DF+CF, DF, CF or NE
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Graphs per gradient step (whole training set when omitted)
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

/// Invalid configuration: exit code 2.
#[derive(Debug)]
struct BadConfig(String);

impl std::fmt::Display for BadConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadConfig {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadConfig(msg.into()).into()
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let t =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&t).map_err(|e| bad(format!("{}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.out {
            c.output = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
            c.train.seed = v;
        }
        if let Some(v) = self.max_sequences {
            c.max_sequences = v;
        }
        if let Some(v) = self.similarity_threshold {
            c.similarity_threshold = v;
        }
        if let Some(v) = self.step_limit {
            c.step_limit = v;
        }
        if let Some(m) = &self.mode {
            c.mode = Mode::parse(m).ok_or_else(|| bad(format!("unknown mode `{m}`")))?;
        }
        c.train.mode = c.mode;
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.lr {
            c.train.lr = v;
        }
        if let Some(v) = self.batch {
            c.train.batch = Some(v);
        }
        if let Some(v) = self.hidden {
            c.train.hidden = v;
        }
        if let Some(v) = self.dropout {
            c.train.dropout = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        c.validate().map_err(bad)?;
        if c.workers > 0 {
            // only fails if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(c.workers)
                .build_global();
        }
        Ok(c)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let t = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&t).with_context(|| format!("parsing {}", path.display()))
}

fn contract(path: &Path) -> Result<ContractSource> {
    load_contract(path).map_err(|e| bad(e.to_string()))
}

fn load_inputs(inputs: &[PathBuf]) -> Result<Vec<ContractSource>> {
    if inputs.is_empty() {
        return Err(bad("no input contracts"));
    }
    let mut out = Vec::new();
    for i in inputs {
        for p in contract_paths(i).with_context(|| format!("listing {}", i.display()))? {
            out.push(contract(&p)?);
        }
    }
    Ok(out)
}

fn labeled(graphs: Vec<Crbg>) -> Result<Vec<Crbg>> {
    let all = graphs.len();
    let kept: Vec<Crbg> = graphs
        .into_iter()
        .filter(|g| g.label.class().is_some())
        .collect();
    if kept.len() < all {
        log::warn!("{} unlabeled graphs skipped", all - kept.len());
    }
    if kept.is_empty() {
        bail!("dataset has no labeled graphs");
    }
    Ok(kept)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            contract: path,
            common,
        } => {
            let c = common.resolve()?;
            let m = analyze(&contract(&path)?, &c)?;
            emit(common.out.as_deref(), &m)
        }
        Command::Gen {
            contract: path,
            common,
        } => {
            let c = common.resolve()?;
            let src = contract(&path)?;
            let seqs = generate(&analyze(&src, &c)?, &c)?;
            emit(common.out.as_deref(), &seqs)
        }
        Command::Run {
            contract: path,
            sequences,
            common,
        } => {
            let c = common.resolve()?;
            let src = contract(&path)?;
            let manifest: Manifest = analyze(&src, &c)?;
            let seqs: Vec<TxSequence> = match sequences {
                Some(p) => read_json(&p)?,
                None => generate(&manifest, &c)?,
            };
            let executed = execute_sequences(&src, &manifest, &seqs, c.step_limit)?;
            emit(common.out.as_deref(), &executed)
        }
        Command::Graph {
            inputs,
            model,
            common,
        } => {
            let mut c = common.resolve()?;
            c.inputs = inputs;
            let contracts = load_inputs(&c.inputs)?;
            let trained: Option<TrainedModel> = model.as_deref().map(read_json).transpose()?;
            if let Some(t) = &trained {
                c.mode = t.config.mode;
            }
            fs::create_dir_all(&c.output)?;
            let out = run_pipeline(&contracts, &c, trained.as_ref().map(|t| &t.params));
            if let [(name, err)] = out.failures.as_slice() {
                if contracts.len() == 1 {
                    bail!("{name}: {err}");
                }
            }
            for g in &out.graphs {
                write_graph(&c.output, g)?;
            }
            write_json(&c.output.join("verdicts.json"), &out.verdicts)?;
            write_json(&c.output.join("config.json"), &c)?;
            for v in &out.verdicts {
                match v.probability {
                    Some(p) => println!("{}\t{:.4}\t{:?}", v.contract, p, v.predicted.unwrap()),
                    None => println!(
                        "{}\t|V|={}\t|E|={}",
                        v.contract, v.stats.nodes, v.stats.edges
                    ),
                }
            }
            if !out.failures.is_empty() {
                write_json(&c.output.join("failures.json"), &out.failures)?;
                eprintln!(
                    "{} of {} contracts failed",
                    out.failures.len(),
                    contracts.len()
                );
            }
            if out.graphs.is_empty() {
                bail!("no contract produced a graph");
            }
            Ok(())
        }
        Command::Train { dataset, common } => {
            let c = common.resolve()?;
            let graphs = labeled(read_dataset(&dataset)?)?;
            let data: Vec<GraphInput> = prepare(&graphs, c.mode);
            let model = train(&data, &c.train)?;
            let metrics = evaluate(&data, &model.params)?;
            eprintln!(
                "final loss {:.4}, training F1 {:.3}",
                model.history.last().unwrap_or(&f64::NAN),
                metrics.f1
            );
            write_json(
                &common
                    .out
                    .clone()
                    .unwrap_or_else(|| c.output.join("model.json")),
                &model,
            )
        }
        Command::Eval {
            dataset,
            model,
            all_modes,
            common,
        } => {
            let c = common.resolve()?;
            let graphs = labeled(read_dataset(&dataset)?)?;
            if let Some(m) = model {
                let t: TrainedModel = read_json(&m)?;
                let metrics = evaluate(&prepare(&graphs, t.config.mode), &t.params)?;
                return emit(common.out.as_deref(), &metrics);
            }
            let modes: Vec<Mode> = if all_modes {
                Mode::ALL.to_vec()
            } else {
                vec![c.mode]
            };
            let mut reports = Vec::new();
            for mode in modes {
                let cfg = crbg_core::gnn::TrainConfig {
                    mode,
                    ..c.train.clone()
                };
                let cv = cross_validate(&graphs, c.folds, &cfg)?;
                eprintln!("{:6} F1 {:.3} ± {:.3}", mode.name(), cv.mean.f1, cv.std.f1);
                reports.push(cv);
            }
            emit(common.out.as_deref(), &reports)
        }
        Command::Explain {
            graph,
            model,
            sorted,
            common,
        } => {
            common.resolve()?;
            let t: TrainedModel = read_json(&model)?;
            let text = fs::read_to_string(&graph)
                .with_context(|| format!("reading {}", graph.display()))?;
            let g =
                Crbg::from_record(&text).map_err(|e| bad(format!("{}: {e}", graph.display())))?;
            let s = saliency(&GraphInput::from_crbg(&g, t.config.mode), &t.params)?;
            let tsv = heatmap_tsv(&export_heatmap(&s, &g, sorted));
            match &common.out {
                Some(p) => fs::write(p, tsv).with_context(|| format!("writing {}", p.display())),
                None => {
                    print!("{tsv}");
                    Ok(())
                }
            }
        }
        Command::Bench {
            inputs,
            repetitions,
            common,
        } => {
            let c = common.resolve()?;
            if repetitions < 3 {
                return Err(bad("repetitions must be at least 3"));
            }
            let contracts = load_inputs(&inputs)?;
            let work = bench_workload(&contracts, &c);
            let report = overhead_benchmark(&work, repetitions, c.step_limit)?;
            eprintln!(
                "taint on {:.4}s, off {:.4}s, ratio {:.3} (cv {:.3})",
                report.mean_on, report.mean_off, report.ratio, report.ratio_cv
            );
            emit(common.out.as_deref(), &report)
        }
        Command::Freq {
            first,
            second,
            common,
        } => {
            common.resolve()?;
            let (a, b) = (contract(&first)?, contract(&second)?);
            let (p, q) = (opcode_frequency(&a.code), opcode_frequency(&b.code));
            #[derive(Serialize)]
            struct Report {
                first: String,
                second: String,
                kl: f64,
                first_frequency: Vec<f64>,
                second_frequency: Vec<f64>,
            }
            let kl = kl_divergence(&p, &q);
            emit(
                common.out.as_deref(),
                &Report {
                    first: a.name,
                    second: b.name,
                    kl,
                    first_frequency: p,
                    second_frequency: q,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BadConfig>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

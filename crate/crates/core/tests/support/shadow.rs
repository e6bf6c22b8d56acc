//! A line-by-line transcription of the sequence generation algorithm, replayed
//! on the same choice stream as `generate_sequences`.

use std::collections::{BTreeMap, BTreeSet};

use crbg_core::evm::U256;
use crbg_core::txgen::abi::ParamType;
use crbg_core::txgen::{
    build_dependency_map, categorize, generate_sequences, ChoiceSource, FnId, FunctionDescriptor,
    FunctionGroups, GeneratorConfig, Manifest, Selector, SlotSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RUNS: u64 = 100;

#[derive(Debug, PartialEq, Eq)]
pub struct ShadowChoice {
    pub sequence: usize,
    pub position: usize,
    /// Which line of the algorithm made the pick.
    pub line: ChoiceSource,
    pub picked: FnId,
}

/// Uniform pick from the first non-empty argument.
fn random_choose(rng: &mut ChaCha8Rng, sets: &[&[FnId]]) -> Option<FnId> {
    for set in sets {
        if !set.is_empty() {
            return Some(set[rng.gen_range(0..set.len())]);
        }
    }
    None
}

/// Functions reading what the most recent transaction's function writes.
fn get_dependency(txs: &[FnId], dep: &BTreeMap<FnId, BTreeSet<FnId>>, f_all: &[FnId]) -> Vec<FnId> {
    let last = *txs.last().unwrap();
    dep.get(&last)
        .map(|d| d.iter().copied().filter(|f| f_all.contains(f)).collect())
        .unwrap_or_default()
}

pub fn shadow(
    groups: &FunctionGroups,
    dep: &BTreeMap<FnId, BTreeSet<FnId>>,
    max: usize,
    seed: u64,
) -> Vec<ShadowChoice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut trace = Vec::new();
    let mut g = 0;
    while g < max {
        let mut txs: Vec<FnId> = Vec::new();
        let mut line = match (
            groups.f_kws.is_empty(),
            groups.f_payable.is_empty(),
            groups.f_w.is_empty(),
        ) {
            (false, _, _) => ChoiceSource::Keyword,
            (true, false, _) => ChoiceSource::Payable,
            (true, true, false) => ChoiceSource::Writer,
            _ => ChoiceSource::AllFirst,
        };
        let mut func = random_choose(&mut rng, &[&groups.f_kws, &groups.f_payable, &groups.f_w]);
        if func.is_none() {
            line = ChoiceSource::AllFirst;
            func = random_choose(&mut rng, &[&groups.f_all]);
        }
        trace.push(ShadowChoice {
            sequence: g,
            position: 0,
            line,
            picked: func.unwrap(),
        });
        txs.push(func.unwrap());
        while txs.len() < groups.f_all.len() {
            let f_dep = get_dependency(&txs, dep, &groups.f_all);
            let (line, func) = if !f_dep.is_empty() {
                (
                    ChoiceSource::Dependency,
                    random_choose(&mut rng, &[&f_dep, &groups.f_all]),
                )
            } else {
                (ChoiceSource::All, random_choose(&mut rng, &[&groups.f_all]))
            };
            trace.push(ShadowChoice {
                sequence: g,
                position: txs.len(),
                line,
                picked: func.unwrap(),
            });
            txs.push(func.unwrap());
        }
        g += 1;
    }
    trace
}

fn slots(v: &[u64]) -> SlotSet {
    SlotSet {
        slots: v.iter().map(|&x| U256::from(x)).collect(),
        wildcard: false,
    }
}

fn func(name: &str, payable: bool, reads: SlotSet, writes: SlotSet) -> FunctionDescriptor {
    FunctionDescriptor {
        selector: Some(Selector::of_signature(&format!("{name}()"))),
        name: name.into(),
        payable,
        mutating: !writes.is_empty(),
        params: vec![ParamType::Uint(256)],
        reads,
        writes,
    }
}

fn manifest(
    name: &str,
    functions: Vec<FunctionDescriptor>,
    fallback: Option<FunctionDescriptor>,
) -> Manifest {
    Manifest {
        contract_name: name.into(),
        functions,
        fallback,
        keyword_list: vec!["enter".into(), "invest".into()],
        initial_storage: Default::default(),
        initial_balance: None,
    }
}

/// A keyword entry point, a payout reading its state, a view and an
/// unrelated writer.
pub fn keyword_fixture() -> Manifest {
    manifest(
        "keyword",
        vec![
            func("enter", true, slots(&[0]), slots(&[0, 1])),
            func("pay", false, slots(&[0, 1]), slots(&[2])),
            func("owed", false, slots(&[2]), slots(&[])),
            func("setNote", false, slots(&[]), slots(&[6])),
            func("withdraw", false, slots(&[2, 6]), slots(&[8])),
        ],
        None,
    )
}

/// No keywords; a payable fallback, two payable functions and a writer with
/// a computed (wildcard) slot.
pub fn fallback_fixture() -> Manifest {
    let mut scatter = func("scatter", false, slots(&[3]), slots(&[]));
    scatter.writes = SlotSet {
        slots: BTreeSet::new(),
        wildcard: true,
    };
    scatter.mutating = true;
    let mut fallback = func("fallback", true, slots(&[]), slots(&[0]));
    fallback.selector = None;
    fallback.params.clear();
    manifest(
        "fallback",
        vec![
            func("buy", true, slots(&[0]), slots(&[1])),
            func("tip", true, slots(&[]), slots(&[4])),
            scatter,
            func("claim", false, slots(&[1, 7]), slots(&[3])),
        ],
        Some(fallback),
    )
}

/// Writers only, with prioritized groups emptied by hand so that every first
/// pick takes the fallback line.
pub fn unprioritized_fixture() -> (Manifest, FunctionGroups) {
    let m = manifest(
        "plain",
        vec![
            func("a", false, slots(&[1]), slots(&[0])),
            func("b", false, slots(&[0]), slots(&[1])),
            func("c", false, slots(&[]), slots(&[2])),
        ],
        None,
    );
    let mut g = categorize(&m).unwrap();
    g.f_kws.clear();
    g.f_payable.clear();
    g.f_w.clear();
    (m, g)
}

/// Compares generator and shadow on `RUNS` seeds; returns how often each
/// line of the algorithm made a pick.
pub fn check(
    m: &Manifest,
    groups: &FunctionGroups,
) -> Result<BTreeMap<ChoiceSource, usize>, String> {
    let dep = build_dependency_map(m);
    let cfg = GeneratorConfig {
        max_sequences: 4,
        ..Default::default()
    };
    let mut lines = BTreeMap::new();
    for seed in 0..RUNS {
        let out = generate_sequences(m, groups, &dep, &cfg, seed);
        let expected = shadow(groups, &dep, cfg.max_sequences, seed);
        let got: Vec<ShadowChoice> = out
            .choices
            .iter()
            .map(|c| ShadowChoice {
                sequence: c.sequence,
                position: c.position,
                line: c.source,
                picked: c.picked,
            })
            .collect();
        ensure!(
            got == expected,
            "{} seed {seed}: generator {got:?}, shadow {expected:?}",
            m.contract_name
        );
        ensure!(
            out.sequences.len() == cfg.max_sequences,
            "{} seed {seed}: sequence count",
            m.contract_name
        );
        for (g, s) in out.sequences.iter().enumerate() {
            ensure!(
                s.txs.len() == groups.f_all.len(),
                "{} seed {seed} sequence {g}: {} transactions for {} functions",
                m.contract_name,
                s.txs.len(),
                groups.f_all.len()
            );
            let picks: Vec<FnId> = expected
                .iter()
                .filter(|c| c.sequence == g)
                .map(|c| c.picked)
                .collect();
            let called: Vec<FnId> = s.txs.iter().map(|t| t.function).collect();
            ensure!(
                called == picks,
                "{} seed {seed} sequence {g}: calls differ from picks",
                m.contract_name
            );
        }
        for c in &out.choices {
            *lines.entry(c.source).or_insert(0) += 1;
            if c.position > 0 {
                let prev = out.sequences[c.sequence].txs[c.position - 1].function;
                let has_dep = dep[&prev].iter().any(|f| groups.f_all.contains(f));
                ensure!(
                    (c.source == ChoiceSource::Dependency) == has_dep,
                    "{} seed {seed}: choice {c:?} ignores the dependency map",
                    m.contract_name
                );
                ensure!(
                    !has_dep || dep[&prev].contains(&c.picked),
                    "{} seed {seed}: pick outside F_dep",
                    m.contract_name
                );
            }
        }
    }
    Ok(lines)
}

/// All three fixtures; returns the number of runs compared.
pub fn check_all() -> Result<usize, String> {
    let mut runs = 0;
    for (m, groups) in fixtures() {
        check(&m, &groups)?;
        runs += RUNS as usize;
    }
    Ok(runs)
}

pub fn fixtures() -> Vec<(Manifest, FunctionGroups)> {
    let k = keyword_fixture();
    let f = fallback_fixture();
    let (kg, fg) = (categorize(&k).unwrap(), categorize(&f).unwrap());
    vec![(k, kg), (f, fg), unprioritized_fixture()]
}

//! Brute-force def-use tracker for random straight-line programs.
//!
//! The tracker keeps, for every stack item, memory byte and storage slot, the
//! full set of source steps it was computed from. A sink then reports, per
//! label, the most recent contributing source step.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crbg_core::evm::{
    assemble, execute_transaction_with, op, opcode_vocabulary, Address, ExecutionTrace, TxEnv,
    World, U256,
};
use crbg_core::taint::{is_sink, TaintEngine, TaintLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PROGRAMS: usize = 1000;
pub const MAX_OPS: usize = 64;
pub const SEED: u64 = 0x7a1;

type Deps = BTreeSet<u32>;

/// Random straight-line program of at most `MAX_OPS` instructions. Memory and
/// storage operands are pushed right before use so offsets stay small; a few
/// use the calldata size (a tainted value) as the offset instead.
pub fn random_program(rng: &mut ChaCha8Rng) -> String {
    const UNARY_SOURCES: [&str; 4] = ["CALLDATALOAD", "BALANCE", "BLOCKHASH", "ISZERO"];
    const NULLARY_SOURCES: [&str; 6] = [
        "CALLVALUE",
        "CALLER",
        "ORIGIN",
        "CALLDATASIZE",
        "TIMESTAMP",
        "ADDRESS",
    ];
    const BINARY: [&str; 16] = [
        "ADD", "SUB", "MUL", "DIV", "AND", "OR", "XOR", "EQ", "LT", "GT", "SLT", "SGT", "SHL",
        "SHR", "BYTE", "EXP",
    ];
    let mut out: Vec<String> = Vec::new();
    let mut depth = 0usize;
    let mut ops = 0usize;
    let emit = |out: &mut Vec<String>, text: String, n: usize, ops: &mut usize| {
        out.push(text);
        *ops += n;
    };
    while ops + 4 <= MAX_OPS {
        let choice = rng.gen_range(0..100);
        match choice {
            0..=11 => {
                emit(
                    &mut out,
                    format!("PUSH1 {}", rng.gen_range(0..64)),
                    1,
                    &mut ops,
                );
                depth += 1;
            }
            12..=27 => {
                emit(
                    &mut out,
                    NULLARY_SOURCES[rng.gen_range(0..6)].to_string(),
                    1,
                    &mut ops,
                );
                depth += 1;
            }
            28..=33 if depth >= 1 => {
                let op = UNARY_SOURCES[rng.gen_range(0..4)];
                if op == "CALLDATALOAD" || op == "BLOCKHASH" {
                    emit(
                        &mut out,
                        format!("POP PUSH1 {} {op}", rng.gen_range(0..40)),
                        3,
                        &mut ops,
                    );
                } else {
                    emit(&mut out, op.to_string(), 1, &mut ops);
                }
            }
            34..=51 if depth >= 2 => {
                emit(
                    &mut out,
                    BINARY[rng.gen_range(0..16)].to_string(),
                    1,
                    &mut ops,
                );
                depth -= 1;
            }
            52..=59 if depth >= 1 => {
                let n = rng.gen_range(1..=depth.min(16));
                emit(&mut out, format!("DUP{n}"), 1, &mut ops);
                depth += 1;
            }
            60..=67 if depth >= 2 => {
                let n = rng.gen_range(1..=(depth - 1).min(16));
                emit(&mut out, format!("SWAP{n}"), 1, &mut ops);
            }
            68..=70 if depth >= 1 => {
                emit(&mut out, "POP".into(), 1, &mut ops);
                depth -= 1;
            }
            71..=76 if depth >= 1 => {
                let store = if rng.gen_bool(0.8) {
                    "MSTORE"
                } else {
                    "MSTORE8"
                };
                let offset = if rng.gen_bool(0.15) {
                    "CALLDATASIZE".to_string()
                } else {
                    format!("PUSH1 {}", rng.gen_range(0..96))
                };
                emit(&mut out, format!("{offset} {store}"), 2, &mut ops);
                depth -= 1;
            }
            77..=81 => {
                let offset = if rng.gen_bool(0.15) {
                    "CALLDATASIZE".to_string()
                } else {
                    format!("PUSH1 {}", rng.gen_range(0..96))
                };
                emit(&mut out, format!("{offset} MLOAD"), 2, &mut ops);
                depth += 1;
            }
            82..=85 if depth >= 1 => {
                emit(
                    &mut out,
                    format!("PUSH1 {} SSTORE", rng.gen_range(0..6)),
                    2,
                    &mut ops,
                );
                depth -= 1;
            }
            86..=89 => {
                let key = if rng.gen_bool(0.2) {
                    "CALLVALUE".to_string()
                } else {
                    format!("PUSH1 {}", rng.gen_range(0..6))
                };
                emit(&mut out, format!("{key} SLOAD"), 2, &mut ops);
                depth += 1;
            }
            90..=92 => {
                emit(
                    &mut out,
                    format!(
                        "PUSH1 {} PUSH1 {} SHA3",
                        rng.gen_range(0..64),
                        rng.gen_range(0..64)
                    ),
                    3,
                    &mut ops,
                );
                depth += 1;
            }
            93..=95 => {
                let (len, src, dst) = (
                    rng.gen_range(0..40),
                    rng.gen_range(0..40),
                    rng.gen_range(0..96),
                );
                emit(
                    &mut out,
                    format!("PUSH1 {len} PUSH1 {src} PUSH1 {dst} CALLDATACOPY"),
                    4,
                    &mut ops,
                );
            }
            96..=99 if depth >= 1 => {
                // the condition is forced to zero so execution falls through
                emit(&mut out, "PUSH1 0 AND PUSH1 0xff JUMPI".into(), 4, &mut ops);
                depth -= 1;
            }
            _ => {}
        }
    }
    out.push("STOP".into());
    out.join(" ")
}

fn label_of(opcode: u8) -> Option<TaintLabel> {
    TaintLabel::of_source(opcode)
}

fn union<'a>(sets: impl IntoIterator<Item = &'a Deps>) -> Deps {
    sets.into_iter().flatten().copied().collect()
}

fn word(w: U256) -> usize {
    w.as_usize()
}

/// Expected (source step, sink step, label) triples from the trace alone.
pub fn def_use_oracle(trace: &ExecutionTrace) -> Vec<(u32, u32, TaintLabel)> {
    let vocab = opcode_vocabulary();
    let mut source_label: BTreeMap<u32, TaintLabel> = BTreeMap::new();
    let mut stack: Vec<Deps> = Vec::new();
    let mut memory: Vec<Deps> = Vec::new();
    let mut storage: BTreeMap<U256, Deps> = BTreeMap::new();
    let mut expected = Vec::new();
    let grow = |memory: &mut Vec<Deps>, end: usize| {
        let want = end.div_ceil(32) * 32;
        if memory.len() < want {
            memory.resize(want, Deps::new());
        }
    };

    for s in &trace.steps {
        let info = vocab.get(s.opcode).unwrap();
        let code = s.opcode;
        let mut sink_deps = Deps::new();
        if (op::DUP1..=op::DUP16).contains(&code) {
            let n = (code - op::DUP1 + 1) as usize;
            let item = stack[stack.len() - n].clone();
            stack.push(item);
        } else if (op::SWAP1..=op::SWAP16).contains(&code) {
            let n = (code - op::SWAP1 + 1) as usize;
            let top = stack.len() - 1;
            stack.swap(top, top - n);
        } else {
            let popped: Vec<Deps> = (0..info.delta).map(|_| stack.pop().unwrap()).collect();
            let v = &s.operands;
            let all = union(&popped);
            let results: Vec<Deps> = match code {
                op::CALLDATACOPY => {
                    let (dst, len) = (word(v[0]), word(v[2]));
                    grow(&mut memory, dst + len);
                    for b in &mut memory[dst..dst + len] {
                        *b = Deps::from([s.step_index]);
                    }
                    source_label.insert(s.step_index, TaintLabel::Calldata);
                    vec![]
                }
                _ if label_of(code).is_some() => {
                    source_label.insert(s.step_index, label_of(code).unwrap());
                    let mut d = all.clone();
                    d.insert(s.step_index);
                    vec![d]
                }
                op::MLOAD => {
                    let off = word(v[0]);
                    grow(&mut memory, off + 32);
                    let loaded = union(&memory[off..off + 32]);
                    sink_deps = union([&all, &loaded]);
                    vec![loaded]
                }
                op::MSTORE | op::MSTORE8 => {
                    let off = word(v[0]);
                    let len = if code == op::MSTORE { 32 } else { 1 };
                    grow(&mut memory, off + len);
                    for b in &mut memory[off..off + len] {
                        *b = popped[1].clone();
                    }
                    vec![]
                }
                op::SLOAD => {
                    let stored = storage.get(&v[0]).cloned().unwrap_or_default();
                    sink_deps = union([&all, &stored]);
                    vec![stored]
                }
                op::SSTORE => {
                    storage.insert(v[0], popped[1].clone());
                    vec![]
                }
                op::SHA3 => {
                    let (off, len) = (word(v[0]), word(v[1]));
                    let mut d = all.clone();
                    if len > 0 {
                        grow(&mut memory, off + len);
                        d.extend(union(&memory[off..off + len]));
                    }
                    vec![d]
                }
                _ => vec![all.clone(); info.alpha],
            };
            if sink_deps.is_empty() {
                sink_deps = all;
            }
            stack.extend(results);
        }
        if is_sink(code) {
            let mut latest: BTreeMap<TaintLabel, u32> = BTreeMap::new();
            for step in &sink_deps {
                let l = source_label[step];
                let e = latest.entry(l).or_insert(*step);
                *e = (*e).max(*step);
            }
            for (l, src) in latest {
                expected.push((src, s.step_index, l));
            }
        }
    }
    expected.sort();
    expected
}

/// Runs `count` random programs through the taint engine and the tracker;
/// returns the number of events compared and the elapsed time.
pub fn check_random_programs(count: usize, seed: u64) -> Result<(usize, Duration), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let me = Address::synthetic(1);
    let mut checked_events = 0usize;
    for i in 0..count {
        let src = random_program(&mut rng);
        let code = assemble(&src).map_err(|e| format!("program {i}: {e}\n{src}"))?;
        let mut world = World::default();
        world.deploy(me, code.clone());
        world.account_mut(me).balance = U256::from(5000);
        let mut tx = TxEnv::new(Address::synthetic(2), me);
        tx.value = U256::from(rng.gen_range(0..3u64));
        tx.calldata = (0..36).map(|_| rng.gen()).collect();
        let mut engine = TaintEngine::new();
        engine.begin_transaction(0);
        let exec = execute_transaction_with(&mut world, &tx, &code, 1000, &mut engine)
            .map_err(|e| e.to_string())?;
        ensure!(
            exec.trace.outcome.is_success(),
            "program {i} did not finish: {:?}\n{src}",
            exec.trace.outcome
        );
        let mut got: Vec<(u32, u32, TaintLabel)> = engine
            .take_events()
            .iter()
            .map(|e| (e.source_step, e.sink_step, e.label))
            .collect();
        got.sort();
        let expected = def_use_oracle(&exec.trace);
        ensure!(
            got == expected,
            "program {i}: engine {got:?}, tracker {expected:?}\n{src}"
        );
        checked_events += expected.len();
    }
    ensure!(
        checked_events > count,
        "programs exercise too few flows: {checked_events}"
    );
    Ok((checked_events, start.elapsed()))
}

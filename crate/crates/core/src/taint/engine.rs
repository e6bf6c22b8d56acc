use std::collections::BTreeMap;
use std::fmt::Write as _;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::set::{is_sink, propagate, Provenance, TaintLabel, TaintSet};
use crate::evm::word::as_usize;
use crate::evm::{op, Address, ExecutionObserver, StepContext};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaintError {
    #[error("taint state out of sync at step {step}: {what} (machine {machine}, taint {taint})")]
    Desync {
        step: u32,
        what: &'static str,
        machine: usize,
        taint: usize,
    },
    #[error("step {0} observed with no active frame")]
    NoFrame(u32),
}

/// A tainted value reaching a sink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataFlowEvent {
    pub source_tx: u32,
    pub source_step: u32,
    pub sink_tx: u32,
    pub sink_step: u32,
    pub label: TaintLabel,
    /// Some contributing value was read back from storage.
    pub through_storage: bool,
}

impl DataFlowEvent {
    pub fn is_cross_tx(&self) -> bool {
        self.source_tx != self.sink_tx
    }
}

/// One event per line: `tx#,src_step,sink_step,label`. `tx#` is the sink's
/// transaction; a source in an earlier transaction is written `tx:step`.
pub fn dump_events(events: &[DataFlowEvent]) -> String {
    let mut out = String::new();
    for e in events {
        if e.is_cross_tx() {
            let _ = writeln!(
                out,
                "{},{}:{},{},{}",
                e.sink_tx, e.source_tx, e.source_step, e.sink_step, e.label
            );
        } else {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.sink_tx, e.source_step, e.sink_step, e.label
            );
        }
    }
    out
}

/// Persistent taint of storage slots, keyed by (account, slot).
pub type TaintStorage = BTreeMap<(Address, U256), TaintSet>;

/// Volatile taint of one call frame plus the shared storage taint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaintState {
    /// Top of stack last, mirroring the machine stack.
    pub stack: Vec<TaintSet>,
    /// One entry per memory byte.
    pub memory: Vec<TaintSet>,
    pub storage: TaintStorage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryAccess {
    Load,
    Store,
    /// CALLDATACOPY: covered bytes become calldata-tainted.
    Copy,
}

/// Applies a memory access to `taint`. Loads return the union over the covered
/// bytes; stores and copies write `value_taint` to each byte and return it.
pub fn memory_taint_transfer(
    kind: MemoryAccess,
    offset: usize,
    length: usize,
    taint: &mut TaintState,
    value_taint: TaintSet,
) -> TaintSet {
    let end = offset + length;
    if taint.memory.len() < end {
        taint.memory.resize(end.div_ceil(32) * 32, TaintSet::EMPTY);
    }
    match kind {
        MemoryAccess::Load => TaintSet::union_all(&taint.memory[offset..end]),
        MemoryAccess::Store | MemoryAccess::Copy => {
            taint.memory[offset..end].fill(value_taint);
            value_taint
        }
    }
}

/// Snapshot of storage taint to hand to the next transaction.
pub fn storage_carryover(taint: &TaintState) -> TaintStorage {
    taint.storage.clone()
}

#[derive(Debug, Default)]
struct FrameTaint {
    stack: Vec<TaintSet>,
    memory: Vec<TaintSet>,
    pending: Vec<TaintSet>,
    return_taint: Vec<TaintSet>,
    last_return: Vec<TaintSet>,
    // CALL output area to fill once the callee returns
    out_area: Option<(usize, usize)>,
}

/// Taint tracker driven by the interpreter through [`ExecutionObserver`].
///
/// Storage taint persists across transactions until [`TaintEngine::reset_storage`].
#[derive(Debug, Default)]
pub struct TaintEngine {
    tx_index: u32,
    frames: Vec<FrameTaint>,
    storage: TaintStorage,
    storage_snapshots: Vec<TaintStorage>,
    events: Vec<DataFlowEvent>,
    operand_buf: Vec<TaintSet>,
}

fn mem_range(offset: U256, len: U256) -> Option<(usize, usize)> {
    let len = as_usize(len)?;
    if len == 0 {
        return None;
    }
    Some((as_usize(offset)?, len))
}

impl TaintEngine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a transaction; volatile state and collected events are cleared.
    pub fn begin_transaction(&mut self, tx_index: u32) {
        self.tx_index = tx_index;
        self.frames.clear();
        self.storage_snapshots.clear();
        self.events.clear();
    }

    pub fn take_events(&mut self) -> Vec<DataFlowEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn events(&self) -> &[DataFlowEvent] {
        &self.events
    }

    pub fn storage(&self) -> &TaintStorage {
        &self.storage
    }

    pub fn set_storage(&mut self, storage: TaintStorage) {
        self.storage = storage;
    }

    pub fn reset_storage(&mut self) {
        self.storage.clear();
    }

    /// Current frame's volatile state together with storage taint.
    pub fn state(&self) -> TaintState {
        let (stack, memory) = match self.frames.last() {
            Some(f) => (f.stack.clone(), f.memory.clone()),
            None => (Vec::new(), Vec::new()),
        };
        TaintState {
            stack,
            memory,
            storage: self.storage.clone(),
        }
    }

    fn emit(&mut self, sink_step: u32, input: &TaintSet) {
        for (label, p) in input.iter() {
            self.events.push(DataFlowEvent {
                source_tx: p.tx,
                source_step: p.step,
                sink_tx: self.tx_index,
                sink_step,
                label,
                through_storage: input.from_storage(),
            });
        }
    }
}

fn load(mem: &[TaintSet], offset: usize, len: usize) -> TaintSet {
    TaintSet::union_all(&mem[offset..offset + len])
}

fn store(mem: &mut [TaintSet], offset: usize, len: usize, t: TaintSet) {
    mem[offset..offset + len].fill(t);
}

impl ExecutionObserver for TaintEngine {
    type Error = TaintError;

    fn enter_frame(&mut self) {
        self.frames.push(FrameTaint::default());
        self.storage_snapshots.push(self.storage.clone());
    }

    fn before_step(&mut self, ctx: &StepContext<'_>) -> Result<(), TaintError> {
        let here = Provenance {
            tx: self.tx_index,
            step: ctx.step_index,
        };
        let frame = self
            .frames
            .last_mut()
            .ok_or(TaintError::NoFrame(ctx.step_index))?;
        let delta = ctx.operands.len();
        if frame.stack.len() < delta {
            return Err(TaintError::Desync {
                step: ctx.step_index,
                what: "operand count",
                machine: delta,
                taint: frame.stack.len(),
            });
        }
        if frame.memory.len() < ctx.memory_len {
            frame.memory.resize(ctx.memory_len, TaintSet::EMPTY);
        }
        self.operand_buf.clear();
        let split = frame.stack.len() - delta;
        self.operand_buf.extend(frame.stack.drain(split..).rev());
        let ops = &self.operand_buf;
        let opv = ctx.operands;

        let mut sink_input = TaintSet::union_all(ops.iter());
        frame.pending.clear();
        match ctx.opcode {
            op::CALLVALUE
            | op::CALLDATASIZE
            | op::CALLER
            | op::ORIGIN
            | op::CALLDATALOAD
            | op::TIMESTAMP
            | op::BLOCKHASH
            | op::BALANCE
            | op::ADDRESS => {
                let label = TaintLabel::of_source(ctx.opcode).expect("source opcode");
                frame
                    .pending
                    .push(sink_input.union(&TaintSet::single(label, here)));
            }
            op::CALLDATACOPY => {
                if let Some((o, l)) = mem_range(opv[0], opv[2]) {
                    store(
                        &mut frame.memory,
                        o,
                        l,
                        TaintSet::single(TaintLabel::Calldata, here),
                    );
                }
            }
            op::CODECOPY | op::EXTCODECOPY => {
                let (o, l) = if ctx.opcode == op::CODECOPY {
                    (opv[0], opv[2])
                } else {
                    (opv[1], opv[3])
                };
                if let Some((o, l)) = mem_range(o, l) {
                    store(&mut frame.memory, o, l, TaintSet::EMPTY);
                }
            }
            op::RETURNDATACOPY => {
                if let Some((o, l)) = mem_range(opv[0], opv[2]) {
                    let src = as_usize(opv[1]).unwrap_or(usize::MAX);
                    for i in 0..l {
                        let t = src
                            .checked_add(i)
                            .and_then(|j| frame.last_return.get(j))
                            .copied()
                            .unwrap_or(TaintSet::EMPTY);
                        frame.memory[o + i] = t;
                    }
                }
            }
            op::MLOAD => {
                let loaded = load(&frame.memory, as_usize(opv[0]).expect("expanded"), 32);
                sink_input = sink_input.union(&loaded);
                frame.pending.push(loaded);
            }
            op::MSTORE => store(
                &mut frame.memory,
                as_usize(opv[0]).expect("expanded"),
                32,
                ops[1],
            ),
            op::MSTORE8 => store(
                &mut frame.memory,
                as_usize(opv[0]).expect("expanded"),
                1,
                ops[1],
            ),
            op::SHA3 => {
                let mut t = sink_input;
                if let Some((o, l)) = mem_range(opv[0], opv[1]) {
                    t = t.union(&load(&frame.memory, o, l));
                }
                frame.pending.push(t);
            }
            op::SLOAD => {
                let stored = self
                    .storage
                    .get(&(ctx.address, opv[0]))
                    .copied()
                    .unwrap_or(TaintSet::EMPTY)
                    .marked_from_storage();
                sink_input = sink_input.union(&stored);
                frame.pending.push(stored);
            }
            op::SSTORE => {
                let key = (ctx.address, opv[0]);
                if ops[1].is_empty() {
                    self.storage.remove(&key);
                } else {
                    self.storage.insert(key, ops[1]);
                }
            }
            op::RETURN | op::REVERT => {
                frame.return_taint = match mem_range(opv[0], opv[1]) {
                    Some((o, l)) => frame.memory[o..o + l].to_vec(),
                    None => Vec::new(),
                };
            }
            op::CALL | op::CALLCODE | op::DELEGATECALL | op::STATICCALL => {
                let out = if matches!(ctx.opcode, op::CALL | op::CALLCODE) {
                    (opv[5], opv[6])
                } else {
                    (opv[4], opv[5])
                };
                frame.out_area = mem_range(out.0, out.1);
                frame.last_return.clear();
                frame.pending.push(sink_input);
            }
            op::CREATE | op::CREATE2 => {
                frame.last_return.clear();
                frame.pending.push(sink_input);
            }
            op::PUSH1..=op::PUSH32 => frame.pending.push(TaintSet::EMPTY),
            op::DUP1..=op::DUP16 => {
                frame.pending.push(ops[delta - 1]);
                frame.pending.extend_from_slice(ops);
            }
            op::SWAP1..=op::SWAP16 => {
                frame.pending.extend_from_slice(ops);
                frame.pending.swap(0, delta - 1);
            }
            _ => {
                if ctx.info.alpha > 0 {
                    let t = propagate(ctx.info, ops);
                    frame.pending.resize(ctx.info.alpha, t);
                }
            }
        }
        if is_sink(ctx.opcode) {
            self.emit(ctx.step_index, &sink_input);
        }
        Ok(())
    }

    fn after_step(
        &mut self,
        ctx: &StepContext<'_>,
        stack_len: usize,
        memory_len: usize,
    ) -> Result<(), TaintError> {
        let frame = self
            .frames
            .last_mut()
            .ok_or(TaintError::NoFrame(ctx.step_index))?;
        while let Some(t) = frame.pending.pop() {
            frame.stack.push(t);
        }
        if frame.memory.len() < memory_len {
            frame.memory.resize(memory_len, TaintSet::EMPTY);
        }
        if let Some((o, l)) = frame.out_area.take() {
            let n = l.min(frame.last_return.len());
            frame.memory[o..o + n].copy_from_slice(&frame.last_return[..n]);
        }
        if frame.stack.len() != stack_len {
            return Err(TaintError::Desync {
                step: ctx.step_index,
                what: "stack depth",
                machine: stack_len,
                taint: frame.stack.len(),
            });
        }
        if frame.memory.len() != memory_len {
            return Err(TaintError::Desync {
                step: ctx.step_index,
                what: "memory length",
                machine: memory_len,
                taint: frame.memory.len(),
            });
        }
        Ok(())
    }

    fn exit_frame(&mut self, success: bool, returned_len: usize) {
        let child = self.frames.pop();
        if let Some(snapshot) = self.storage_snapshots.pop() {
            if !success {
                self.storage = snapshot;
            }
        }
        if let (Some(child), Some(parent)) = (child, self.frames.last_mut()) {
            let mut ret = child.return_taint;
            ret.resize(returned_len, TaintSet::EMPTY);
            parent.last_return = ret;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::{assemble, execute_transaction_with, TxEnv, World, U256};

    fn run(
        src: &str,
        world: &mut World,
        engine: &mut TaintEngine,
        tx_index: u32,
    ) -> Vec<DataFlowEvent> {
        let code = assemble(src).unwrap();
        let me = Address::synthetic(1);
        world.deploy(me, code.clone());
        let mut tx = TxEnv::new(Address::synthetic(2), me);
        tx.value = U256::from(1000);
        tx.calldata = vec![0xab; 36];
        engine.begin_transaction(tx_index);
        execute_transaction_with(world, &tx, &code, 1000, engine).unwrap();
        engine.take_events()
    }

    fn pairs(events: &[DataFlowEvent]) -> Vec<(u32, u32, TaintLabel)> {
        events
            .iter()
            .map(|e| (e.source_step, e.sink_step, e.label))
            .collect()
    }

    #[test]
    fn callvalue_compared_against_constant() {
        let mut engine = TaintEngine::new();
        let ev = run(
            "CALLVALUE PUSH1 100 LT STOP",
            &mut World::default(),
            &mut engine,
            0,
        );
        assert_eq!(pairs(&ev), vec![(0, 2, TaintLabel::CallValue)]);
    }

    #[test]
    fn untainted_comparison_emits_nothing() {
        let mut engine = TaintEngine::new();
        assert!(run(
            "PUSH1 5 PUSH1 3 GT STOP",
            &mut World::default(),
            &mut engine,
            0
        )
        .is_empty());
    }

    #[test]
    fn source_taints_pushed_slot() {
        let mut engine = TaintEngine::new();
        engine.begin_transaction(0);
        engine.enter_frame();
        let vocab = crate::evm::opcode_vocabulary();
        let info = vocab.lookup("CALLVALUE").unwrap();
        let ctx = StepContext {
            step_index: 0,
            opcode: info.value,
            info,
            address: Address::synthetic(1),
            depth: 0,
            operands: &[],
            memory_len: 0,
        };
        engine.before_step(&ctx).unwrap();
        engine.after_step(&ctx, 1, 0).unwrap();
        let st = engine.state();
        assert_eq!(
            st.stack,
            vec![TaintSet::single(
                TaintLabel::CallValue,
                Provenance { tx: 0, step: 0 }
            )]
        );
    }

    #[test]
    fn memory_store_then_load_fans_out_and_in() {
        let mut st = TaintState::default();
        let cv = TaintSet::single(TaintLabel::CallValue, Provenance::default());
        memory_taint_transfer(MemoryAccess::Store, 0, 32, &mut st, cv);
        assert!(st.memory[..32].iter().all(|t| *t == cv));
        assert_eq!(
            memory_taint_transfer(MemoryAccess::Load, 0, 32, &mut st, TaintSet::EMPTY),
            cv
        );
    }

    #[test]
    fn single_byte_store_reaches_word_load() {
        let mut st = TaintState::default();
        let c = TaintSet::single(TaintLabel::Caller, Provenance::default());
        memory_taint_transfer(MemoryAccess::Store, 5, 1, &mut st, c);
        let loaded = memory_taint_transfer(MemoryAccess::Load, 0, 32, &mut st, TaintSet::EMPTY);
        assert!(loaded.contains(TaintLabel::Caller));
        let mut engine = TaintEngine::new();
        let ev = run(
            "CALLER PUSH1 5 MSTORE8 PUSH1 0 MLOAD STOP",
            &mut World::default(),
            &mut engine,
            0,
        );
        assert_eq!(
            pairs(&ev),
            vec![(0, 2, TaintLabel::Caller), (0, 4, TaintLabel::Caller)]
        );
    }

    #[test]
    fn calldatacopy_marks_bytes() {
        let mut st = TaintState::default();
        let cd = TaintSet::single(TaintLabel::Calldata, Provenance::default());
        memory_taint_transfer(MemoryAccess::Copy, 4, 8, &mut st, cd);
        assert!(st.memory[4..12]
            .iter()
            .all(|t| t.contains(TaintLabel::Calldata)));
        assert!(st.memory[..4].iter().all(|t| t.is_empty()));
    }

    #[test]
    fn storage_taint_crosses_transactions() {
        let mut world = World::default();
        let mut engine = TaintEngine::new();
        let ev1 = run("CALLVALUE PUSH1 3 SSTORE STOP", &mut world, &mut engine, 0);
        assert_eq!(pairs(&ev1), vec![(0, 2, TaintLabel::CallValue)]);
        let carried = engine.storage().clone();
        assert!(carried.values().all(|t| t.contains(TaintLabel::CallValue)));
        let ev2 = run("PUSH1 3 SLOAD STOP", &mut world, &mut engine, 1);
        assert_eq!(ev2.len(), 1);
        let e = ev2[0];
        assert_eq!(
            (e.source_tx, e.source_step, e.sink_tx, e.sink_step),
            (0, 0, 1, 1)
        );
        assert!(e.through_storage && e.is_cross_tx());
    }

    #[test]
    fn reverted_store_leaves_taint_storage_unchanged() {
        let mut world = World::default();
        let mut engine = TaintEngine::new();
        run(
            "CALLVALUE PUSH1 3 SSTORE PUSH1 0 DUP1 REVERT",
            &mut world,
            &mut engine,
            0,
        );
        assert!(engine.storage().is_empty());
        let ev = run("PUSH1 3 SLOAD STOP", &mut world, &mut engine, 1);
        assert!(ev.is_empty());
    }

    #[test]
    fn fresh_slot_is_clean() {
        let mut engine = TaintEngine::new();
        assert!(run("PUSH1 9 SLOAD STOP", &mut World::default(), &mut engine, 0).is_empty());
    }

    #[test]
    fn dump_format() {
        let e = DataFlowEvent {
            source_tx: 0,
            source_step: 4,
            sink_tx: 2,
            sink_step: 7,
            label: TaintLabel::CallValue,
            through_storage: true,
        };
        let local = DataFlowEvent { source_tx: 2, ..e };
        assert_eq!(
            dump_events(&[e, local]),
            "2,0:4,7,CallValue\n2,4,7,CallValue\n"
        );
    }
}

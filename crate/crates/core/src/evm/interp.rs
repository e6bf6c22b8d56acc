//! Deterministic interpreter over an in-memory world.
//!
//! Every executed instruction is recorded as a [`StepRecord`]; message calls
//! and contract creation run inline, so one transaction yields one flat trace.
//! An [`ExecutionObserver`] sees every step in lockstep with the machine.

use std::collections::BTreeMap;
use std::convert::Infallible;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use super::code::Bytecode;
use super::op;
use super::vocab::{immediate_len, opcode_vocabulary, OpcodeInfo, Vocabulary};
use super::word::{self, as_usize, bool_word, keccak256, word_to_bytes, Address};

pub const STACK_LIMIT: usize = 1024;
pub const CALL_DEPTH_LIMIT: usize = 16;
pub const MEMORY_LIMIT: usize = 1 << 20;
pub const DEFAULT_STEP_LIMIT: usize = 4096;
const BLOCK_GAS_LIMIT: u64 = 30_000_000;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: U256,
    pub nonce: u64,
    pub code: Bytecode,
    pub storage: BTreeMap<U256, U256>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct World {
    pub accounts: BTreeMap<Address, Account>,
}

impl World {
    pub fn deploy(&mut self, address: Address, code: Bytecode) {
        self.accounts.entry(address).or_default().code = code;
    }

    pub fn account_mut(&mut self, address: Address) -> &mut Account {
        self.accounts.entry(address).or_default()
    }

    pub fn balance(&self, address: Address) -> U256 {
        self.accounts
            .get(&address)
            .map(|a| a.balance)
            .unwrap_or_default()
    }

    pub fn code(&self, address: Address) -> Bytecode {
        self.accounts
            .get(&address)
            .map(|a| a.code.clone())
            .unwrap_or_default()
    }

    pub fn storage_at(&self, address: Address, slot: U256) -> U256 {
        self.accounts
            .get(&address)
            .and_then(|a| a.storage.get(&slot).copied())
            .unwrap_or_default()
    }

    fn set_storage(&mut self, address: Address, slot: U256, value: U256) {
        let storage = &mut self.account_mut(address).storage;
        if value.is_zero() {
            storage.remove(&slot);
        } else {
            storage.insert(slot, value);
        }
    }

    /// Moves `value` wei; false (and no change) if the sender is short.
    fn transfer(&mut self, from: Address, to: Address, value: U256) -> bool {
        if value.is_zero() {
            self.account_mut(to);
            return true;
        }
        if self.balance(from) < value {
            return false;
        }
        self.account_mut(from).balance -= value;
        let dst = self.account_mut(to);
        dst.balance = dst.balance.overflowing_add(value).0;
        true
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEnv {
    pub caller: Address,
    pub origin: Address,
    pub value: U256,
    pub calldata: Vec<u8>,
    pub timestamp: u64,
    pub block_number: u64,
    pub block_hash: U256,
    pub self_address: Address,
}

impl TxEnv {
    pub fn new(caller: Address, self_address: Address) -> Self {
        TxEnv {
            caller,
            origin: caller,
            value: U256::zero(),
            calldata: Vec::new(),
            timestamp: 1_600_000_000,
            block_number: 10_000_000,
            block_hash: U256::from_big_endian(&keccak256(b"genesis")),
            self_address,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    StackUnderflow,
    StackOverflow,
    BadJump,
    StepLimit,
    InvalidOpcode,
    MemoryLimit,
    StaticViolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Revert,
    Error(ErrorKind),
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

/// How control left a step; maps one-to-one onto control-flow edge kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flow {
    /// Sequential fall-through to the next instruction in the same frame.
    Next,
    Jump,
    Call,
    Create,
    Return,
    Halt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u32,
    pub pc: u32,
    pub opcode: u8,
    pub depth: u16,
    pub stack_before: u16,
    /// Storage context of the frame that executed this step.
    pub address: Address,
    /// Popped words, top of stack first.
    pub operands: Vec<U256>,
    /// Pushed words, top of stack first.
    pub results: Vec<U256>,
    pub flow: Flow,
    pub fault: Option<ErrorKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageWrite {
    pub address: Address,
    pub slot: U256,
    pub value: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Writes applied to the world; empty unless the transaction succeeded.
    pub storage_writes: Vec<StorageWrite>,
    pub return_data: Vec<u8>,
}

/// Final state of the outermost frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    /// Top of stack first.
    pub stack: Vec<U256>,
    pub memory: Vec<u8>,
    pub storage: BTreeMap<U256, U256>,
    pub pc: usize,
    pub gas_used: usize,
    pub halted: Option<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub trace: ExecutionTrace,
    pub state: MachineState,
}

/// View of a step handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step_index: u32,
    pub opcode: u8,
    pub info: &'a OpcodeInfo,
    pub address: Address,
    pub depth: usize,
    pub operands: &'a [U256],
    /// Machine memory length after any expansion caused by this step.
    pub memory_len: usize,
}

/// Hooks invoked in lockstep with the interpreter.
///
/// For each step: `before_step` runs after operands are popped and memory is
/// expanded; `after_step` runs once results are pushed (for message calls,
/// after the callee frame returned). Faulting steps get neither call.
pub trait ExecutionObserver {
    type Error: std::error::Error;

    fn enter_frame(&mut self) {}

    fn before_step(&mut self, ctx: &StepContext<'_>) -> Result<(), Self::Error>;

    fn after_step(
        &mut self,
        ctx: &StepContext<'_>,
        stack_len: usize,
        memory_len: usize,
    ) -> Result<(), Self::Error>;

    /// `returned_len` is the size of the return buffer the parent now sees.
    fn exit_frame(&mut self, success: bool, returned_len: usize);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl ExecutionObserver for NoopObserver {
    type Error = Infallible;

    fn before_step(&mut self, _: &StepContext<'_>) -> Result<(), Infallible> {
        Ok(())
    }

    fn after_step(&mut self, _: &StepContext<'_>, _: usize, _: usize) -> Result<(), Infallible> {
        Ok(())
    }

    fn exit_frame(&mut self, _: bool, _: usize) {}
}

pub fn execute_transaction(
    world: &mut World,
    tx: &TxEnv,
    code: &Bytecode,
    step_limit: usize,
) -> Execution {
    match execute_transaction_with(world, tx, code, step_limit, &mut NoopObserver) {
        Ok(e) => e,
        Err(never) => match never {},
    }
}

/// Runs one transaction against `world`. Storage and balance changes are
/// committed only when the outcome is success.
pub fn execute_transaction_with<O: ExecutionObserver>(
    world: &mut World,
    tx: &TxEnv,
    code: &Bytecode,
    step_limit: usize,
    observer: &mut O,
) -> Result<Execution, O::Error> {
    assert!(step_limit > 0, "step limit must be positive");
    let mut work = world.clone();
    let me = work.account_mut(tx.self_address);
    me.balance = me.balance.overflowing_add(tx.value).0;

    let mut machine = Machine {
        world: work,
        tx,
        steps: Vec::new(),
        step_limit,
        observer,
        vocab: opcode_vocabulary(),
        storage_writes: Vec::new(),
    };
    let mut frame = Frame {
        code: code.clone(),
        address: tx.self_address,
        caller: tx.caller,
        value: tx.value,
        calldata: tx.calldata.clone(),
        stack: Vec::new(),
        memory: Vec::new(),
        pc: 0,
        return_data: Vec::new(),
        depth: 0,
        is_static: false,
    };
    machine.observer.enter_frame();
    let exit = machine.run_frame(&mut frame)?;
    let outcome = match &exit {
        FrameExit::Stop | FrameExit::Return(_) | FrameExit::SelfDestruct => Outcome::Success,
        FrameExit::Revert(_) => Outcome::Revert,
        FrameExit::Fault(k) => Outcome::Error(*k),
    };
    machine.observer.exit_frame(outcome.is_success(), 0);
    if let Some(last) = machine.steps.last_mut() {
        last.flow = Flow::Halt;
    }

    let Machine {
        world: work,
        steps,
        mut storage_writes,
        ..
    } = machine;
    let storage = work
        .accounts
        .get(&tx.self_address)
        .map(|a| a.storage.clone())
        .unwrap_or_default();
    if outcome.is_success() {
        *world = work;
    } else {
        storage_writes.clear();
    }
    let return_data = match exit {
        FrameExit::Return(d) | FrameExit::Revert(d) => d,
        _ => Vec::new(),
    };
    let gas_used = steps.len();
    frame.stack.reverse();
    Ok(Execution {
        trace: ExecutionTrace {
            steps,
            outcome,
            storage_writes,
            return_data,
        },
        state: MachineState {
            stack: frame.stack,
            memory: frame.memory,
            storage,
            pc: frame.pc,
            gas_used,
            halted: Some(outcome),
        },
    })
}

struct Frame {
    code: Bytecode,
    address: Address,
    caller: Address,
    value: U256,
    calldata: Vec<u8>,
    stack: Vec<U256>,
    memory: Vec<u8>,
    pc: usize,
    return_data: Vec<u8>,
    depth: usize,
    is_static: bool,
}

enum FrameExit {
    Stop,
    Return(Vec<u8>),
    Revert(Vec<u8>),
    SelfDestruct,
    Fault(ErrorKind),
}

impl FrameExit {
    fn is_success(&self) -> bool {
        matches!(
            self,
            FrameExit::Stop | FrameExit::Return(_) | FrameExit::SelfDestruct
        )
    }
}

enum Control {
    Continue(Vec<U256>),
    Jump(U256),
    Exit(FrameExit),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CallKind {
    Call,
    CallCode,
    DelegateCall,
    StaticCall,
}

struct Machine<'a, O> {
    world: World,
    tx: &'a TxEnv,
    steps: Vec<StepRecord>,
    step_limit: usize,
    observer: &'a mut O,
    vocab: &'static Vocabulary,
    storage_writes: Vec<StorageWrite>,
}

fn read_padded(src: &[u8], offset: U256, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    if let Some(off) = as_usize(offset) {
        if off < src.len() {
            let n = len.min(src.len() - off);
            out[..n].copy_from_slice(&src[off..off + n]);
        }
    }
    out
}

/// Memory range (offset, length) touched by an instruction.
fn memory_ranges(opcode: u8, ops: &[U256]) -> [Option<(U256, U256)>; 2] {
    let r = |o: usize, l: usize| Some((ops[o], ops[l]));
    match opcode {
        op::MLOAD | op::MSTORE => [Some((ops[0], U256::from(32))), None],
        op::MSTORE8 => [Some((ops[0], U256::one())), None],
        op::SHA3 | op::RETURN | op::REVERT => [r(0, 1), None],
        op::CALLDATACOPY | op::CODECOPY | op::RETURNDATACOPY => [r(0, 2), None],
        op::EXTCODECOPY => [r(1, 3), None],
        op::CREATE | op::CREATE2 => [r(1, 2), None],
        op::CALL | op::CALLCODE => [r(3, 4), r(5, 6)],
        op::DELEGATECALL | op::STATICCALL => [r(2, 3), r(4, 5)],
        op::LOG0..=op::LOG4 => [r(0, 1), None],
        _ => [None, None],
    }
}

impl<O: ExecutionObserver> Machine<'_, O> {
    fn record_fault(
        &mut self,
        frame: &Frame,
        opcode: u8,
        operands: Vec<U256>,
        kind: ErrorKind,
        stack_before: usize,
    ) {
        self.steps.push(StepRecord {
            step_index: self.steps.len() as u32,
            pc: frame.pc as u32,
            opcode,
            depth: frame.depth as u16,
            stack_before: stack_before as u16,
            address: frame.address,
            operands,
            results: Vec::new(),
            flow: Flow::Next,
            fault: Some(kind),
        });
    }

    fn expand_memory(frame: &mut Frame, opcode: u8, operands: &[U256]) -> Result<(), ErrorKind> {
        for (offset, len) in memory_ranges(opcode, operands).into_iter().flatten() {
            if len.is_zero() {
                continue;
            }
            let end = match (as_usize(offset), as_usize(len)) {
                (Some(o), Some(l)) => o.checked_add(l).ok_or(ErrorKind::MemoryLimit)?,
                _ => return Err(ErrorKind::MemoryLimit),
            };
            if end > MEMORY_LIMIT {
                return Err(ErrorKind::MemoryLimit);
            }
            let words = end.div_ceil(32) * 32;
            if words > frame.memory.len() {
                frame.memory.resize(words, 0);
            }
        }
        Ok(())
    }

    fn run_frame(&mut self, frame: &mut Frame) -> Result<FrameExit, O::Error> {
        loop {
            if frame.pc >= frame.code.len() {
                return Ok(FrameExit::Stop);
            }
            if self.steps.len() >= self.step_limit {
                return Ok(FrameExit::Fault(ErrorKind::StepLimit));
            }
            let opcode = frame.code.bytes()[frame.pc];
            let stack_before = frame.stack.len();
            let Some(info) = self.vocab.get(opcode) else {
                self.record_fault(
                    frame,
                    opcode,
                    Vec::new(),
                    ErrorKind::InvalidOpcode,
                    stack_before,
                );
                return Ok(FrameExit::Fault(ErrorKind::InvalidOpcode));
            };
            if stack_before < info.delta {
                self.record_fault(
                    frame,
                    opcode,
                    Vec::new(),
                    ErrorKind::StackUnderflow,
                    stack_before,
                );
                return Ok(FrameExit::Fault(ErrorKind::StackUnderflow));
            }
            if stack_before - info.delta + info.alpha > STACK_LIMIT {
                self.record_fault(
                    frame,
                    opcode,
                    Vec::new(),
                    ErrorKind::StackOverflow,
                    stack_before,
                );
                return Ok(FrameExit::Fault(ErrorKind::StackOverflow));
            }
            let operands: Vec<U256> = (0..info.delta)
                .map(|_| frame.stack.pop().expect("depth checked"))
                .collect();
            if let Err(kind) = Self::expand_memory(frame, opcode, &operands) {
                self.record_fault(frame, opcode, operands, kind, stack_before);
                return Ok(FrameExit::Fault(kind));
            }

            let step_index = self.steps.len();
            self.steps.push(StepRecord {
                step_index: step_index as u32,
                pc: frame.pc as u32,
                opcode,
                depth: frame.depth as u16,
                stack_before: stack_before as u16,
                address: frame.address,
                operands: Vec::new(),
                results: Vec::new(),
                flow: Flow::Next,
                fault: None,
            });
            let ctx = StepContext {
                step_index: step_index as u32,
                opcode,
                info,
                address: frame.address,
                depth: frame.depth,
                operands: &operands,
                memory_len: frame.memory.len(),
            };
            self.observer.before_step(&ctx)?;

            let control = self.exec(frame, opcode, info, &operands, step_index)?;
            let ctx = StepContext {
                memory_len: frame.memory.len(),
                ..ctx
            };
            match control {
                Control::Continue(results) => {
                    frame.stack.extend(results.iter().rev());
                    self.observer
                        .after_step(&ctx, frame.stack.len(), frame.memory.len())?;
                    let rec = &mut self.steps[step_index];
                    rec.operands = operands.clone();
                    rec.results = results;
                    frame.pc += 1 + immediate_len(opcode);
                }
                Control::Jump(dest) => {
                    let rec = &mut self.steps[step_index];
                    rec.operands = operands.clone();
                    match as_usize(dest).filter(|&d| frame.code.is_jumpdest(d)) {
                        Some(d) => {
                            rec.flow = Flow::Jump;
                            self.observer.after_step(
                                &ctx,
                                frame.stack.len(),
                                frame.memory.len(),
                            )?;
                            frame.pc = d;
                        }
                        None => {
                            rec.fault = Some(ErrorKind::BadJump);
                            return Ok(FrameExit::Fault(ErrorKind::BadJump));
                        }
                    }
                }
                Control::Exit(exit) => {
                    let rec = &mut self.steps[step_index];
                    rec.operands = operands.clone();
                    if let FrameExit::Fault(kind) = exit {
                        rec.fault = Some(kind);
                    } else {
                        self.observer
                            .after_step(&ctx, frame.stack.len(), frame.memory.len())?;
                    }
                    return Ok(exit);
                }
            }
        }
    }

    fn exec(
        &mut self,
        frame: &mut Frame,
        opcode: u8,
        info: &OpcodeInfo,
        ops: &[U256],
        step_index: usize,
    ) -> Result<Control, O::Error> {
        use Control::Continue;
        let one = |v: U256| Ok(Continue(vec![v]));
        match opcode {
            op::STOP => Ok(Control::Exit(FrameExit::Stop)),
            op::ADD => one(ops[0].overflowing_add(ops[1]).0),
            op::MUL => one(ops[0].overflowing_mul(ops[1]).0),
            op::SUB => one(ops[0].overflowing_sub(ops[1]).0),
            op::DIV => one(if ops[1].is_zero() {
                U256::zero()
            } else {
                ops[0] / ops[1]
            }),
            op::SDIV => one(word::sdiv(ops[0], ops[1])),
            op::MOD => one(if ops[1].is_zero() {
                U256::zero()
            } else {
                ops[0] % ops[1]
            }),
            op::SMOD => one(word::smod(ops[0], ops[1])),
            op::ADDMOD => one(word::addmod(ops[0], ops[1], ops[2])),
            op::MULMOD => one(word::mulmod(ops[0], ops[1], ops[2])),
            op::EXP => one(ops[0].overflowing_pow(ops[1]).0),
            op::SIGNEXTEND => one(word::signextend(ops[0], ops[1])),
            op::LT => one(bool_word(ops[0] < ops[1])),
            op::GT => one(bool_word(ops[0] > ops[1])),
            op::SLT => one(bool_word(word::slt(ops[0], ops[1]))),
            op::SGT => one(bool_word(word::slt(ops[1], ops[0]))),
            op::EQ => one(bool_word(ops[0] == ops[1])),
            op::ISZERO => one(bool_word(ops[0].is_zero())),
            op::AND => one(ops[0] & ops[1]),
            op::OR => one(ops[0] | ops[1]),
            op::XOR => one(ops[0] ^ ops[1]),
            op::NOT => one(!ops[0]),
            op::BYTE => one(word::byte_at(ops[0], ops[1])),
            op::SHL => one(word::shl(ops[0], ops[1])),
            op::SHR => one(word::shr(ops[0], ops[1])),
            op::SAR => one(word::sar(ops[0], ops[1])),
            op::SHA3 => {
                let data = self.mem_slice(frame, ops[0], ops[1]);
                one(U256::from_big_endian(&keccak256(&data)))
            }
            op::ADDRESS => one(frame.address.to_word()),
            op::BALANCE => one(self.world.balance(Address::from_word(ops[0]))),
            op::ORIGIN => one(self.tx.origin.to_word()),
            op::CALLER => one(frame.caller.to_word()),
            op::CALLVALUE => one(frame.value),
            op::CALLDATALOAD => one(U256::from_big_endian(&read_padded(
                &frame.calldata,
                ops[0],
                32,
            ))),
            op::CALLDATASIZE => one(U256::from(frame.calldata.len())),
            op::CALLDATACOPY => {
                let data = read_padded(&frame.calldata, ops[1], as_usize(ops[2]).unwrap_or(0));
                Self::mem_write(frame, ops[0], &data);
                Ok(Continue(vec![]))
            }
            op::CODESIZE => one(U256::from(frame.code.len())),
            op::CODECOPY => {
                let data = read_padded(frame.code.bytes(), ops[1], as_usize(ops[2]).unwrap_or(0));
                Self::mem_write(frame, ops[0], &data);
                Ok(Continue(vec![]))
            }
            op::GASPRICE => one(U256::one()),
            op::EXTCODESIZE => one(U256::from(
                self.world.code(Address::from_word(ops[0])).len(),
            )),
            op::EXTCODECOPY => {
                let code = self.world.code(Address::from_word(ops[0]));
                let data = read_padded(code.bytes(), ops[2], as_usize(ops[3]).unwrap_or(0));
                Self::mem_write(frame, ops[1], &data);
                Ok(Continue(vec![]))
            }
            op::RETURNDATASIZE => one(U256::from(frame.return_data.len())),
            op::RETURNDATACOPY => {
                let data = read_padded(&frame.return_data, ops[1], as_usize(ops[2]).unwrap_or(0));
                Self::mem_write(frame, ops[0], &data);
                Ok(Continue(vec![]))
            }
            op::EXTCODEHASH => {
                let addr = Address::from_word(ops[0]);
                match self.world.accounts.get(&addr) {
                    Some(acct) => one(U256::from_big_endian(&keccak256(acct.code.bytes()))),
                    None => one(U256::zero()),
                }
            }
            op::BLOCKHASH => {
                let n = ops[0];
                let current = U256::from(self.tx.block_number);
                if n < current && current - n <= U256::from(256) {
                    let mut buf = word_to_bytes(self.tx.block_hash).to_vec();
                    buf.extend_from_slice(&word_to_bytes(n));
                    one(U256::from_big_endian(&keccak256(&buf)))
                } else {
                    one(U256::zero())
                }
            }
            op::COINBASE => one(U256::zero()),
            op::TIMESTAMP => one(U256::from(self.tx.timestamp)),
            op::NUMBER => one(U256::from(self.tx.block_number)),
            op::DIFFICULTY => one(U256::from(2_500_000_000_000u64)),
            op::GASLIMIT => one(U256::from(BLOCK_GAS_LIMIT)),
            op::POP => Ok(Continue(vec![])),
            op::MLOAD => {
                let data = self.mem_slice(frame, ops[0], U256::from(32));
                one(U256::from_big_endian(&data))
            }
            op::MSTORE => {
                Self::mem_write(frame, ops[0], &word_to_bytes(ops[1]));
                Ok(Continue(vec![]))
            }
            op::MSTORE8 => {
                Self::mem_write(frame, ops[0], &[ops[1].low_u32() as u8]);
                Ok(Continue(vec![]))
            }
            op::SLOAD => one(self.world.storage_at(frame.address, ops[0])),
            op::SSTORE => {
                if frame.is_static {
                    return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StaticViolation)));
                }
                self.world.set_storage(frame.address, ops[0], ops[1]);
                self.storage_writes.push(StorageWrite {
                    address: frame.address,
                    slot: ops[0],
                    value: ops[1],
                });
                Ok(Continue(vec![]))
            }
            op::JUMP => Ok(Control::Jump(ops[0])),
            op::JUMPI => {
                if ops[1].is_zero() {
                    Ok(Continue(vec![]))
                } else {
                    Ok(Control::Jump(ops[0]))
                }
            }
            op::PC => one(U256::from(frame.pc)),
            op::MSIZE => one(U256::from(frame.memory.len())),
            op::GAS => one(U256::from(self.step_limit.saturating_sub(self.steps.len()))),
            op::JUMPDEST => Ok(Continue(vec![])),
            op::PUSH1..=op::PUSH32 => {
                let n = immediate_len(opcode);
                let imm = read_padded(frame.code.bytes(), U256::from(frame.pc + 1), n);
                one(U256::from_big_endian(&imm))
            }
            op::DUP1..=op::DUP16 => {
                let n = ops.len();
                let mut results = Vec::with_capacity(n + 1);
                results.push(ops[n - 1]);
                results.extend_from_slice(ops);
                Ok(Continue(results))
            }
            op::SWAP1..=op::SWAP16 => {
                let n = ops.len();
                let mut results = ops.to_vec();
                results.swap(0, n - 1);
                Ok(Continue(results))
            }
            op::LOG0..=op::LOG4 => {
                if frame.is_static {
                    return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StaticViolation)));
                }
                Ok(Continue(vec![]))
            }
            op::CREATE | op::CREATE2 => self.create(frame, opcode, ops, step_index),
            op::CALL => self.call(frame, CallKind::Call, ops, step_index),
            op::CALLCODE => self.call(frame, CallKind::CallCode, ops, step_index),
            op::DELEGATECALL => self.call(frame, CallKind::DelegateCall, ops, step_index),
            op::STATICCALL => self.call(frame, CallKind::StaticCall, ops, step_index),
            op::RETURN => Ok(Control::Exit(FrameExit::Return(
                self.mem_slice(frame, ops[0], ops[1]),
            ))),
            op::REVERT => Ok(Control::Exit(FrameExit::Revert(
                self.mem_slice(frame, ops[0], ops[1]),
            ))),
            op::SELFDESTRUCT => {
                if frame.is_static {
                    return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StaticViolation)));
                }
                let all = self.world.balance(frame.address);
                self.world
                    .transfer(frame.address, Address::from_word(ops[0]), all);
                Ok(Control::Exit(FrameExit::SelfDestruct))
            }
            // Remaining vocabulary entries: consume operands, push zero words.
            _ => Ok(Continue(vec![U256::zero(); info.alpha])),
        }
    }

    fn mem_slice(&self, frame: &Frame, offset: U256, len: U256) -> Vec<u8> {
        let len = as_usize(len).unwrap_or(0);
        if len == 0 {
            return Vec::new();
        }
        let off = as_usize(offset).expect("memory expanded before execution");
        frame.memory[off..off + len].to_vec()
    }

    fn mem_write(frame: &mut Frame, offset: U256, data: &[u8]) {
        if data.is_empty() {
            return;
        }
        let off = as_usize(offset).expect("memory expanded before execution");
        frame.memory[off..off + data.len()].copy_from_slice(data);
    }

    /// Runs a nested frame; the caller restores the world if it fails.
    fn run_child(
        &mut self,
        child: &mut Frame,
        parent_step: usize,
        entry: Flow,
    ) -> Result<FrameExit, O::Error> {
        let writes_mark = self.storage_writes.len();
        let first_child_step = self.steps.len();
        self.observer.enter_frame();
        let exit = self.run_frame(child)?;
        if self.steps.len() > first_child_step {
            self.steps[parent_step].flow = entry;
            self.steps.last_mut().expect("child recorded steps").flow = Flow::Return;
        }
        if !exit.is_success() {
            self.storage_writes.truncate(writes_mark);
        }
        Ok(exit)
    }

    fn call(
        &mut self,
        frame: &mut Frame,
        kind: CallKind,
        ops: &[U256],
        step_index: usize,
    ) -> Result<Control, O::Error> {
        let target = Address::from_word(ops[1]);
        let (value, rest) = match kind {
            CallKind::Call | CallKind::CallCode => (ops[2], &ops[3..]),
            CallKind::DelegateCall | CallKind::StaticCall => (U256::zero(), &ops[2..]),
        };
        let (in_off, in_len, out_off, out_len) = (rest[0], rest[1], rest[2], rest[3]);
        if kind == CallKind::Call && frame.is_static && !value.is_zero() {
            return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StaticViolation)));
        }
        frame.return_data.clear();
        if frame.depth + 1 > CALL_DEPTH_LIMIT || self.world.balance(frame.address) < value {
            return Ok(Control::Continue(vec![U256::zero()]));
        }
        let input = self.mem_slice(frame, in_off, in_len);
        let code = self.world.code(target);

        let snapshot = self.world.clone();
        if kind == CallKind::Call {
            self.world.transfer(frame.address, target, value);
        }
        if code.is_empty() {
            return Ok(Control::Continue(vec![U256::one()]));
        }
        let mut child = Frame {
            code,
            address: match kind {
                CallKind::Call | CallKind::StaticCall => target,
                CallKind::CallCode | CallKind::DelegateCall => frame.address,
            },
            caller: if kind == CallKind::DelegateCall {
                frame.caller
            } else {
                frame.address
            },
            value: if kind == CallKind::DelegateCall {
                frame.value
            } else {
                value
            },
            calldata: input,
            stack: Vec::new(),
            memory: Vec::new(),
            pc: 0,
            return_data: Vec::new(),
            depth: frame.depth + 1,
            is_static: frame.is_static || kind == CallKind::StaticCall,
        };
        let exit = self.run_child(&mut child, step_index, Flow::Call)?;
        let success = exit.is_success();
        if !success {
            // undo the value transfer made before the child ran
            self.world = snapshot;
        }
        frame.return_data = match exit {
            FrameExit::Return(d) | FrameExit::Revert(d) => d,
            FrameExit::Fault(ErrorKind::StepLimit) => {
                self.observer.exit_frame(false, 0);
                return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StepLimit)));
            }
            _ => Vec::new(),
        };
        self.observer.exit_frame(success, frame.return_data.len());
        let n = as_usize(out_len).unwrap_or(0).min(frame.return_data.len());
        let ret = frame.return_data[..n].to_vec();
        Self::mem_write(frame, out_off, &ret);
        Ok(Control::Continue(vec![bool_word(success)]))
    }

    fn create(
        &mut self,
        frame: &mut Frame,
        opcode: u8,
        ops: &[U256],
        step_index: usize,
    ) -> Result<Control, O::Error> {
        if frame.is_static {
            return Ok(Control::Exit(FrameExit::Fault(ErrorKind::StaticViolation)));
        }
        let value = ops[0];
        frame.return_data.clear();
        if frame.depth + 1 > CALL_DEPTH_LIMIT || self.world.balance(frame.address) < value {
            return Ok(Control::Continue(vec![U256::zero()]));
        }
        let initcode = self.mem_slice(frame, ops[1], ops[2]);
        let creator = self.world.account_mut(frame.address);
        let nonce = creator.nonce;
        creator.nonce += 1;
        let new_address = if opcode == op::CREATE2 {
            let mut buf = vec![0xff];
            buf.extend_from_slice(&frame.address.0);
            buf.extend_from_slice(&word_to_bytes(ops[3]));
            buf.extend_from_slice(&keccak256(&initcode));
            Address::from_word(U256::from_big_endian(&keccak256(&buf)))
        } else {
            let mut buf = frame.address.0.to_vec();
            buf.extend_from_slice(&nonce.to_be_bytes());
            Address::from_word(U256::from_big_endian(&keccak256(&buf)))
        };
        let snapshot = self.world.clone();
        self.world.transfer(frame.address, new_address, value);
        let mut child = Frame {
            code: Bytecode::new(initcode),
            address: new_address,
            caller: frame.address,
            value,
            calldata: Vec::new(),
            stack: Vec::new(),
            memory: Vec::new(),
            pc: 0,
            return_data: Vec::new(),
            depth: frame.depth + 1,
            is_static: false,
        };
        let exit = self.run_child(&mut child, step_index, Flow::Create)?;
        match exit {
            FrameExit::Stop | FrameExit::SelfDestruct => {
                self.observer.exit_frame(true, 0);
                Ok(Control::Continue(vec![new_address.to_word()]))
            }
            FrameExit::Return(runtime) => {
                self.world.account_mut(new_address).code = Bytecode::new(runtime);
                self.observer.exit_frame(true, 0);
                Ok(Control::Continue(vec![new_address.to_word()]))
            }
            FrameExit::Revert(data) => {
                self.world = snapshot;
                self.observer.exit_frame(false, data.len());
                frame.return_data = data;
                Ok(Control::Continue(vec![U256::zero()]))
            }
            FrameExit::Fault(kind) => {
                self.world = snapshot;
                self.observer.exit_frame(false, 0);
                if kind == ErrorKind::StepLimit {
                    return Ok(Control::Exit(FrameExit::Fault(kind)));
                }
                Ok(Control::Continue(vec![U256::zero()]))
            }
        }
    }
}

//! Static recovery of the function table and per-function storage footprint
//! from a selector-dispatching contract.

use std::collections::{BTreeMap, HashSet};

use primitive_types::U256;

use super::manifest::{
    FunctionDescriptor, Interface, InterfaceFunction, Manifest, ManifestError, Selector, SlotSet,
};
use crate::evm::{disassemble, op, word, Bytecode, Instruction};

/// Abstract states explored per branch before giving up and going wildcard.
const STATE_BUDGET: usize = 20_000;
const MAX_ABSTRACT_STACK: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DispatchEntry {
    pub selector: Selector,
    pub entry_pc: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dispatcher {
    pub entries: Vec<DispatchEntry>,
    /// First instruction after the last selector comparison.
    pub fallthrough_pc: Option<usize>,
}

struct Program {
    instrs: Vec<Instruction>,
    index_of_pc: BTreeMap<usize, usize>,
    code: Bytecode,
}

impl Program {
    fn new(code: &Bytecode) -> Self {
        let instrs = disassemble(code);
        let index_of_pc = instrs
            .iter()
            .enumerate()
            .map(|(i, ins)| (ins.pc, i))
            .collect();
        Program {
            instrs,
            index_of_pc,
            code: code.clone(),
        }
    }

    fn immediate(ins: &Instruction) -> Option<U256> {
        (op::PUSH1..=op::PUSH32)
            .contains(&ins.byte)
            .then(|| U256::from_big_endian(&ins.immediate))
    }
}

/// Finds `PUSH4 sel ... EQ PUSHn dest JUMPI` comparisons.
pub fn find_dispatcher(code: &Bytecode) -> Option<Dispatcher> {
    let prog = Program::new(code);
    let ins = &prog.instrs;
    let mut entries = Vec::new();
    let mut last_jumpi = None;
    for i in 0..ins.len() {
        if ins[i].byte != op::PUSH4 {
            continue;
        }
        // allow a DUP/SWAP between the selector push and EQ
        let eq = (i + 1..(i + 3).min(ins.len())).find(|&j| ins[j].byte == op::EQ);
        let Some(eq) = eq else { continue };
        if !(i + 1..eq)
            .all(|j| matches!(ins[j].byte, op::DUP1..=op::DUP16 | op::SWAP1..=op::SWAP16))
        {
            continue;
        }
        let (Some(push), Some(jumpi)) = (ins.get(eq + 1), ins.get(eq + 2)) else {
            continue;
        };
        if jumpi.byte != op::JUMPI {
            continue;
        }
        let Some(dest) = Program::immediate(push).and_then(word::as_usize) else {
            continue;
        };
        if !code.is_jumpdest(dest) {
            continue;
        }
        let sel: [u8; 4] = ins[i].immediate.as_slice().try_into().ok()?;
        entries.push(DispatchEntry {
            selector: Selector(sel),
            entry_pc: dest,
        });
        last_jumpi = Some(eq + 2);
    }
    let last = last_jumpi?;
    Some(Dispatcher {
        entries,
        fallthrough_pc: ins.get(last + 1).map(|x| x.pc),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BranchSummary {
    pub reads: SlotSet,
    pub writes: SlotSet,
    /// Some path ends in STOP, RETURN or SELFDESTRUCT.
    pub can_succeed: bool,
    /// The branch opens with a `CALLVALUE ... ISZERO ... JUMPI` rejection guard.
    pub rejects_value: bool,
}

fn fold(opcode: u8, a: U256, b: U256) -> Option<U256> {
    Some(match opcode {
        op::ADD => a.overflowing_add(b).0,
        op::SUB => a.overflowing_sub(b).0,
        op::MUL => a.overflowing_mul(b).0,
        op::DIV => {
            if b.is_zero() {
                U256::zero()
            } else {
                a / b
            }
        }
        op::AND => a & b,
        op::OR => a | b,
        op::XOR => a ^ b,
        op::SHL => word::shl(a, b),
        op::SHR => word::shr(a, b),
        _ => return None,
    })
}

type AbsStack = Vec<Option<U256>>;

fn pop(stack: &mut AbsStack) -> Option<U256> {
    // below the tracked region everything is unknown
    stack.pop().flatten()
}

/// Explores every path from `entry_pc` with constant propagation on the
/// stack, collecting SLOAD/SSTORE slots.
pub fn scan_branch(code: &Bytecode, entry_pc: usize) -> BranchSummary {
    let prog = Program::new(code);
    scan_from(&prog, entry_pc)
}

fn scan_from(prog: &Program, entry_pc: usize) -> BranchSummary {
    let mut out = BranchSummary {
        rejects_value: rejects_value(prog, entry_pc),
        ..Default::default()
    };
    let mut seen: HashSet<(usize, AbsStack)> = HashSet::new();
    let mut work: Vec<(usize, AbsStack)> = vec![(entry_pc, Vec::new())];
    while let Some((pc, mut stack)) = work.pop() {
        if seen.len() >= STATE_BUDGET {
            out.reads.wildcard = true;
            out.writes.wildcard = true;
            out.can_succeed = true;
            break;
        }
        if !seen.insert((pc, stack.clone())) {
            continue;
        }
        let Some(&idx) = prog.index_of_pc.get(&pc) else {
            continue;
        };
        let ins = &prog.instrs[idx];
        let Some(info) = ins.info else { continue };
        let next_pc = prog.instrs.get(idx + 1).map(|n| n.pc);
        let b = ins.byte;
        match b {
            op::STOP | op::RETURN | op::SELFDESTRUCT => {
                out.can_succeed = true;
                continue;
            }
            op::REVERT => continue,
            op::JUMP => {
                if let Some(dest) = pop(&mut stack).and_then(word::as_usize) {
                    if prog.code.is_jumpdest(dest) {
                        work.push((dest, stack));
                    }
                }
                continue;
            }
            op::JUMPI => {
                let dest = pop(&mut stack);
                pop(&mut stack);
                if let Some(dest) = dest.and_then(word::as_usize) {
                    if prog.code.is_jumpdest(dest) {
                        work.push((dest, stack.clone()));
                    }
                }
                if let Some(n) = next_pc {
                    work.push((n, stack));
                }
                continue;
            }
            op::SLOAD => {
                match pop(&mut stack) {
                    Some(slot) => out.reads.insert(slot),
                    None => out.reads.wildcard = true,
                }
                stack.push(None);
            }
            op::SSTORE => {
                match pop(&mut stack) {
                    Some(slot) => out.writes.insert(slot),
                    None => out.writes.wildcard = true,
                }
                pop(&mut stack);
            }
            _ if (op::PUSH1..=op::PUSH32).contains(&b) => stack.push(Program::immediate(ins)),
            _ if (op::DUP1..=op::DUP16).contains(&b) => {
                let n = (b - op::DUP1) as usize;
                let v = if n < stack.len() {
                    stack[stack.len() - 1 - n]
                } else {
                    None
                };
                stack.push(v);
            }
            _ if (op::SWAP1..=op::SWAP16).contains(&b) => {
                let n = (b - op::SWAP1) as usize + 1;
                while stack.len() <= n {
                    stack.insert(0, None);
                }
                let top = stack.len() - 1;
                stack.swap(top, top - n);
            }
            _ => {
                let folded = if info.delta == 2 && info.alpha == 1 {
                    let a = pop(&mut stack);
                    let c = pop(&mut stack);
                    a.zip(c).and_then(|(a, c)| fold(b, a, c))
                } else {
                    for _ in 0..info.delta {
                        pop(&mut stack);
                    }
                    None
                };
                if info.alpha == 1 {
                    stack.push(folded);
                } else {
                    stack.extend(std::iter::repeat_n(None, info.alpha));
                }
            }
        }
        if stack.len() > MAX_ABSTRACT_STACK {
            stack.drain(..stack.len() - MAX_ABSTRACT_STACK);
        }
        if let Some(n) = next_pc {
            work.push((n, stack));
        }
    }
    out
}

/// Non-payable functions conventionally start with
/// `JUMPDEST CALLVALUE [DUP1] ISZERO PUSH dest JUMPI` and revert otherwise.
fn rejects_value(prog: &Program, entry_pc: usize) -> bool {
    let Some(&idx) = prog.index_of_pc.get(&entry_pc) else {
        return false;
    };
    let window: Vec<u8> = prog.instrs[idx..].iter().take(7).map(|i| i.byte).collect();
    let Some(cv) = window.iter().position(|&b| b == op::CALLVALUE) else {
        return false;
    };
    let rest = &window[cv + 1..];
    let Some(z) = rest.iter().position(|&b| b == op::ISZERO) else {
        return false;
    };
    rest[z + 1..].iter().take(2).any(|&b| b == op::JUMPI)
}

fn descriptor(
    name: String,
    selector: Option<Selector>,
    payable: bool,
    params: Vec<super::abi::ParamType>,
    scanned: &BranchSummary,
    iface: Option<&InterfaceFunction>,
) -> FunctionDescriptor {
    let reads = iface
        .and_then(|f| f.reads.clone())
        .unwrap_or_else(|| scanned.reads.clone());
    let writes = iface
        .and_then(|f| f.writes.clone())
        .unwrap_or_else(|| scanned.writes.clone());
    FunctionDescriptor {
        name,
        selector,
        payable,
        mutating: !writes.is_empty(),
        params,
        reads,
        writes,
    }
}

fn unresolved() -> BranchSummary {
    let wild = SlotSet {
        wildcard: true,
        ..Default::default()
    };
    BranchSummary {
        reads: wild.clone(),
        writes: wild,
        can_succeed: true,
        rejects_value: false,
    }
}

/// Builds the manifest for `code`, taking names, parameter types and
/// payability from `iface` when given and scanning storage use per branch.
pub fn derive_manifest(
    code: &Bytecode,
    iface: Option<&Interface>,
) -> Result<Manifest, ManifestError> {
    let prog = Program::new(code);
    let dispatcher = find_dispatcher(code);
    if dispatcher.is_none() && iface.is_none() {
        return Err(ManifestError::NoDispatcher);
    }
    let entry_of = |sel: Selector| {
        dispatcher
            .as_ref()
            .and_then(|d| d.entries.iter().find(|e| e.selector == sel))
            .map(|e| e.entry_pc)
    };
    let scan = |pc: Option<usize>| pc.map(|pc| scan_from(&prog, pc)).unwrap_or_else(unresolved);
    let fallthrough = dispatcher.as_ref().and_then(|d| d.fallthrough_pc);

    let (functions, fallback) = match iface {
        Some(iface) => {
            let mut functions = Vec::new();
            let mut seen = HashSet::new();
            for f in &iface.functions {
                let sel = f.resolved_selector();
                if !seen.insert(sel) {
                    return Err(ManifestError::Invalid(format!("duplicate selector {sel}")));
                }
                let summary = scan(entry_of(sel));
                functions.push(descriptor(
                    f.name.clone(),
                    Some(sel),
                    f.payable,
                    f.params.clone(),
                    &summary,
                    Some(f),
                ));
            }
            let fallback = iface.fallback.as_ref().map(|f| {
                let summary = scan(fallthrough);
                descriptor(
                    f.name.clone(),
                    None,
                    f.payable,
                    Vec::new(),
                    &summary,
                    Some(f),
                )
            });
            (functions, fallback)
        }
        None => {
            let d = dispatcher.as_ref().expect("checked above");
            let mut functions = Vec::new();
            let mut seen = HashSet::new();
            for e in &d.entries {
                if !seen.insert(e.selector) {
                    continue;
                }
                let summary = scan_from(&prog, e.entry_pc);
                let name = format!("fn_{}", e.selector.to_string().trim_start_matches("0x"));
                functions.push(descriptor(
                    name,
                    Some(e.selector),
                    !summary.rejects_value,
                    Vec::new(),
                    &summary,
                    None,
                ));
            }
            let fallback = fallthrough
                .map(|pc| scan_from(&prog, pc))
                .filter(|s| s.can_succeed)
                .map(|s| {
                    descriptor(
                        "fallback".into(),
                        None,
                        !s.rejects_value,
                        Vec::new(),
                        &s,
                        None,
                    )
                });
            (functions, fallback)
        }
    };
    Ok(Manifest {
        contract_name: iface
            .map(|i| i.contract_name.clone())
            .unwrap_or_else(|| "contract".into()),
        functions,
        fallback,
        keyword_list: iface.map(|i| i.keyword_list()).unwrap_or_else(|| {
            super::manifest::DEFAULT_KEYWORDS
                .iter()
                .map(|s| s.to_string())
                .collect()
        }),
        initial_storage: iface.map(|i| i.initial_storage.clone()).unwrap_or_default(),
        initial_balance: iface.and_then(|i| i.initial_balance.clone()),
    })
}

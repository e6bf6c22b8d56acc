//! Interpreter programs with hand-computed final stacks and storage.

use std::collections::BTreeMap;

use crbg_core::evm::word::keccak256;
use crbg_core::evm::{
    assemble, execute_transaction, Address, ErrorKind, Execution, Outcome, TxEnv, World, U256,
};

pub fn me() -> Address {
    Address::synthetic(1)
}

pub fn alice() -> Address {
    Address::synthetic(2)
}

pub fn run_with(src: &str, tx: TxEnv, world: &mut World) -> Execution {
    let code = assemble(src).unwrap_or_else(|e| panic!("{src}: {e}"));
    world.deploy(tx.self_address, code.clone());
    execute_transaction(world, &tx, &code, 10_000)
}

pub fn run(src: &str) -> Execution {
    run_with(src, TxEnv::new(alice(), me()), &mut World::default())
}

pub fn w(v: u64) -> U256 {
    U256::from(v)
}

pub fn neg(v: u64) -> U256 {
    U256::zero().overflowing_sub(U256::from(v)).0
}

pub struct Golden {
    pub name: &'static str,
    pub src: &'static str,
    /// Final stack, top first.
    pub stack: Vec<U256>,
    pub storage: Vec<(u64, U256)>,
    pub outcome: Outcome,
}

fn ok(name: &'static str, src: &'static str, stack: Vec<U256>) -> Golden {
    Golden {
        name,
        src,
        stack,
        storage: Vec::new(),
        outcome: Outcome::Success,
    }
}

pub fn goldens() -> Vec<Golden> {
    let max = U256::MAX;
    let mut g = vec![
        ok("add", "PUSH1 2 PUSH1 3 ADD", vec![w(5)]),
        ok("add wraps", "PUSH1 1 PUSH32 0xffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff ADD", vec![w(0)]),
        ok("sub takes top minus second", "PUSH1 3 PUSH1 10 SUB", vec![w(7)]),
        ok("sub wraps below zero", "PUSH1 1 PUSH1 0 SUB", vec![max]),
        ok("mul", "PUSH1 6 PUSH1 7 MUL", vec![w(42)]),
        ok("div truncates", "PUSH1 3 PUSH1 10 DIV", vec![w(3)]),
        ok("div by zero", "PUSH1 0 PUSH1 10 DIV", vec![w(0)]),
        ok("mod", "PUSH1 3 PUSH1 10 MOD", vec![w(1)]),
        ok("mod by zero", "PUSH1 0 PUSH1 10 MOD", vec![w(0)]),
        ok("sdiv rounds toward zero", "PUSH1 2 PUSH1 7 PUSH1 0 SUB SDIV", vec![neg(3)]),
        ok("smod keeps dividend sign", "PUSH1 3 PUSH1 7 PUSH1 0 SUB SMOD", vec![neg(1)]),
        ok("addmod", "PUSH1 8 PUSH1 5 PUSH1 10 ADDMOD", vec![w(7)]),
        ok("mulmod", "PUSH1 7 PUSH1 5 PUSH1 4 MULMOD", vec![w(6)]),
        ok("exp", "PUSH1 10 PUSH1 2 EXP", vec![w(1024)]),
        ok("signextend negative byte", "PUSH1 0xff PUSH1 0 SIGNEXTEND", vec![max]),
        ok("signextend positive byte", "PUSH2 0x017f PUSH1 0 SIGNEXTEND", vec![w(0x7f)]),
        ok("lt", "PUSH1 2 PUSH1 1 LT", vec![w(1)]),
        ok("gt", "PUSH1 2 PUSH1 1 GT", vec![w(0)]),
        ok("slt with negative", "PUSH1 0 PUSH1 1 PUSH1 0 SUB SLT", vec![w(1)]),
        ok("sgt with negative", "PUSH1 1 PUSH1 0 SUB PUSH1 0 SGT", vec![w(1)]),
        ok("eq", "PUSH1 5 PUSH1 5 EQ", vec![w(1)]),
        ok("iszero", "PUSH1 0 ISZERO PUSH1 9 ISZERO", vec![w(0), w(1)]),
        ok("and", "PUSH1 0x0f PUSH1 0x3c AND", vec![w(0x0c)]),
        ok("or", "PUSH1 0x0f PUSH1 0x3c OR", vec![w(0x3f)]),
        ok("xor", "PUSH1 0x0f PUSH1 0x3c XOR", vec![w(0x33)]),
        ok("not", "PUSH1 0 NOT", vec![max]),
        ok("byte picks big-endian index", "PUSH2 0xabcd PUSH1 30 BYTE", vec![w(0xab)]),
        ok("shl", "PUSH1 1 PUSH1 4 SHL", vec![w(16)]),
        ok("shr", "PUSH1 0xf0 PUSH1 4 SHR", vec![w(0x0f)]),
        ok("sar keeps sign", "PUSH1 0x10 PUSH1 0 SUB PUSH1 4 SAR", vec![max]),
        ok("pop", "PUSH1 1 PUSH1 2 POP", vec![w(1)]),
        ok("dup2", "PUSH1 1 PUSH1 2 DUP2", vec![w(1), w(2), w(1)]),
        ok("swap2", "PUSH1 1 PUSH1 2 PUSH1 3 SWAP2", vec![w(1), w(2), w(3)]),
        ok("mstore then mload", "PUSH1 42 PUSH1 0 MSTORE PUSH1 0 MLOAD", vec![w(42)]),
        ok("mstore8 writes one byte", "PUSH1 0xab PUSH1 31 MSTORE8 PUSH1 0 MLOAD", vec![w(0xab)]),
        ok("msize rounds to words", "PUSH1 1 PUSH1 33 MSTORE8 MSIZE", vec![w(64)]),
        ok("sha3 of empty input", "PUSH1 0 PUSH1 0 SHA3", vec![U256::from_big_endian(&keccak256(b""))]),
        ok(
            "jump to label",
            "PUSH2 dest JUMP\nPUSH1 1 STOP\ndest:\nJUMPDEST PUSH1 2",
            vec![w(2)],
        ),
        ok(
            "jumpi taken on one",
            "PUSH1 1 PUSH2 dest JUMPI\nPUSH1 0xaa STOP\ndest:\nJUMPDEST PUSH1 0xbb",
            vec![w(0xbb)],
        ),
        ok(
            "jumpi taken on any nonzero",
            "PUSH1 2 PUSH2 dest JUMPI\nPUSH1 0xaa STOP\ndest:\nJUMPDEST PUSH1 0xbb",
            vec![w(0xbb)],
        ),
        ok(
            "jumpi falls through on zero",
            "PUSH1 0 PUSH2 dest JUMPI\nPUSH1 0xaa STOP\ndest:\nJUMPDEST PUSH1 0xbb",
            vec![w(0xaa)],
        ),
        ok(
            "jumpi ignores a bad target when not taken",
            "PUSH1 0 PUSH1 0x63 JUMPI PUSH1 0xaa",
            vec![w(0xaa)],
        ),
        ok(
            "loop sums one to five",
            "PUSH1 0 PUSH1 5\nloop:\nJUMPDEST\nDUP1 ISZERO PUSH2 end JUMPI\nDUP1 SWAP2 ADD SWAP1\nPUSH1 1 SWAP1 SUB\nPUSH2 loop JUMP\nend:\nJUMPDEST POP",
            vec![w(15)],
        ),
    ];
    g.push(Golden {
        name: "sstore then sload",
        src: "PUSH1 7 PUSH1 1 SSTORE PUSH1 1 SLOAD",
        stack: vec![w(7)],
        storage: vec![(1, w(7))],
        outcome: Outcome::Success,
    });
    g.push(Golden {
        name: "sstore of zero clears the slot",
        src: "PUSH1 7 PUSH1 1 SSTORE PUSH1 0 PUSH1 1 SSTORE PUSH1 9 PUSH1 2 SSTORE",
        stack: vec![],
        storage: vec![(2, w(9))],
        outcome: Outcome::Success,
    });
    g.push(Golden {
        name: "jumpi taken to a non-jumpdest faults",
        src: "PUSH1 1 PUSH1 0 JUMPI",
        stack: vec![],
        storage: vec![],
        outcome: Outcome::Error(ErrorKind::BadJump),
    });
    g.push(Golden {
        name: "jump into push data faults",
        src: "PUSH1 3 JUMP PUSH1 0x5b",
        stack: vec![],
        storage: vec![],
        outcome: Outcome::Error(ErrorKind::BadJump),
    });
    g.push(Golden {
        name: "add on empty stack underflows",
        src: "PUSH1 1 ADD",
        stack: vec![],
        storage: vec![],
        outcome: Outcome::Error(ErrorKind::StackUnderflow),
    });
    g.push(Golden {
        name: "unlisted byte is invalid",
        src: ".data 0xfe",
        stack: vec![],
        storage: vec![],
        outcome: Outcome::Error(ErrorKind::InvalidOpcode),
    });
    g
}

/// Runs one golden program in a fresh world.
pub fn check(g: &Golden) -> Result<(), String> {
    let mut world = World::default();
    let exec = run_with(g.src, TxEnv::new(alice(), me()), &mut world);
    ensure!(
        exec.trace.outcome == g.outcome,
        "{}: outcome {:?}, expected {:?}",
        g.name,
        exec.trace.outcome,
        g.outcome
    );
    if g.outcome.is_success() {
        ensure!(
            exec.state.stack == g.stack,
            "{}: stack {:?}, expected {:?}",
            g.name,
            exec.state.stack,
            g.stack
        );
        let expected: BTreeMap<U256, U256> = g.storage.iter().map(|&(k, v)| (w(k), v)).collect();
        let got = &world.accounts[&me()].storage;
        ensure!(
            *got == expected,
            "{}: storage {got:?}, expected {expected:?}",
            g.name
        );
    }
    Ok(())
}

/// Runs the whole suite; returns the number of programs.
pub fn check_suite() -> Result<usize, String> {
    let all = goldens();
    ensure!(all.len() >= 40, "suite has only {} programs", all.len());
    for g in &all {
        check(g)?;
    }
    Ok(all.len())
}

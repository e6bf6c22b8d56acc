//! Minimal deterministic EVM: vocabulary, assembler and interpreter.

mod asm;
mod code;
mod interp;
pub mod op;
mod vocab;
pub mod word;

pub use asm::{assemble, AsmError};
pub use code::{disassemble, Bytecode, Instruction};
pub use interp::{
    execute_transaction, execute_transaction_with, Account, ErrorKind, Execution,
    ExecutionObserver, ExecutionTrace, Flow, MachineState, NoopObserver, Outcome, StepContext,
    StepRecord, StorageWrite, TxEnv, World, CALL_DEPTH_LIMIT, DEFAULT_STEP_LIMIT, MEMORY_LIMIT,
    STACK_LIMIT,
};
pub use primitive_types::U256;
pub use vocab::{immediate_len, opcode_vocabulary, OpcodeInfo, VocabError, Vocabulary, VOCAB_SIZE};
pub use word::Address;

//! Dynamic taint tracking over the interpreter.
//!
//! Ten source opcodes introduce eight labels; fifteen sink opcodes report the
//! labels of their inputs as [`DataFlowEvent`]s. Taint lives on a shadow stack,
//! a per-byte shadow memory and a storage map that persists across
//! transactions.

mod engine;
mod set;

pub use engine::{
    dump_events, memory_taint_transfer, storage_carryover, DataFlowEvent, MemoryAccess,
    TaintEngine, TaintError, TaintState, TaintStorage,
};
pub use set::{is_sink, is_source, propagate, Provenance, TaintLabel, TaintSet};

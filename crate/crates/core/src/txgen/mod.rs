//! Function discovery, read-after-write dependencies and transaction
//! sequence generation.

pub mod abi;
mod generate;
mod manifest;
mod scan;

pub use generate::{
    generate_sequences, generate_transaction, random_choose, CallerPool, ChoiceRecord,
    ChoiceSource, Generated, GeneratorConfig, Transaction, TxSequence, ValueSchedule,
    DEFAULT_BASE_VALUE, DEFAULT_MAX_SEQUENCES, DEFAULT_POOL_SIZE,
};
pub use manifest::{
    build_dependency_map, categorize, FnId, FunctionDescriptor, FunctionGroups, Interface,
    InterfaceFunction, Manifest, ManifestError, Selector, SlotSet, DEFAULT_KEYWORDS,
};
pub use scan::{
    derive_manifest, find_dispatcher, scan_branch, BranchSummary, DispatchEntry, Dispatcher,
};

//! Runtime behavior graphs for smart-contract classification.
//!
//! The pipeline executes contracts under a taint-tracking interpreter
//! ([`evm`], [`taint`]), drives them with generated transaction sequences
//! ([`txgen`]), turns the executions into behavior graphs ([`crbg`]) and
//! classifies those graphs with an edge-featured graph attention network
//! ([`gnn`]).

pub mod crbg;
pub mod evm;
pub mod gnn;
pub mod pipeline;
pub mod taint;
pub mod txgen;

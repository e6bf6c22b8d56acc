use std::fmt;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evm::{immediate_len, Address, ExecutionTrace, Flow, Outcome};
use crate::taint::{DataFlowEvent, TaintLabel};
use crate::txgen::Selector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    Adjacent,
    Jump,
    Call,
    Return,
    Create,
    Halt,
    CallValue,
    Calldata,
    CalldataSize,
    Caller,
    Origin,
    BlockEnv,
    Balance,
    SelfAddress,
    Connection,
}

pub const EDGE_TYPES: usize = 15;

impl EdgeType {
    pub const ALL: [EdgeType; EDGE_TYPES] = [
        EdgeType::Adjacent,
        EdgeType::Jump,
        EdgeType::Call,
        EdgeType::Return,
        EdgeType::Create,
        EdgeType::Halt,
        EdgeType::CallValue,
        EdgeType::Calldata,
        EdgeType::CalldataSize,
        EdgeType::Caller,
        EdgeType::Origin,
        EdgeType::BlockEnv,
        EdgeType::Balance,
        EdgeType::SelfAddress,
        EdgeType::Connection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_control(self) -> bool {
        self.index() < 6
    }

    pub fn is_data(self) -> bool {
        (6..14).contains(&self.index())
    }

    pub fn of_label(label: TaintLabel) -> EdgeType {
        EdgeType::ALL[6 + label.index()]
    }

    /// Control edge for a step that left via `flow`.
    pub fn of_flow(flow: Flow) -> EdgeType {
        match flow {
            Flow::Next => EdgeType::Adjacent,
            Flow::Jump => EdgeType::Jump,
            Flow::Call => EdgeType::Call,
            Flow::Create => EdgeType::Create,
            Flow::Return => EdgeType::Return,
            Flow::Halt => EdgeType::Halt,
        }
    }

    pub fn one_hot(self) -> [f64; EDGE_TYPES] {
        let mut v = [0.0; EDGE_TYPES];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNode {
    /// `None` marks the per-transaction terminal sentinel.
    pub opcode: Option<u8>,
    pub tx_index: u32,
    pub step_index: u32,
    pub pc: u32,
}

impl RawNode {
    pub fn is_sentinel(&self) -> bool {
        self.opcode.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEdge {
    pub src: u32,
    pub dst: u32,
    pub kind: EdgeType,
    /// For data-flow edges: the value passed through storage on its way.
    pub through_storage: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxMeta {
    pub tx_index: u32,
    pub selector: Option<Selector>,
    pub value: U256,
    pub caller: Address,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGraph {
    pub nodes: Vec<RawNode>,
    pub edges: Vec<RawEdge>,
    pub tx_meta: Vec<TxMeta>,
    /// Cross-transaction flows that end in this graph's transaction.
    pub inbound: Vec<DataFlowEvent>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("event {src}->{sink} references a step outside the {len}-step trace")]
    EventOutOfRange { src: u32, sink: u32, len: usize },
    #[error("graphs must be ordered by transaction index")]
    Unordered,
}

impl RawGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tx_index(&self) -> u32 {
        self.tx_meta.first().map(|m| m.tx_index).unwrap_or(0)
    }

    pub fn contains_opcode(&self, opcode: u8) -> bool {
        self.nodes.iter().any(|n| n.opcode == Some(opcode))
    }

    pub fn count(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Index of the sentinel closing the first transaction in this graph.
    pub fn first_sentinel(&self) -> Option<u32> {
        self.nodes
            .iter()
            .position(|n| n.is_sentinel())
            .map(|i| i as u32)
    }

    pub fn last_sentinel(&self) -> Option<u32> {
        self.nodes
            .iter()
            .rposition(|n| n.is_sentinel())
            .map(|i| i as u32)
    }

    fn node_of(&self, tx: u32, step: u32) -> Option<u32> {
        // nodes of one transaction are contiguous and ordered by step
        let start = self
            .nodes
            .iter()
            .position(|n| n.tx_index == tx && !n.is_sentinel())?;
        let idx = start + step as usize;
        let n = self.nodes.get(idx)?;
        (n.tx_index == tx && n.step_index == step && !n.is_sentinel()).then_some(idx as u32)
    }
}

/// One node per executed step plus a sentinel; control edges follow each
/// step's recorded flow, data-flow edges follow intra-transaction events.
pub fn build_raw_graph(
    trace: &ExecutionTrace,
    events: &[DataFlowEvent],
    meta: TxMeta,
) -> Result<RawGraph, GraphError> {
    if trace.steps.is_empty() {
        return Err(GraphError::EmptyTrace);
    }
    let tx = meta.tx_index;
    let n = trace.steps.len();
    let mut nodes: Vec<RawNode> = trace
        .steps
        .iter()
        .map(|s| RawNode {
            opcode: Some(s.opcode),
            tx_index: tx,
            step_index: s.step_index,
            pc: s.pc,
        })
        .collect();
    let sentinel = n as u32;
    nodes.push(RawNode {
        opcode: None,
        tx_index: tx,
        step_index: n as u32,
        pc: 0,
    });

    let mut edges = Vec::with_capacity(n + events.len());
    for (i, s) in trace.steps.iter().enumerate() {
        let dst = if i + 1 == n { sentinel } else { i as u32 + 1 };
        let kind = if i + 1 == n {
            EdgeType::Halt
        } else {
            EdgeType::of_flow(s.flow)
        };
        edges.push(RawEdge {
            src: i as u32,
            dst,
            kind,
            through_storage: false,
        });
    }
    let mut inbound = Vec::new();
    for e in events.iter().filter(|e| e.sink_tx == tx) {
        if e.sink_step as usize >= n || (e.source_tx == tx && e.source_step as usize >= n) {
            return Err(GraphError::EventOutOfRange {
                src: e.source_step,
                sink: e.sink_step,
                len: n,
            });
        }
        if e.is_cross_tx() {
            inbound.push(*e);
        } else {
            edges.push(RawEdge {
                src: e.source_step,
                dst: e.sink_step,
                kind: EdgeType::of_label(e.label),
                through_storage: e.through_storage,
            });
        }
    }
    Ok(RawGraph {
        nodes,
        edges,
        tx_meta: vec![meta],
        inbound,
    })
}

/// Whether `trace` step `i` falls through to the next instruction of its frame.
pub fn is_sequential(trace: &ExecutionTrace, i: usize) -> bool {
    let (a, b) = (&trace.steps[i], &trace.steps[i + 1]);
    a.depth == b.depth
        && a.address == b.address
        && b.pc as usize == a.pc as usize + 1 + immediate_len(a.opcode)
}

/// Concatenates transaction graphs in order, links each sentinel to the next
/// graph's first node, and adds cross-transaction data flow whose endpoints
/// both survive.
pub fn join_graphs(
    graphs: &[RawGraph],
    cross_events: &[DataFlowEvent],
) -> Result<RawGraph, GraphError> {
    if graphs
        .windows(2)
        .any(|w| w[0].tx_index() >= w[1].tx_index())
    {
        return Err(GraphError::Unordered);
    }
    let mut out = RawGraph {
        nodes: Vec::new(),
        edges: Vec::new(),
        tx_meta: Vec::new(),
        inbound: Vec::new(),
    };
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut prev_sentinel: Option<u32> = None;
    for g in graphs {
        let base = out.nodes.len() as u32;
        offsets.push(base);
        if let Some(s) = prev_sentinel {
            out.edges.push(RawEdge {
                src: s,
                dst: base,
                kind: EdgeType::Connection,
                through_storage: false,
            });
        }
        out.nodes.extend_from_slice(&g.nodes);
        out.edges.extend(g.edges.iter().map(|e| RawEdge {
            src: e.src + base,
            dst: e.dst + base,
            ..*e
        }));
        out.tx_meta.extend(g.tx_meta.iter().cloned());
        prev_sentinel = g.last_sentinel().map(|s| s + base);
    }
    for e in cross_events.iter().filter(|e| e.is_cross_tx()) {
        let (Some(src), Some(dst)) = (
            out.node_of(e.source_tx, e.source_step),
            out.node_of(e.sink_tx, e.sink_step),
        ) else {
            continue;
        };
        out.edges.push(RawEdge {
            src,
            dst,
            kind: EdgeType::of_label(e.label),
            through_storage: e.through_storage,
        });
    }
    Ok(out)
}

/// Weak connectivity over all edges.
pub fn is_weakly_connected(g: &RawGraph) -> bool {
    let n = g.nodes.len();
    if n == 0 {
        return true;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &g.edges {
        let (a, b) = (
            find(&mut parent, e.src as usize),
            find(&mut parent, e.dst as usize),
        );
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    (1..n).all(|i| find(&mut parent, i) == root)
}

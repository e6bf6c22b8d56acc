//! Contract runtime behavior graphs: per-transaction graphs from traces and
//! taint events, pruning, joining and feature attachment.

mod features;
mod graph;
mod prune;

pub use features::{
    embed_description, featurize, Crbg, CrbgEdge, CrbgNode, FeatureError, GraphLabel,
    NodeFeaturizer, RecordError, NODE_DIM, TEXT_DIM,
};
pub use graph::{
    build_raw_graph, is_sequential, is_weakly_connected, join_graphs, EdgeType, GraphError,
    RawEdge, RawGraph, RawNode, TxMeta, EDGE_TYPES,
};
pub use prune::{
    control_edge_count, is_investment_like, is_reward_like, prune_behavioral, prune_similar,
    GraphSignature, DEFAULT_SIMILARITY_THRESHOLD,
};

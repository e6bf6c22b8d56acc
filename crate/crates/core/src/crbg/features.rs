use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{EdgeType, RawGraph, EDGE_TYPES};
use crate::evm::{opcode_vocabulary, Vocabulary};

pub const TEXT_DIM: usize = 100;
pub const NODE_DIM: usize = TEXT_DIM + 2;

const BUCKET_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const SIGN_SEED: u64 = 0xc2b2_ae3d_27d4_eb4f;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // final avalanche so short tokens spread over buckets
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("opcode {0:#04x} is not in the vocabulary")]
    UnknownOpcode(u8),
}

/// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
pub fn embed_description(text: &str) -> Result<[f64; TEXT_DIM], FeatureError> {
    let mut v = [0.0; TEXT_DIM];
    let lower = text.to_lowercase();
    let mut any = false;
    for tok in lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        any = true;
        let bucket = (fnv1a(BUCKET_SEED, tok.as_bytes()) % TEXT_DIM as u64) as usize;
        let sign = if fnv1a(SIGN_SEED, tok.as_bytes()) >> 63 == 0 {
            1.0
        } else {
            -1.0
        };
        v[bucket] += sign;
    }
    if !any {
        return Err(FeatureError::EmptyText);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every token cancelled out; fall back to the unsigned histogram
        for tok in lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            v[(fnv1a(BUCKET_SEED, tok.as_bytes()) % TEXT_DIM as u64) as usize] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        return Ok(v);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphLabel {
    Ponzi,
    Benign,
    Unlabeled,
}

impl GraphLabel {
    /// Positive class index used by the classifier.
    pub fn class(self) -> Option<usize> {
        match self {
            GraphLabel::Ponzi => Some(1),
            GraphLabel::Benign => Some(0),
            GraphLabel::Unlabeled => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbgNode {
    pub id: u32,
    pub opcode: Option<u8>,
    pub feat: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbgEdge {
    pub src: u32,
    pub dst: u32,
    #[serde(rename = "type")]
    pub kind: EdgeType,
    pub feat: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crbg {
    pub name: String,
    pub nodes: Vec<CrbgNode>,
    pub edges: Vec<CrbgEdge>,
    pub label: GraphLabel,
}

/// Feature rows per opcode, computed once per vocabulary.
pub struct NodeFeaturizer {
    rows: HashMap<u8, Vec<f64>>,
}

impl NodeFeaturizer {
    pub fn new(vocab: &Vocabulary) -> Result<Self, FeatureError> {
        let mut rows = HashMap::new();
        for info in vocab.entries() {
            let mut row = embed_description(&info.description)?.to_vec();
            row.push(info.alpha as f64);
            row.push(info.delta as f64);
            rows.insert(info.value, row);
        }
        Ok(NodeFeaturizer { rows })
    }

    pub fn standard() -> &'static NodeFeaturizer {
        static F: std::sync::OnceLock<NodeFeaturizer> = std::sync::OnceLock::new();
        F.get_or_init(|| {
            NodeFeaturizer::new(opcode_vocabulary()).expect("shipped vocabulary has descriptions")
        })
    }

    pub fn row(&self, opcode: Option<u8>) -> Result<Vec<f64>, FeatureError> {
        match opcode {
            None => Ok(vec![0.0; NODE_DIM]),
            Some(op) => self
                .rows
                .get(&op)
                .cloned()
                .ok_or(FeatureError::UnknownOpcode(op)),
        }
    }
}

/// Attaches node and edge features to a joined graph.
pub fn featurize(
    graph: &RawGraph,
    featurizer: &NodeFeaturizer,
    name: &str,
    label: GraphLabel,
) -> Result<Crbg, FeatureError> {
    let nodes = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            Ok(CrbgNode {
                id: i as u32,
                opcode: n.opcode,
                feat: featurizer.row(n.opcode)?,
            })
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    let edges = graph
        .edges
        .iter()
        .map(|e| CrbgEdge {
            src: e.src,
            dst: e.dst,
            kind: e.kind,
            feat: e.kind.one_hot().to_vec(),
        })
        .collect();
    Ok(Crbg {
        name: name.to_string(),
        nodes,
        edges,
        label,
    })
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed graph record: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid graph record: {0}")]
    Invalid(String),
}

impl Crbg {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("graph records always serialize")
    }

    pub fn from_record(text: &str) -> Result<Crbg, RecordError> {
        let g: Crbg = serde_json::from_str(text)?;
        g.validate().map_err(RecordError::Invalid)?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id as usize != i {
                return Err(format!("node ids must be dense, found {} at {i}", n.id));
            }
            if n.feat.len() != NODE_DIM || n.feat.iter().any(|x| !x.is_finite()) {
                return Err(format!(
                    "node {i} feature must have {NODE_DIM} finite entries"
                ));
            }
        }
        for e in &self.edges {
            if e.src as usize >= self.nodes.len() || e.dst as usize >= self.nodes.len() {
                return Err(format!("edge {}->{} has a missing endpoint", e.src, e.dst));
            }
            if e.feat.len() != EDGE_TYPES || e.feat != e.kind.one_hot() {
                return Err(format!(
                    "edge {}->{} feature is not the one-hot of {}",
                    e.src, e.dst, e.kind
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn embedding_is_unit_and_deterministic() {
        for info in opcode_vocabulary().entries() {
            let v = embed_description(&info.description).unwrap();
            assert!(
                (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12,
                "{}",
                info.mnemonic
            );
        }
        let a = embed_description("conditionally alter the program counter").unwrap();
        let b = embed_description("conditionally alter the program counter").unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        assert_eq!(embed_description(" ,. "), Err(FeatureError::EmptyText));
    }

    #[test]
    fn distinct_descriptions_are_less_similar() {
        let vocab = opcode_vocabulary();
        let jumpi = embed_description(&vocab.lookup("JUMPI").unwrap().description).unwrap();
        let add = embed_description(&vocab.lookup("ADD").unwrap().description).unwrap();
        assert!(cos(&jumpi, &add) < cos(&jumpi, &jumpi));
        assert!((cos(&jumpi, &jumpi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jumpi_row_ends_with_alpha_delta() {
        let f = NodeFeaturizer::standard();
        let row = f.row(Some(crate::evm::op::JUMPI)).unwrap();
        assert_eq!(row.len(), NODE_DIM);
        assert_eq!((row[100], row[101]), (0.0, 2.0));
        assert_eq!(f.row(None).unwrap(), vec![0.0; NODE_DIM]);
        assert_eq!(f.row(Some(0xfe)), Err(FeatureError::UnknownOpcode(0xfe)));
    }

    #[test]
    fn truncated_record_is_an_error() {
        let g = Crbg {
            name: "t".into(),
            nodes: vec![CrbgNode {
                id: 0,
                opcode: Some(0),
                feat: vec![0.5; NODE_DIM],
            }],
            edges: vec![CrbgEdge {
                src: 0,
                dst: 0,
                kind: EdgeType::Jump,
                feat: EdgeType::Jump.one_hot().to_vec(),
            }],
            label: GraphLabel::Benign,
        };
        let rec = g.to_record();
        assert_eq!(Crbg::from_record(&rec).unwrap(), g);
        assert!(Crbg::from_record(&rec[..rec.len() / 2]).is_err());
        let mut bad = g.clone();
        bad.edges[0].feat[0] = 1.0;
        assert!(Crbg::from_record(&bad.to_record()).is_err());
    }
}

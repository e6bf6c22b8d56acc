//! The opcode vocabulary: value, mnemonic, stack arity and a plain-text
//! description for each of the 139 operations known to the interpreter.
//!
//! The table lives in `assets/opcodes.tsv` and is embedded at build time.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SHIPPED_ASSET: &str = include_str!("../../assets/opcodes.tsv");

/// Number of entries in the shipped vocabulary.
pub const VOCAB_SIZE: usize = 139;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeInfo {
    pub value: u8,
    pub mnemonic: String,
    /// Stack items removed.
    pub delta: usize,
    /// Stack items added.
    pub alpha: usize,
    pub description: String,
}

impl OpcodeInfo {
    /// Immediate bytes following the opcode (PUSH1..PUSH32).
    pub fn immediate_len(&self) -> usize {
        immediate_len(self.value)
    }
}

pub fn immediate_len(value: u8) -> usize {
    if (0x60..=0x7f).contains(&value) {
        (value - 0x5f) as usize
    } else {
        0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("vocabulary has duplicate opcode value 0x{0:02x}")]
    DuplicateValue(u8),
    #[error("vocabulary has duplicate mnemonic {0}")]
    DuplicateMnemonic(String),
    #[error("vocabulary is empty")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<OpcodeInfo>,
    by_value: [Option<u16>; 256],
    by_mnemonic: HashMap<String, usize>,
}

impl Vocabulary {
    /// Parses the tab-separated table. The first line is a header.
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let bad = |reason: &str| VocabError::Malformed {
                line: lineno,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad("expected 5 tab-separated columns"));
            }
            let value = u8::from_str_radix(cols[0].trim_start_matches("0x"), 16)
                .map_err(|_| bad("bad opcode value"))?;
            let delta = cols[2].parse().map_err(|_| bad("bad delta"))?;
            let alpha = cols[3].parse().map_err(|_| bad("bad alpha"))?;
            let description = cols[4].trim().to_string();
            if cols[1].is_empty() || description.is_empty() {
                return Err(bad("empty mnemonic or description"));
            }
            entries.push(OpcodeInfo {
                value,
                mnemonic: cols[1].to_string(),
                delta,
                alpha,
                description,
            });
        }
        if entries.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut by_value = [None; 256];
        let mut by_mnemonic = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_value[e.value as usize].replace(i as u16).is_some() {
                return Err(VocabError::DuplicateValue(e.value));
            }
            if by_mnemonic.insert(e.mnemonic.clone(), i).is_some() {
                return Err(VocabError::DuplicateMnemonic(e.mnemonic.clone()));
            }
        }
        Ok(Vocabulary {
            entries,
            by_value,
            by_mnemonic,
        })
    }

    pub fn entries(&self) -> &[OpcodeInfo] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, value: u8) -> Option<&OpcodeInfo> {
        self.by_value[value as usize].map(|i| &self.entries[i as usize])
    }

    /// Position of an opcode within the vocabulary ordering (histogram index).
    pub fn index_of(&self, value: u8) -> Option<usize> {
        self.by_value[value as usize].map(|i| i as usize)
    }

    pub fn lookup(&self, mnemonic: &str) -> Option<&OpcodeInfo> {
        self.by_mnemonic.get(mnemonic).map(|&i| &self.entries[i])
    }
}

/// The shipped vocabulary, parsed once.
pub fn opcode_vocabulary() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    VOCAB.get_or_init(|| {
        Vocabulary::parse(SHIPPED_ASSET).expect("shipped opcode table is well-formed")
    })
}

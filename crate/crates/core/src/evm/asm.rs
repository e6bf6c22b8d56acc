//! Textual assembler for authoring contracts.
//!
//! Syntax: whitespace-separated tokens, `;` starts a comment, `name:` defines
//! a label. `PUSHn` takes one immediate: decimal, `0x` hex, a label name, or
//! `@signature(args)` for a 4-byte function selector. A bare `PUSH` picks the
//! narrowest width for numbers and two bytes for labels. `.data 0x...` emits
//! raw bytes.

use std::collections::HashMap;

use primitive_types::U256;
use thiserror::Error;

use super::code::Bytecode;
use super::vocab::opcode_vocabulary;
use super::word::{selector_of, word_to_bytes};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{token}`")]
    UnknownMnemonic { line: u32, token: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: u32, label: String },
    #[error("line {line}: label `{label}` defined twice")]
    DuplicateLabel { line: u32, label: String },
    #[error("line {line}: immediate `{token}` does not fit in {width} byte(s)")]
    ImmediateOutOfRange {
        line: u32,
        token: String,
        width: usize,
    },
    #[error("line {line}: `{mnemonic}` needs an immediate")]
    MissingImmediate { line: u32, mnemonic: String },
    #[error("line {line}: malformed immediate `{token}`")]
    BadImmediate { line: u32, token: String },
}

#[derive(Debug)]
enum Imm {
    Value(U256),
    Label(String),
}

#[derive(Debug)]
enum Item {
    Op {
        byte: u8,
        line: u32,
    },
    Push {
        width: usize,
        imm: Imm,
        token: String,
        line: u32,
    },
    Data {
        bytes: Vec<u8>,
        line: u32,
    },
}

impl Item {
    fn size(&self) -> usize {
        match self {
            Item::Op { .. } => 1,
            Item::Push { width, .. } => 1 + width,
            Item::Data { bytes, .. } => bytes.len(),
        }
    }
}

fn parse_value(token: &str) -> Option<U256> {
    if let Some(sig) = token.strip_prefix('@') {
        return Some(U256::from_big_endian(&selector_of(sig)));
    }
    if let Some(hex) = token
        .strip_prefix("0x")
        .or_else(|| token.strip_prefix("0X"))
    {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        return U256::from_str_radix(hex, 16).ok();
    }
    if token.chars().all(|c| c.is_ascii_digit()) {
        return U256::from_dec_str(token).ok();
    }
    None
}

fn byte_width(v: U256) -> usize {
    v.bits().div_ceil(8).max(1)
}

fn is_label_name(token: &str) -> bool {
    let mut chars = token.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_hex_bytes(token: &str) -> Option<Vec<u8>> {
    let hex = token.strip_prefix("0x")?;
    if hex.len() % 2 != 0 {
        return None;
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
        .collect()
}

pub fn assemble(text: &str) -> Result<Bytecode, AsmError> {
    let vocab = opcode_vocabulary();
    let mut items = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut offset = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let body = raw.split(';').next().unwrap_or("");
        let mut tokens = body.split_whitespace();
        while let Some(tok) = tokens.next() {
            if let Some(name) = tok.strip_suffix(':') {
                if labels.insert(name.to_string(), offset).is_some() {
                    return Err(AsmError::DuplicateLabel {
                        line,
                        label: name.to_string(),
                    });
                }
                continue;
            }
            if tok == ".data" {
                let arg = tokens.next().ok_or_else(|| AsmError::MissingImmediate {
                    line,
                    mnemonic: tok.into(),
                })?;
                let bytes = parse_hex_bytes(arg).ok_or_else(|| AsmError::BadImmediate {
                    line,
                    token: arg.into(),
                })?;
                offset += bytes.len();
                items.push(Item::Data { bytes, line });
                continue;
            }
            let upper = tok.to_ascii_uppercase();
            if upper == "PUSH" || (upper.starts_with("PUSH") && vocab.lookup(&upper).is_some()) {
                let arg = tokens.next().ok_or_else(|| AsmError::MissingImmediate {
                    line,
                    mnemonic: upper.clone(),
                })?;
                let imm = match parse_value(arg) {
                    Some(v) => Imm::Value(v),
                    None if is_label_name(arg) => Imm::Label(arg.to_string()),
                    None => {
                        return Err(AsmError::BadImmediate {
                            line,
                            token: arg.into(),
                        })
                    }
                };
                let width = if upper == "PUSH" {
                    match &imm {
                        Imm::Value(v) => byte_width(*v),
                        Imm::Label(_) => 2,
                    }
                } else {
                    vocab.lookup(&upper).map(|i| i.immediate_len()).unwrap_or(0)
                };
                if let Imm::Value(v) = &imm {
                    if byte_width(*v) > width {
                        return Err(AsmError::ImmediateOutOfRange {
                            line,
                            token: arg.into(),
                            width,
                        });
                    }
                }
                let item = Item::Push {
                    width,
                    imm,
                    token: arg.to_string(),
                    line,
                };
                offset += item.size();
                items.push(item);
                continue;
            }
            match vocab.lookup(&upper) {
                Some(info) => {
                    items.push(Item::Op {
                        byte: info.value,
                        line,
                    });
                    offset += 1;
                }
                None => {
                    return Err(AsmError::UnknownMnemonic {
                        line,
                        token: tok.to_string(),
                    })
                }
            }
        }
    }

    let mut code = Vec::with_capacity(offset);
    let mut lines = Vec::with_capacity(offset);
    for item in &items {
        match item {
            Item::Op { byte, line } => {
                code.push(*byte);
                lines.push(*line);
            }
            Item::Push {
                width,
                imm,
                token,
                line,
            } => {
                let value = match imm {
                    Imm::Value(v) => *v,
                    Imm::Label(name) => match labels.get(name) {
                        Some(&pc) => U256::from(pc),
                        None => {
                            return Err(AsmError::UndefinedLabel {
                                line: *line,
                                label: name.clone(),
                            })
                        }
                    },
                };
                if byte_width(value) > *width {
                    return Err(AsmError::ImmediateOutOfRange {
                        line: *line,
                        token: token.clone(),
                        width: *width,
                    });
                }
                code.push(0x5f + *width as u8);
                code.extend_from_slice(&word_to_bytes(value)[32 - width..]);
                lines.extend(std::iter::repeat_n(*line, 1 + width));
            }
            Item::Data { bytes, line } => {
                code.extend_from_slice(bytes);
                lines.extend(std::iter::repeat_n(*line, bytes.len()));
            }
        }
    }
    Ok(Bytecode::new(code).with_source_map(lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::code::disassemble;

    #[test]
    fn encodes_straight_line_program() {
        let code = assemble("PUSH1 0x01 PUSH1 0x02 ADD STOP").unwrap();
        assert_eq!(code.bytes(), &[0x60, 0x01, 0x60, 0x02, 0x01, 0x00]);
    }

    #[test]
    fn label_at_offset_zero_resolves_to_zero() {
        let code = assemble("L: JUMPDEST\nPUSH1 L JUMP").unwrap();
        assert_eq!(code.bytes(), &[0x5b, 0x60, 0x00, 0x56]);
    }

    #[test]
    fn forward_labels_and_comments() {
        let src = "; dispatcher\nPUSH2 end JUMP ; skip\nSTOP\nend: JUMPDEST STOP\n";
        let code = assemble(src).unwrap();
        assert_eq!(code.bytes(), &[0x61, 0x00, 0x05, 0x56, 0x00, 0x5b, 0x00]);
        assert_eq!(code.source_line(0), Some(2));
        assert_eq!(code.source_line(5), Some(4));
    }

    #[test]
    fn bare_push_picks_width() {
        let code = assemble("PUSH 0 PUSH 256 PUSH x x:").unwrap();
        assert_eq!(
            code.bytes(),
            &[0x60, 0x00, 0x61, 0x01, 0x00, 0x61, 0x00, 0x08]
        );
    }

    #[test]
    fn selector_immediates() {
        let code = assemble("PUSH4 @transfer(address,uint256)").unwrap();
        assert_eq!(code.bytes(), &[0x63, 0xa9, 0x05, 0x9c, 0xbb]);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            assemble("PUSH1 1\nFROB").unwrap_err(),
            AsmError::UnknownMnemonic {
                line: 2,
                token: "FROB".into()
            }
        );
        assert_eq!(
            assemble("PUSH1 nowhere JUMP").unwrap_err(),
            AsmError::UndefinedLabel {
                line: 1,
                label: "nowhere".into()
            }
        );
        assert!(matches!(
            assemble("PUSH1 256").unwrap_err(),
            AsmError::ImmediateOutOfRange { width: 1, .. }
        ));
        assert!(matches!(
            assemble("PUSH2").unwrap_err(),
            AsmError::MissingImmediate { .. }
        ));
        assert!(matches!(
            assemble("a: a:").unwrap_err(),
            AsmError::DuplicateLabel { .. }
        ));
    }

    #[test]
    fn label_beyond_push1_range_is_rejected() {
        let mut src = String::from("PUSH1 far JUMP\n");
        for _ in 0..300 {
            src.push_str("JUMPDEST\n");
        }
        src.push_str("far: JUMPDEST");
        assert!(matches!(
            assemble(&src).unwrap_err(),
            AsmError::ImmediateOutOfRange { .. }
        ));
    }

    #[test]
    fn round_trips_mnemonics() {
        let src = "PUSH1 0x80 PUSH1 0x40 MSTORE CALLVALUE DUP1 ISZERO PUSH2 ok JUMPI PUSH1 0 DUP1 REVERT ok: JUMPDEST POP STOP";
        let code = assemble(src).unwrap();
        let names: Vec<_> = disassemble(&code)
            .iter()
            .map(|i| i.mnemonic().to_string())
            .collect();
        let expected: Vec<_> = src
            .split_whitespace()
            .filter(|t| {
                !t.ends_with(':') && !t.starts_with("0x") && t.parse::<u64>().is_err() && *t != "ok"
            })
            .collect();
        assert_eq!(names, expected);
    }
}

use std::fmt;
use std::sync::Arc;

use super::vocab::{immediate_len, opcode_vocabulary, OpcodeInfo};

/// Contract code plus a precomputed jump-destination map.
#[derive(Clone, PartialEq, Eq)]
pub struct Bytecode {
    code: Arc<[u8]>,
    jumpdests: Arc<[bool]>,
    source_map: Option<Arc<[u32]>>,
}

impl Bytecode {
    pub fn new(code: Vec<u8>) -> Self {
        let jumpdests = analyze_jumpdests(&code);
        Bytecode {
            code: code.into(),
            jumpdests: jumpdests.into(),
            source_map: None,
        }
    }

    /// Attaches a pc → source line map (one entry per code byte).
    pub fn with_source_map(mut self, lines: Vec<u32>) -> Self {
        debug_assert_eq!(lines.len(), self.code.len());
        self.source_map = Some(lines.into());
        self
    }

    pub fn bytes(&self) -> &[u8] {
        &self.code
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    pub fn is_jumpdest(&self, pc: usize) -> bool {
        self.jumpdests.get(pc).copied().unwrap_or(false)
    }

    pub fn source_line(&self, pc: usize) -> Option<u32> {
        self.source_map.as_ref().and_then(|m| m.get(pc).copied())
    }

    pub fn to_hex(&self) -> String {
        self.code.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.trim().trim_start_matches("0x");
        if !s.len().is_multiple_of(2) {
            return None;
        }
        let bytes = (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        Some(Bytecode::new(bytes))
    }
}

impl fmt::Debug for Bytecode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytecode(0x{})", self.to_hex())
    }
}

impl Default for Bytecode {
    fn default() -> Self {
        Bytecode::new(Vec::new())
    }
}

fn analyze_jumpdests(code: &[u8]) -> Vec<bool> {
    let mut out = vec![false; code.len()];
    let mut pc = 0;
    while pc < code.len() {
        let op = code[pc];
        if op == 0x5b {
            out[pc] = true;
        }
        pc += 1 + immediate_len(op);
    }
    out
}

/// One decoded instruction. `info` is `None` for the INVALID pseudo-op, which
/// covers bytes outside the vocabulary and truncated push immediates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub pc: usize,
    pub byte: u8,
    pub info: Option<&'static OpcodeInfo>,
    pub immediate: Vec<u8>,
}

impl Instruction {
    pub fn mnemonic(&self) -> &str {
        self.info.map(|i| i.mnemonic.as_str()).unwrap_or("INVALID")
    }
}

pub fn disassemble(code: &Bytecode) -> Vec<Instruction> {
    let vocab = opcode_vocabulary();
    let bytes = code.bytes();
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < bytes.len() {
        let byte = bytes[pc];
        let imm = immediate_len(byte);
        match vocab.get(byte) {
            Some(info) if pc + imm < bytes.len() => {
                out.push(Instruction {
                    pc,
                    byte,
                    info: Some(info),
                    immediate: bytes[pc + 1..pc + 1 + imm].to_vec(),
                });
                pc += 1 + imm;
            }
            Some(_) => {
                // push immediate runs past the end of code
                out.push(Instruction {
                    pc,
                    byte,
                    info: None,
                    immediate: bytes[pc + 1..].to_vec(),
                });
                pc = bytes.len();
            }
            None => {
                out.push(Instruction {
                    pc,
                    byte,
                    info: None,
                    immediate: Vec::new(),
                });
                pc += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_single_push() {
        let ins = disassemble(&Bytecode::new(vec![0x60, 0x01]));
        assert_eq!(ins.len(), 1);
        assert_eq!(
            (ins[0].pc, ins[0].mnemonic(), ins[0].immediate.as_slice()),
            (0, "PUSH1", &[0x01u8][..])
        );
    }

    #[test]
    fn empty_code_has_no_instructions() {
        assert!(disassemble(&Bytecode::default()).is_empty());
    }

    #[test]
    fn truncated_push_becomes_invalid_covering_rest() {
        let ins = disassemble(&Bytecode::new(vec![0x00, 0x7f, 0xaa, 0xbb]));
        assert_eq!(ins.len(), 2);
        assert_eq!(ins[1].mnemonic(), "INVALID");
        assert_eq!(ins[1].pc, 1);
        assert_eq!(ins[1].immediate, vec![0xaa, 0xbb]);
    }

    #[test]
    fn unknown_bytes_are_tolerated() {
        let ins = disassemble(&Bytecode::new(vec![0xfe, 0x0c, 0x00]));
        let names: Vec<_> = ins.iter().map(|i| i.mnemonic()).collect();
        assert_eq!(names, vec!["INVALID", "INVALID", "STOP"]);
    }

    #[test]
    fn jumpdest_inside_push_data_is_not_a_destination() {
        let code = Bytecode::new(vec![0x60, 0x5b, 0x5b]);
        assert!(!code.is_jumpdest(1));
        assert!(code.is_jumpdest(2));
    }
}

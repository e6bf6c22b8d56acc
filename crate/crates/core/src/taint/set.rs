use std::fmt;

use serde::{Deserialize, Serialize};

use crate::evm::{op, OpcodeInfo};

/// Kind of externally derived data. Each kind becomes one data-flow edge type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaintLabel {
    CallValue,
    Calldata,
    CalldataSize,
    Caller,
    Origin,
    BlockEnv,
    Balance,
    SelfAddress,
}

impl TaintLabel {
    pub const ALL: [TaintLabel; 8] = [
        TaintLabel::CallValue,
        TaintLabel::Calldata,
        TaintLabel::CalldataSize,
        TaintLabel::Caller,
        TaintLabel::Origin,
        TaintLabel::BlockEnv,
        TaintLabel::Balance,
        TaintLabel::SelfAddress,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The label a source opcode introduces, if it is a source.
    pub fn of_source(opcode: u8) -> Option<TaintLabel> {
        Some(match opcode {
            op::CALLVALUE => TaintLabel::CallValue,
            op::CALLDATALOAD | op::CALLDATACOPY => TaintLabel::Calldata,
            op::CALLDATASIZE => TaintLabel::CalldataSize,
            op::CALLER => TaintLabel::Caller,
            op::ORIGIN => TaintLabel::Origin,
            op::TIMESTAMP | op::BLOCKHASH => TaintLabel::BlockEnv,
            op::BALANCE => TaintLabel::Balance,
            op::ADDRESS => TaintLabel::SelfAddress,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TaintLabel::CallValue => "CallValue",
            TaintLabel::Calldata => "Calldata",
            TaintLabel::CalldataSize => "CalldataSize",
            TaintLabel::Caller => "Caller",
            TaintLabel::Origin => "Origin",
            TaintLabel::BlockEnv => "BlockEnv",
            TaintLabel::Balance => "Balance",
            TaintLabel::SelfAddress => "SelfAddress",
        }
    }

    pub fn from_name(name: &str) -> Option<TaintLabel> {
        TaintLabel::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl fmt::Display for TaintLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Opcodes where tainted inputs are reported as data flow.
pub fn is_sink(opcode: u8) -> bool {
    matches!(
        opcode,
        op::EQ
            | op::LT
            | op::SLT
            | op::GT
            | op::SGT
            | op::MSTORE
            | op::MSTORE8
            | op::MLOAD
            | op::SSTORE
            | op::SLOAD
            | op::CALL
            | op::CALLCODE
            | op::DELEGATECALL
            | op::STATICCALL
            | op::JUMPI
    )
}

pub fn is_source(opcode: u8) -> bool {
    TaintLabel::of_source(opcode).is_some()
}

/// Where a label entered: transaction index and step within that transaction.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Provenance {
    pub tx: u32,
    pub step: u32,
}

/// Set of labels, each with the most recent source step that contributed it.
///
/// `from_storage` records that some contributing value was read back from
/// storage by SLOAD.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TaintSet {
    mask: u8,
    from_storage: bool,
    // Unused slots stay zeroed so derived equality is structural.
    prov: [Provenance; 8],
}

impl TaintSet {
    pub const EMPTY: TaintSet = TaintSet {
        mask: 0,
        from_storage: false,
        prov: [Provenance { tx: 0, step: 0 }; 8],
    };

    pub fn single(label: TaintLabel, at: Provenance) -> Self {
        let mut s = TaintSet::EMPTY;
        s.mask = 1 << label.index();
        s.prov[label.index()] = at;
        s
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn contains(&self, label: TaintLabel) -> bool {
        self.mask & (1 << label.index()) != 0
    }

    pub fn provenance(&self, label: TaintLabel) -> Option<Provenance> {
        self.contains(label).then(|| self.prov[label.index()])
    }

    pub fn from_storage(&self) -> bool {
        self.from_storage
    }

    pub fn marked_from_storage(mut self) -> Self {
        if !self.is_empty() {
            self.from_storage = true;
        }
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaintLabel, Provenance)> + '_ {
        TaintLabel::ALL
            .into_iter()
            .filter(|l| self.contains(*l))
            .map(|l| (l, self.prov[l.index()]))
    }

    pub fn union(&self, other: &TaintSet) -> TaintSet {
        if other.mask == 0 {
            return *self;
        }
        if self.mask == 0 {
            return *other;
        }
        let mut out = *self;
        out.mask |= other.mask;
        out.from_storage |= other.from_storage;
        for i in 0..8 {
            if other.mask & (1 << i) != 0
                && (self.mask & (1 << i) == 0 || other.prov[i] > self.prov[i])
            {
                out.prov[i] = other.prov[i];
            }
        }
        out
    }

    pub fn union_all<'a>(sets: impl IntoIterator<Item = &'a TaintSet>) -> TaintSet {
        sets.into_iter()
            .fold(TaintSet::EMPTY, |acc, s| acc.union(s))
    }
}

impl fmt::Debug for TaintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (l, p) in self.iter() {
            m.entry(&l, &(p.tx, p.step));
        }
        m.finish()
    }
}

/// Default propagation: the result carries every operand label.
pub fn propagate(opcode: &OpcodeInfo, operand_taints: &[TaintSet]) -> TaintSet {
    debug_assert_eq!(operand_taints.len(), opcode.delta);
    TaintSet::union_all(operand_taints)
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::abi::ParamType;
use crate::evm::word::selector_of;

pub const DEFAULT_KEYWORDS: [&str; 4] = ["invest", "enter", "init", "deposit"];

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn of_signature(sig: &str) -> Self {
        Selector(selector_of(sig))
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "0x{:02x}{:02x}{:02x}{:02x}",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let hex = s.trim_start_matches("0x");
        let v = u32::from_str_radix(hex, 16).map_err(serde::de::Error::custom)?;
        if hex.len() != 8 {
            return Err(serde::de::Error::custom("selector must be 4 bytes"));
        }
        Ok(Selector(v.to_be_bytes()))
    }
}

/// Storage slots touched by a function. `wildcard` stands for slots the
/// static scan could not resolve and conflicts with every concrete slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotSet {
    pub slots: BTreeSet<U256>,
    pub wildcard: bool,
}

impl SlotSet {
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty() && !self.wildcard
    }

    pub fn insert(&mut self, slot: U256) {
        self.slots.insert(slot);
    }

    pub fn intersects(&self, other: &SlotSet) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        self.wildcard || other.wildcard || self.slots.intersection(&other.slots).next().is_some()
    }
}

impl Serialize for SlotSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut items: Vec<String> = self.slots.iter().map(|v| format!("{v:#x}")).collect();
        if self.wildcard {
            items.push("*".into());
        }
        items.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SlotSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        let mut out = SlotSet::default();
        for it in items {
            if it == "*" {
                out.wildcard = true;
            } else if let Some(hex) = it.strip_prefix("0x") {
                out.insert(U256::from_str_radix(hex, 16).map_err(serde::de::Error::custom)?);
            } else {
                out.insert(U256::from_dec_str(&it).map_err(serde::de::Error::custom)?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub name: String,
    /// `None` only for the fallback function.
    pub selector: Option<Selector>,
    pub payable: bool,
    pub mutating: bool,
    pub params: Vec<ParamType>,
    pub reads: SlotSet,
    pub writes: SlotSet,
}

impl FunctionDescriptor {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        format!("{}({})", self.name, params.join(","))
    }

    /// View or pure: neither writes state nor accepts value.
    pub fn is_inert(&self) -> bool {
        !self.mutating && !self.payable
    }
}

fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub contract_name: String,
    pub functions: Vec<FunctionDescriptor>,
    pub fallback: Option<FunctionDescriptor>,
    pub keyword_list: Vec<String>,
    /// Storage written at deployment, before any generated transaction.
    #[serde(default)]
    pub initial_storage: BTreeMap<String, String>,
    /// Ether held by the contract at deployment, in wei.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_balance: Option<String>,
}

/// Index of a callable: `functions[i]`, or the fallback at `functions.len()`.
pub type FnId = usize;

impl Manifest {
    pub fn callables(&self) -> impl Iterator<Item = (FnId, &FunctionDescriptor)> {
        self.functions
            .iter()
            .chain(self.fallback.iter())
            .enumerate()
    }

    pub fn callable(&self, id: FnId) -> &FunctionDescriptor {
        if id < self.functions.len() {
            &self.functions[id]
        } else {
            self.fallback
                .as_ref()
                .expect("fallback id only issued when a fallback exists")
        }
    }

    pub fn len_callables(&self) -> usize {
        self.functions.len() + usize::from(self.fallback.is_some())
    }

    pub fn initial_storage_words(&self) -> Result<Vec<(U256, U256)>, ManifestError> {
        self.initial_storage
            .iter()
            .map(|(k, v)| Ok((parse_word(k)?, parse_word(v)?)))
            .collect()
    }

    pub fn initial_balance_wei(&self) -> Result<U256, ManifestError> {
        self.initial_balance
            .as_deref()
            .map_or(Ok(U256::zero()), parse_word)
    }
}

/// Decimal or `0x` hex word.
fn parse_word(s: &str) -> Result<U256, ManifestError> {
    let r = match s.strip_prefix("0x") {
        Some(h) => U256::from_str_radix(h, 16).ok(),
        None => U256::from_dec_str(s).ok(),
    };
    r.ok_or_else(|| ManifestError::Invalid(format!("bad word `{s}`")))
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("dispatcher not recognized and no interface supplied")]
    NoDispatcher,
    #[error("contract `{0}` is inert: no state-changing or payable function")]
    Inert(String),
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Interface file entry: the externally visible properties of a function.
/// `reads`/`writes`, when present, override the static scan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceFunction {
    pub name: String,
    #[serde(default)]
    pub selector: Option<Selector>,
    #[serde(default)]
    pub payable: bool,
    #[serde(default)]
    pub params: Vec<ParamType>,
    #[serde(default)]
    pub reads: Option<SlotSet>,
    #[serde(default)]
    pub writes: Option<SlotSet>,
}

impl InterfaceFunction {
    pub fn resolved_selector(&self) -> Selector {
        self.selector.unwrap_or_else(|| {
            let params: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
            Selector::of_signature(&format!("{}({})", self.name, params.join(",")))
        })
    }
}

/// Manifest file schema (JSON).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub contract_name: String,
    pub functions: Vec<InterfaceFunction>,
    #[serde(default)]
    pub fallback: Option<InterfaceFunction>,
    #[serde(default)]
    pub keywords: Option<Vec<String>>,
    #[serde(default)]
    pub initial_storage: BTreeMap<String, String>,
    #[serde(default)]
    pub initial_balance: Option<String>,
    /// Ground-truth class for corpus contracts.
    #[serde(default)]
    pub label: Option<String>,
}

impl Interface {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn keyword_list(&self) -> Vec<String> {
        match &self.keywords {
            Some(k) if !k.is_empty() => k.clone(),
            _ => default_keywords(),
        }
    }
}

/// `map[a]` holds every function reading a slot that `a` writes.
pub fn build_dependency_map(manifest: &Manifest) -> BTreeMap<FnId, BTreeSet<FnId>> {
    let mut map = BTreeMap::new();
    for (a, fa) in manifest.callables() {
        let deps: BTreeSet<FnId> = manifest
            .callables()
            .filter(|(_, fb)| fb.reads.intersects(&fa.writes))
            .map(|(b, _)| b)
            .collect();
        map.insert(a, deps);
    }
    map
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionGroups {
    pub f_kws: Vec<FnId>,
    pub f_payable: Vec<FnId>,
    pub f_w: Vec<FnId>,
    pub f_all: Vec<FnId>,
}

pub fn categorize(manifest: &Manifest) -> Result<FunctionGroups, ManifestError> {
    let keywords: Vec<String> = manifest
        .keyword_list
        .iter()
        .map(|k| k.to_lowercase())
        .collect();
    let mut g = FunctionGroups::default();
    for (id, f) in manifest.callables() {
        if f.is_inert() {
            continue;
        }
        g.f_all.push(id);
        let name = f.name.to_lowercase();
        if f.selector.is_some() && keywords.iter().any(|k| name.contains(k.as_str())) {
            g.f_kws.push(id);
        }
        if f.payable {
            g.f_payable.push(id);
        }
        if f.mutating {
            g.f_w.push(id);
        }
    }
    if g.f_all.is_empty() {
        return Err(ManifestError::Inert(manifest.contract_name.clone()));
    }
    Ok(g)
}

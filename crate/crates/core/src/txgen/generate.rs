use std::collections::{BTreeMap, BTreeSet};

use primitive_types::U256;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::abi::{encode_params, random_value};
use super::manifest::{FnId, FunctionDescriptor, FunctionGroups, Manifest, Selector};
use crate::evm::Address;

pub const DEFAULT_MAX_SEQUENCES: usize = 8;
pub const DEFAULT_POOL_SIZE: usize = 8;
/// 0.01 ether in wei.
pub const DEFAULT_BASE_VALUE: u64 = 10_000_000_000_000_000;

/// RNG stream used for function choices; transaction contents use the next one.
const CHOICE_STREAM: u64 = 0;
const TX_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub max_sequences: usize,
    pub base_value: U256,
    pub pool_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_sequences: DEFAULT_MAX_SEQUENCES,
            base_value: U256::from(DEFAULT_BASE_VALUE),
            pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub function: FnId,
    pub name: String,
    pub selector: Option<Selector>,
    #[serde(with = "hex_bytes")]
    pub calldata: Vec<u8>,
    pub value: U256,
    pub caller: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxSequence {
    pub txs: Vec<Transaction>,
    pub seed: u64,
}

/// Which branch of the selection logic produced a choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChoiceSource {
    Keyword,
    Payable,
    Writer,
    /// First pick when no prioritized group is populated.
    AllFirst,
    Dependency,
    /// Later pick with no dependents of the previous transaction.
    All,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceRecord {
    pub sequence: usize,
    pub position: usize,
    pub source: ChoiceSource,
    pub candidates: Vec<FnId>,
    pub picked: FnId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub sequences: Vec<TxSequence>,
    pub choices: Vec<ChoiceRecord>,
}

/// Uniform pick from the first non-empty set. Returns the index of the set
/// used alongside the pick.
pub fn random_choose<R: Rng + ?Sized>(rng: &mut R, sets: &[&[FnId]]) -> Option<(usize, FnId)> {
    let (i, set) = sets.iter().enumerate().find(|(_, s)| !s.is_empty())?;
    Some((i, set[rng.gen_range(0..set.len())]))
}

/// Strictly increasing value attached to successive payable calls.
#[derive(Clone, Debug)]
pub struct ValueSchedule {
    base: U256,
    k: u32,
}

impl ValueSchedule {
    pub fn new(base: U256) -> Self {
        ValueSchedule { base, k: 0 }
    }

    pub fn next_value(&mut self) -> U256 {
        let v = self
            .base
            .saturating_mul(U256::one() << self.k.min(255) as usize);
        self.k += 1;
        v
    }
}

/// Synthetic investor accounts, taken round-robin with occasional jumps.
#[derive(Clone, Debug)]
pub struct CallerPool {
    members: Vec<Address>,
    cursor: usize,
}

impl CallerPool {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "caller pool must not be empty");
        CallerPool {
            members: (1..=size as u64).map(Self::member).collect(),
            cursor: 0,
        }
    }

    pub fn member(i: u64) -> Address {
        Address::synthetic(0xca11_e400 + i)
    }

    pub fn members(&self) -> &[Address] {
        &self.members
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Address {
        if rng.gen_bool(0.25) {
            self.cursor = rng.gen_range(0..self.members.len());
        }
        let a = self.members[self.cursor];
        self.cursor = (self.cursor + 1) % self.members.len();
        a
    }
}

/// Calldata, attached value and sender for one call of `func`.
pub fn generate_transaction<R: Rng + ?Sized>(
    id: FnId,
    func: &FunctionDescriptor,
    rng: &mut R,
    schedule: &mut ValueSchedule,
    callers: &mut CallerPool,
) -> Transaction {
    let mut calldata = Vec::new();
    if let Some(sel) = func.selector {
        calldata.extend_from_slice(&sel.0);
        let values: Vec<_> = func.params.iter().map(|&t| random_value(t, rng)).collect();
        calldata.extend(encode_params(&values));
    }
    let value = if func.payable {
        schedule.next_value()
    } else {
        U256::zero()
    };
    let caller = callers.draw(rng);
    Transaction {
        function: id,
        name: func.name.clone(),
        selector: func.selector,
        calldata,
        value,
        caller,
    }
}

/// Produces `config.max_sequences` sequences of `|f_all|` transactions each.
pub fn generate_sequences(
    manifest: &Manifest,
    groups: &FunctionGroups,
    dep_map: &BTreeMap<FnId, BTreeSet<FnId>>,
    config: &GeneratorConfig,
    seed: u64,
) -> Generated {
    assert!(config.max_sequences > 0 && !groups.f_all.is_empty());
    let mut choose_rng = ChaCha8Rng::seed_from_u64(seed);
    choose_rng.set_stream(CHOICE_STREAM);
    let mut tx_rng = ChaCha8Rng::seed_from_u64(seed);
    tx_rng.set_stream(TX_STREAM);
    let all: BTreeSet<FnId> = groups.f_all.iter().copied().collect();

    let mut sequences = Vec::with_capacity(config.max_sequences);
    let mut choices = Vec::new();
    for g in 0..config.max_sequences {
        let mut schedule = ValueSchedule::new(config.base_value);
        let mut callers = CallerPool::new(config.pool_size);
        let mut txs: Vec<Transaction> = Vec::with_capacity(groups.f_all.len());

        let (source, candidates, picked) = match random_choose(
            &mut choose_rng,
            &[&groups.f_kws, &groups.f_payable, &groups.f_w],
        ) {
            Some((i, f)) => {
                let src = [
                    ChoiceSource::Keyword,
                    ChoiceSource::Payable,
                    ChoiceSource::Writer,
                ][i];
                let cands = [&groups.f_kws, &groups.f_payable, &groups.f_w][i].clone();
                (src, cands, f)
            }
            None => {
                let (_, f) =
                    random_choose(&mut choose_rng, &[&groups.f_all]).expect("f_all non-empty");
                (ChoiceSource::AllFirst, groups.f_all.clone(), f)
            }
        };
        choices.push(ChoiceRecord {
            sequence: g,
            position: 0,
            source,
            candidates,
            picked,
        });
        txs.push(generate_transaction(
            picked,
            manifest.callable(picked),
            &mut tx_rng,
            &mut schedule,
            &mut callers,
        ));

        while txs.len() < groups.f_all.len() {
            let last = txs.last().expect("sequence starts non-empty").function;
            // only selectable functions count as dependents
            let f_dep: Vec<FnId> = dep_map
                .get(&last)
                .map(|d| d.iter().copied().filter(|f| all.contains(f)).collect())
                .unwrap_or_default();
            let (source, candidates, picked) = if !f_dep.is_empty() {
                let (_, f) =
                    random_choose(&mut choose_rng, &[&f_dep, &groups.f_all]).expect("non-empty");
                (ChoiceSource::Dependency, f_dep, f)
            } else {
                let (_, f) = random_choose(&mut choose_rng, &[&groups.f_all]).expect("non-empty");
                (ChoiceSource::All, groups.f_all.clone(), f)
            };
            choices.push(ChoiceRecord {
                sequence: g,
                position: txs.len(),
                source,
                candidates,
                picked,
            });
            txs.push(generate_transaction(
                picked,
                manifest.callable(picked),
                &mut tx_rng,
                &mut schedule,
                &mut callers,
            ));
        }
        sequences.push(TxSequence { txs, seed });
    }
    Generated { sequences, choices }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        s.serialize_str(&format!("0x{hex}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        let h = s.trim_start_matches("0x");
        if h.len() % 2 != 0 {
            return Err(serde::de::Error::custom("odd hex length"));
        }
        (0..h.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&h[i..i + 2], 16).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txgen::abi::{decode_params, AbiValue, ParamType};
    use crate::txgen::{build_dependency_map, categorize, SlotSet};

    fn slots(v: &[u64]) -> SlotSet {
        SlotSet {
            slots: v.iter().map(|&x| U256::from(x)).collect(),
            wildcard: false,
        }
    }

    fn func(
        name: &str,
        payable: bool,
        params: Vec<ParamType>,
        reads: SlotSet,
        writes: SlotSet,
    ) -> FunctionDescriptor {
        FunctionDescriptor {
            selector: Some(Selector::of_signature(&format!("{name}()"))),
            name: name.into(),
            payable,
            mutating: !writes.is_empty(),
            params,
            reads,
            writes,
        }
    }

    fn enter_pay() -> Manifest {
        Manifest {
            contract_name: "ep".into(),
            functions: vec![
                func("pay", false, vec![], slots(&[0, 1]), slots(&[2])),
                func("enter", true, vec![], slots(&[]), slots(&[0, 1])),
                func(
                    "setNote",
                    false,
                    vec![ParamType::String],
                    slots(&[]),
                    slots(&[5]),
                ),
            ],
            fallback: None,
            keyword_list: vec!["enter".into()],
            initial_storage: Default::default(),
            initial_balance: None,
        }
    }

    #[test]
    fn keyword_function_always_opens() {
        let m = enter_pay();
        let groups = categorize(&m).unwrap();
        let dep = build_dependency_map(&m);
        let mut pay_after_enter = 0usize;
        let mut pairs = 0usize;
        for seed in 0..1000 {
            let out = generate_sequences(
                &m,
                &groups,
                &dep,
                &GeneratorConfig {
                    max_sequences: 1,
                    ..Default::default()
                },
                seed,
            );
            let s = &out.sequences[0];
            assert_eq!(s.txs[0].name, "enter");
            assert_eq!(s.txs.len(), 3);
            for w in s.txs.windows(2) {
                if w[0].name == "enter" {
                    pairs += 1;
                    pay_after_enter += usize::from(w[1].name == "pay");
                }
            }
        }
        // dependency-driven: pay always follows enter
        assert_eq!(pay_after_enter, pairs);
    }

    #[test]
    fn empty_priority_groups_fall_back_to_all() {
        let mut m = enter_pay();
        for f in &mut m.functions {
            f.payable = false;
            f.name = f.name.replace("enter", "join");
        }
        let mut groups = categorize(&m).unwrap();
        assert!(groups.f_kws.is_empty() && groups.f_payable.is_empty());
        groups.f_w.clear();
        let dep = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for seed in 0..50 {
            let out = generate_sequences(
                &m,
                &groups,
                &dep,
                &GeneratorConfig {
                    max_sequences: 1,
                    ..Default::default()
                },
                seed,
            );
            assert_eq!(out.choices[0].source, ChoiceSource::AllFirst);
            seen.insert(out.choices[0].picked);
        }
        assert_eq!(seen, groups.f_all.iter().copied().collect());
    }

    #[test]
    fn same_seed_same_sequences() {
        let m = enter_pay();
        let groups = categorize(&m).unwrap();
        let dep = build_dependency_map(&m);
        let cfg = GeneratorConfig::default();
        let a = generate_sequences(&m, &groups, &dep, &cfg, 42);
        let b = generate_sequences(&m, &groups, &dep, &cfg, 42);
        assert_eq!(a, b);
        assert_eq!(a.sequences.len(), DEFAULT_MAX_SEQUENCES);
    }

    #[test]
    fn payable_values_strictly_increase() {
        let f = func(
            "deposit",
            true,
            vec![ParamType::Bool],
            slots(&[]),
            slots(&[0]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut schedule = ValueSchedule::new(U256::from(DEFAULT_BASE_VALUE));
        let mut pool = CallerPool::new(8);
        let vals: Vec<U256> = (0..3)
            .map(|_| generate_transaction(0, &f, &mut rng, &mut schedule, &mut pool).value)
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        assert_eq!(vals[0], U256::from(DEFAULT_BASE_VALUE));
        let g = func("poke", false, vec![], slots(&[]), slots(&[0]));
        assert!(
            generate_transaction(1, &g, &mut rng, &mut schedule, &mut pool)
                .value
                .is_zero()
        );
    }

    #[test]
    fn string_calldata_decodes() {
        let f = func(
            "setNote",
            false,
            vec![ParamType::String, ParamType::Bool],
            slots(&[]),
            slots(&[0]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut schedule = ValueSchedule::new(U256::one());
        let mut pool = CallerPool::new(8);
        for _ in 0..20 {
            let tx = generate_transaction(0, &f, &mut rng, &mut schedule, &mut pool);
            assert_eq!(&tx.calldata[..4], &f.selector.unwrap().0);
            let vals = decode_params(&f.params, &tx.calldata[4..]).unwrap();
            let AbiValue::Dynamic(s) = &vals[0] else {
                panic!()
            };
            assert!(!s.is_empty());
            assert!(matches!(vals[1], AbiValue::Word(w) if w <= U256::one()));
            assert_eq!(encode_params(&vals), tx.calldata[4..]);
        }
    }

    #[test]
    fn callers_cover_the_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pool = CallerPool::new(8);
        let seen: BTreeSet<Address> = (0..200).map(|_| pool.draw(&mut rng)).collect();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn transaction_serde_round_trip() {
        let m = enter_pay();
        let groups = categorize(&m).unwrap();
        let out = generate_sequences(
            &m,
            &groups,
            &build_dependency_map(&m),
            &GeneratorConfig::default(),
            9,
        );
        let json = serde_json::to_string(&out.sequences).unwrap();
        let back: Vec<TxSequence> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.sequences);
    }
}

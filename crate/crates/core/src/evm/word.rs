//! 256-bit word helpers and the 160-bit account address newtype.

use std::fmt;

use primitive_types::{U256, U512};
use serde::{Deserialize, Serialize};
use tiny_keccak::{Hasher, Keccak};

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    let mut hasher = Keccak::v256();
    hasher.update(data);
    let mut out = [0u8; 32];
    hasher.finalize(&mut out);
    out
}

/// Four-byte function selector of a canonical signature such as `enter()`.
pub fn selector_of(signature: &str) -> [u8; 4] {
    let h = keccak256(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// Low 160 bits of a word.
    pub fn from_word(w: U256) -> Self {
        let buf = w.to_big_endian();
        let mut a = [0u8; 20];
        a.copy_from_slice(&buf[12..]);
        Address(a)
    }

    pub fn to_word(self) -> U256 {
        U256::from_big_endian(&self.0)
    }

    /// Deterministic synthetic address, used for investor pools and fixtures.
    pub fn synthetic(tag: u64) -> Self {
        let h = keccak256(&tag.to_be_bytes());
        let mut a = [0u8; 20];
        a.copy_from_slice(&h[12..]);
        Address(a)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn word_to_bytes(w: U256) -> [u8; 32] {
    w.to_big_endian()
}

pub fn bool_word(b: bool) -> U256 {
    if b {
        U256::one()
    } else {
        U256::zero()
    }
}

pub fn is_negative(x: U256) -> bool {
    x.bit(255)
}

pub fn twos_neg(x: U256) -> U256 {
    (!x).overflowing_add(U256::one()).0
}

fn abs(x: U256) -> U256 {
    if is_negative(x) {
        twos_neg(x)
    } else {
        x
    }
}

pub fn slt(a: U256, b: U256) -> bool {
    match (is_negative(a), is_negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

pub fn sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::zero();
    }
    let q = abs(a) / abs(b);
    if is_negative(a) != is_negative(b) {
        twos_neg(q)
    } else {
        q
    }
}

pub fn smod(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::zero();
    }
    let r = abs(a) % abs(b);
    if is_negative(a) {
        twos_neg(r)
    } else {
        r
    }
}

pub fn addmod(a: U256, b: U256, n: U256) -> U256 {
    if n.is_zero() {
        return U256::zero();
    }
    let s = (U512::from(a) + U512::from(b)) % U512::from(n);
    U256::try_from(s).expect("remainder below a 256-bit modulus")
}

pub fn mulmod(a: U256, b: U256, n: U256) -> U256 {
    if n.is_zero() {
        return U256::zero();
    }
    let p = a.full_mul(b) % U512::from(n);
    U256::try_from(p).expect("remainder below a 256-bit modulus")
}

pub fn signextend(b: U256, x: U256) -> U256 {
    if b >= U256::from(31) {
        return x;
    }
    let bit = b.low_u32() as usize * 8 + 7;
    let mask = (U256::one() << (bit + 1)) - U256::one();
    if x.bit(bit) {
        x | !mask
    } else {
        x & mask
    }
}

pub fn byte_at(i: U256, x: U256) -> U256 {
    if i >= U256::from(32) {
        return U256::zero();
    }
    let bytes = word_to_bytes(x);
    U256::from(bytes[i.low_u32() as usize])
}

pub fn shl(shift: U256, x: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::zero()
    } else {
        x << shift.low_u32() as usize
    }
}

pub fn shr(shift: U256, x: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::zero()
    } else {
        x >> shift.low_u32() as usize
    }
}

pub fn sar(shift: U256, x: U256) -> U256 {
    let neg = is_negative(x);
    if shift >= U256::from(256) {
        return if neg { U256::MAX } else { U256::zero() };
    }
    let s = shift.low_u32() as usize;
    if s == 0 {
        return x;
    }
    let shifted = x >> s;
    if neg {
        shifted | !(U256::MAX >> s)
    } else {
        shifted
    }
}

/// Interprets a word as a byte offset/length if it fits in `usize`.
pub fn as_usize(w: U256) -> Option<usize> {
    if w > U256::from(u64::MAX) {
        None
    } else {
        usize::try_from(w.low_u64()).ok()
    }
}

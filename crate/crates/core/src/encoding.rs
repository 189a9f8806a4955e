//! Classical bit plumbing shared by every party.
//!
//! A secret `X` with bit-length `N` is read as `X = sum x_j 2^(j-1)`, so `x_1`
//! is the least significant bit. The bits are cut into `ceil(N/2)` groups of
//! two, group `i` holding `(x_(2i-1), x_(2i))` with `x_(2i-1)` as the high bit.
//! An odd `N` pads the low bit of the last group with 0.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use crate::error::{invalid, Result};
use crate::quantum::BellCode;

/// A two-bit classical word, stored as an integer in `0..4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitPair(u8);

impl BitPair {
    pub const ZERO: BitPair = BitPair(0b00);
    pub const ALL: [BitPair; 4] = [BitPair(0b00), BitPair(0b01), BitPair(0b10), BitPair(0b11)];

    pub fn new(value: u8) -> Result<Self> {
        if value > 3 {
            return Err(invalid(format!("bit pair value {value} is not in 0..4")));
        }
        Ok(BitPair(value))
    }

    pub const fn from_bits(hi: bool, lo: bool) -> Self {
        BitPair(((hi as u8) << 1) | lo as u8)
    }

    pub const fn value(self) -> u8 {
        self.0
    }

    pub const fn hi(self) -> bool {
        self.0 & 0b10 != 0
    }

    pub const fn lo(self) -> bool {
        self.0 & 0b01 != 0
    }

    pub const fn count_ones(self) -> u32 {
        self.0.count_ones()
    }

    /// Parses the two-character form `"01"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.as_bytes() {
            [h @ (b'0' | b'1'), l @ (b'0' | b'1')] => {
                Ok(BitPair::from_bits(*h == b'1', *l == b'1'))
            }
            _ => Err(invalid(format!("`{s}` is not a two-bit word"))),
        }
    }
}

impl BitXor for BitPair {
    type Output = BitPair;

    fn bitxor(self, rhs: BitPair) -> BitPair {
        BitPair(self.0 ^ rhs.0)
    }
}

impl BitXorAssign for BitPair {
    fn bitxor_assign(&mut self, rhs: BitPair) {
        self.0 ^= rhs.0;
    }
}

impl fmt::Display for BitPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.hi() as u8, self.lo() as u8)
    }
}

pub fn xor(a: BitPair, b: BitPair) -> BitPair {
    a ^ b
}

/// Element-wise XOR of two equally long sequences.
pub fn xor_seq(a: &[BitPair], b: &[BitPair]) -> Result<Vec<BitPair>> {
    if a.len() != b.len() {
        return Err(invalid(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x ^ y).collect())
}

/// Maps a Bell measurement outcome to its agreed two-bit code.
pub fn bell_code_bits(code: BellCode) -> BitPair {
    match code {
        BellCode::PhiPlus => BitPair(0b00),
        BellCode::PsiPlus => BitPair(0b01),
        BellCode::PsiMinus => BitPair(0b10),
        BellCode::PhiMinus => BitPair(0b11),
    }
}

/// Total number of 1-bits across all groups.
pub fn bit_sum(groups: &[BitPair]) -> u32 {
    groups.iter().map(|g| g.count_ones()).sum()
}

pub const MAX_BITS: u32 = 64;

/// A party's secret: a value together with its declared bit-length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretInput {
    value: u64,
    n_bits: u32,
}

impl SecretInput {
    pub fn new(value: u64, n_bits: u32) -> Result<Self> {
        if n_bits == 0 {
            return Err(invalid("bit-length must be at least 1"));
        }
        if n_bits > MAX_BITS {
            return Err(invalid(format!("bit-length {n_bits} exceeds {MAX_BITS}")));
        }
        if n_bits < 64 && value >> n_bits != 0 {
            return Err(invalid(format!(
                "value {value} does not fit in {n_bits} bits"
            )));
        }
        Ok(SecretInput { value, n_bits })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn n_bits(self) -> u32 {
        self.n_bits
    }

    pub fn group_count(self) -> usize {
        group_count(self.n_bits)
    }
}

pub fn group_count(n_bits: u32) -> usize {
    n_bits.div_ceil(2) as usize
}

/// The `ceil(N/2)` two-bit groups of a secret.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupSequence {
    groups: Vec<BitPair>,
    n_bits: u32,
}

impl GroupSequence {
    pub fn new(groups: Vec<BitPair>, n_bits: u32) -> Result<Self> {
        if n_bits == 0 || n_bits > MAX_BITS {
            return Err(invalid(format!("bit-length {n_bits} is out of range")));
        }
        if groups.len() != group_count(n_bits) {
            return Err(invalid(format!(
                "{} groups given for a {n_bits}-bit value, expected {}",
                groups.len(),
                group_count(n_bits)
            )));
        }
        if n_bits % 2 == 1 && groups.last().is_some_and(|g| g.lo()) {
            return Err(invalid("padding bit of the last group must be 0"));
        }
        Ok(GroupSequence { groups, n_bits })
    }

    pub fn groups(&self) -> &[BitPair] {
        &self.groups
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn to_groups(input: SecretInput) -> GroupSequence {
    let bit = |j: u32| j < input.n_bits && (input.value >> j) & 1 == 1;
    let groups = (0..input.group_count() as u32)
        .map(|i| BitPair::from_bits(bit(2 * i), bit(2 * i + 1)))
        .collect();
    GroupSequence {
        groups,
        n_bits: input.n_bits,
    }
}

pub fn from_groups(groups: &GroupSequence) -> SecretInput {
    let value = groups.groups.iter().enumerate().fold(0u64, |acc, (i, g)| {
        acc | (g.hi() as u64) << (2 * i) | (g.lo() as u64) << (2 * i + 1)
    });
    SecretInput {
        value,
        n_bits: groups.n_bits,
    }
}

pub(crate) fn fmt_seq(seq: &[BitPair]) -> String {
    seq.iter()
        .map(|g| g.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

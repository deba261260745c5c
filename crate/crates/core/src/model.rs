//! Chain parameters, the Markov state `Y(n)` and the one-step transition.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest supported context depth. The table has `2^(v-1)` columns.
pub const MAX_DEPTH: u32 = 20;

/// Parameters of a chain: context depth `v` and the table `p[k][j]` of
/// probabilities of writing a `1`.
///
/// Rows `0..=k_max` are stored explicitly; every `k > k_max` reuses row
/// `k_max`. Columns are indexed by the binary value of the first `v - 1`
/// letters of the context word (first letter most significant), so the
/// column of word `j` (1-based, see [`word_index`]) is `j - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    v: u32,
    k_max: usize,
    table: Vec<f64>,
    delta1: f64,
    delta2: f64,
}

impl ModelSpec {
    /// Builds a model, deriving `delta1`/`delta2` as the table max/min.
    ///
    /// A constant table gives `delta1 == delta2`; any pair strictly
    /// bracketing an interior value satisfies the strict form of the bound,
    /// and the tail constants only get sharper with the derived pair.
    pub fn new(v: u32, table: Vec<Vec<f64>>) -> Result<Self> {
        let (k_max, flat) = Self::flatten(v, table)?;
        let delta1 = flat.iter().copied().fold(f64::MIN, f64::max);
        let delta2 = flat.iter().copied().fold(f64::MAX, f64::min);
        Ok(Self { v, k_max, table: flat, delta1, delta2 })
    }

    /// Builds a model with caller-supplied bounds `1 > delta1 > delta2 > 0`
    /// that every entry must respect.
    pub fn with_bounds(v: u32, table: Vec<Vec<f64>>, delta1: f64, delta2: f64) -> Result<Self> {
        if !(delta1 < 1.0 && delta1 > delta2 && delta2 > 0.0) {
            return Err(Error::InvalidModel {
                field: "delta1/delta2".to_string(),
                reason: format!("need 1 > delta1 > delta2 > 0, got delta1 = {delta1}, delta2 = {delta2}"),
            });
        }
        let (k_max, flat) = Self::flatten(v, table)?;
        let cols = 1usize << (v - 1);
        for (i, &p) in flat.iter().enumerate() {
            if p > delta1 || p < delta2 {
                return Err(Error::InvalidModel {
                    field: format!("table[{}][{}]", i / cols, i % cols),
                    reason: format!("{p} outside [delta2, delta1] = [{delta2}, {delta1}]"),
                });
            }
        }
        Ok(Self { v, k_max, table: flat, delta1, delta2 })
    }

    /// Every entry equal to `p`: the characters are i.i.d. Bernoulli(`p`).
    pub fn constant(v: u32, p: f64) -> Result<Self> {
        if !(1..=MAX_DEPTH).contains(&v) {
            return Err(Error::InvalidModel { field: "v".to_string(), reason: format!("{v} not in 1..={MAX_DEPTH}") });
        }
        Self::new(v, alloc::vec![alloc::vec![p; 1usize << (v - 1)]])
    }

    fn flatten(v: u32, table: Vec<Vec<f64>>) -> Result<(usize, Vec<f64>)> {
        if !(1..=MAX_DEPTH).contains(&v) {
            return Err(Error::InvalidModel { field: "v".to_string(), reason: format!("{v} not in 1..={MAX_DEPTH}") });
        }
        if table.is_empty() {
            return Err(Error::InvalidModel { field: "table".to_string(), reason: "no rows".to_string() });
        }
        let cols = 1usize << (v - 1);
        let mut flat = Vec::with_capacity(table.len() * cols);
        for (k, row) in table.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidModel {
                    field: format!("table[{k}]"),
                    reason: format!("expected 2^(v-1) = {cols} columns, got {}", row.len()),
                });
            }
            for (j, &p) in row.iter().enumerate() {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::InvalidModel {
                        field: format!("table[{k}][{j}]"),
                        reason: format!("probability {p} not in the open interval (0, 1)"),
                    });
                }
                flat.push(p);
            }
        }
        Ok((table.len() - 1, flat))
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of admissible context words, `2^(v-1)`.
    pub fn words(&self) -> usize {
        1usize << (self.v - 1)
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    /// `p[min(k, k_max)][column]`.
    #[inline]
    pub fn prob(&self, k: u64, column: usize) -> f64 {
        let row = if k > self.k_max as u64 { self.k_max } else { k as usize };
        self.table[row * self.words() + column]
    }

    /// The explicit rows of the table.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.table.chunks(self.words()).map(|r| r.to_vec()).collect()
    }

    /// True when every entry of the table is the same number.
    pub fn is_constant(&self) -> bool {
        self.delta1 == self.delta2
    }
}

/// The Markov state `Y(n) = (y1, y2)`: zeros since the nearest `1`, and the
/// `v`-letter word ending at that `1`.
///
/// `y2` is stored as a `v`-bit integer whose least significant bit is the
/// last letter (always `1`) and whose most significant bit is the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryState {
    pub y1: u64,
    y2: u32,
    v: u32,
}

impl MemoryState {
    /// The regeneration state `y0 = (0, (0, …, 0, 1))`.
    pub fn y0(v: u32) -> Self {
        Self { y1: 0, y2: 1, v }
    }

    /// Builds a state from explicit letters of `y2`.
    pub fn new(y1: u64, y2: &[u8]) -> Result<Self> {
        word_index(y2)?;
        let v = y2.len() as u32;
        let bits = y2.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Ok(Self { y1, y2: bits, v })
    }

    pub fn from_bits(v: u32, y1: u64, y2: u32) -> Result<Self> {
        if !(1..=MAX_DEPTH).contains(&v) || y2 >> v != 0 || y2 & 1 != 1 {
            return Err(Error::InvalidState { reason: format!("word bits {y2:#b} invalid for v = {v}") });
        }
        Ok(Self { y1, y2, v })
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    /// `y2` as a `v`-bit integer, last letter in bit 0.
    pub fn word_bits(&self) -> u32 {
        self.y2
    }

    /// `y2` as letters, first letter first.
    pub fn y2(&self) -> Vec<u8> {
        (0..self.v).rev().map(|i| ((self.y2 >> i) & 1) as u8).collect()
    }

    /// Table column of `y2` (zero-based).
    #[inline]
    pub fn column(&self) -> usize {
        (self.y2 >> 1) as usize
    }

    pub fn is_y0(&self) -> bool {
        self.y1 == 0 && self.y2 == 1
    }

    /// Deterministic successor once the next character is known.
    #[inline]
    pub fn after(&self, ch: u8) -> Self {
        if ch == 1 {
            Self { y1: 0, y2: word_after_one(self.v, self.y2, self.y1), v: self.v }
        } else {
            Self { y1: self.y1 + 1, ..*self }
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.v != spec.v {
            return Err(Error::InvalidState {
                reason: format!("word length {} does not match model depth v = {}", self.v, spec.v),
            });
        }
        Ok(())
    }

    /// Checks that the state fits `spec`.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.check(spec)
    }
}

/// 1-based number `j` of a context word: one plus the binary value of its
/// first `v - 1` letters, first letter most significant.
pub fn word_index(word: &[u8]) -> Result<usize> {
    let v = word.len();
    if v == 0 || v > MAX_DEPTH as usize {
        return Err(Error::InvalidWord { reason: format!("length {v} not in 1..={MAX_DEPTH}") });
    }
    if word[v - 1] != 1 {
        return Err(Error::InvalidWord { reason: "last letter must be 1".to_string() });
    }
    let mut j = 0usize;
    for (i, &b) in word[..v - 1].iter().enumerate() {
        if b > 1 {
            return Err(Error::InvalidWord { reason: format!("letter {i} is {b}, alphabet is {{0, 1}}") });
        }
        j = (j << 1) | b as usize;
    }
    Ok(j + 1)
}

/// Probability of writing `1` from `state`.
#[inline]
pub fn char_one_prob(spec: &ModelSpec, state: &MemoryState) -> f64 {
    spec.prob(state.y1, state.column())
}

/// Word reached by writing `1` after `y1` zeros: the last `v - 1 - y1`
/// letters of `word`, then `y1` zeros, then `1`. Equals `0…01` once
/// `y1 >= v - 1`.
#[inline]
pub(crate) fn word_after_one(v: u32, word: u32, y1: u64) -> u32 {
    if y1 + 1 >= v as u64 {
        1
    } else {
        let mask = (1u32 << v) - 1;
        ((word << (y1 as u32 + 1)) | 1) & mask
    }
}

/// One transition of `Y`: writes `1` iff `u < p`, where `p` is
/// [`char_one_prob`].
#[inline]
pub fn step(spec: &ModelSpec, state: &MemoryState, u: f64) -> (u8, MemoryState) {
    debug_assert!(state.check(spec).is_ok());
    if u < char_one_prob(spec, state) {
        let y2 = word_after_one(state.v, state.y2, state.y1);
        (1, MemoryState { y1: 0, y2, v: state.v })
    } else {
        (0, MemoryState { y1: state.y1 + 1, ..*state })
    }
}

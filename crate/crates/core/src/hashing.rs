//! Affine hash functions over GF(2): `x -> A x + b`.
//!
//! Bit strings of up to 64 bits are held as integers. Input bit `j` is bit
//! `j` of the integer, and row `i` of `A` is a mask whose parity against the
//! input gives output bit `i`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tape::RandomTape;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("hash dimension out of range: {0} (allowed 1..=64)")]
    DimensionOutOfRange(u32),
    #[error("input has {got} bits, hash expects {expected}")]
    LengthMismatch { expected: u32, got: u32 },
    #[error("expected {expected} rows, got {got}")]
    RowCount { expected: usize, got: usize },
    #[error("row or offset wider than the declared dimension")]
    Overwide,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitsError {
    #[error("bit string longer than 64 bits")]
    TooLong,
    #[error("invalid character {0:?} in bit string")]
    BadChar(char),
    #[error("value {value} does not fit in {len} bits")]
    Overflow { value: u64, len: u32 },
}

/// A bit string of length at most 64.
///
/// The textual form is the binary numeral of the value, most significant bit
/// first, padded to `len` digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    value: u64,
    len: u32,
}

impl Bits {
    pub fn new(value: u64, len: u32) -> Result<Self, BitsError> {
        if len > 64 {
            return Err(BitsError::TooLong);
        }
        if len < 64 && value >> len != 0 {
            return Err(BitsError::Overflow { value, len });
        }
        Ok(Bits { value, len })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn len(self) -> u32 {
        self.len
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// `self || low`: `self` occupies the high bits.
    pub fn concat(self, low: Bits) -> Result<Bits, BitsError> {
        let len = self.len + low.len;
        if len > 64 {
            return Err(BitsError::TooLong);
        }
        let hi = if low.len == 64 { 0 } else { self.value << low.len };
        Bits::new(hi | low.value, len)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return Ok(());
        }
        write!(f, "{:0width$b}", self.value, width = self.len as usize)
    }
}

impl FromStr for Bits {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > 64 {
            return Err(BitsError::TooLong);
        }
        let mut v = 0u64;
        for c in s.chars() {
            v = (v << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(BitsError::BadChar(other)),
                };
        }
        Ok(Bits {
            value: v,
            len: s.len() as u32,
        })
    }
}

#[inline]
fn low_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// `h(x) = A x + b` over GF(2).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2AffineHash {
    in_bits: u32,
    out_bits: u32,
    rows: Vec<u64>,
    offset: u64,
}

fn check_dim(d: u32) -> Result<(), HashError> {
    if (1..=64).contains(&d) {
        Ok(())
    } else {
        Err(HashError::DimensionOutOfRange(d))
    }
}

impl Gf2AffineHash {
    pub fn new(in_bits: u32, out_bits: u32, rows: Vec<u64>, offset: u64) -> Result<Self, HashError> {
        check_dim(in_bits)?;
        check_dim(out_bits)?;
        if rows.len() != out_bits as usize {
            return Err(HashError::RowCount {
                expected: out_bits as usize,
                got: rows.len(),
            });
        }
        if rows.iter().any(|r| r & !low_mask(in_bits) != 0) || offset & !low_mask(out_bits) != 0 {
            return Err(HashError::Overwide);
        }
        Ok(Gf2AffineHash {
            in_bits,
            out_bits,
            rows,
            offset,
        })
    }

    pub fn in_bits(&self) -> u32 {
        self.in_bits
    }

    pub fn out_bits(&self) -> u32 {
        self.out_bits
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Evaluates on a raw integer; bits above `in_bits` are ignored.
    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let mut out = 0u64;
        for (i, &r) in self.rows.iter().enumerate() {
            out |= u64::from((r & x).count_ones() & 1) << i;
        }
        out ^ self.offset
    }

    pub fn apply(&self, x: Bits) -> Result<Bits, HashError> {
        if x.len() != self.in_bits {
            return Err(HashError::LengthMismatch {
                expected: self.in_bits,
                got: x.len(),
            });
        }
        Ok(Bits {
            value: self.eval(x.value()),
            len: self.out_bits,
        })
    }
}

/// Uniform member of the affine family `{n -> m}`.
///
/// Draws the rows of `A` in order (`in_bits` bits each), then `b`.
pub fn sample_hash(in_bits: u32, out_bits: u32, tape: &mut RandomTape) -> Result<Gf2AffineHash, HashError> {
    check_dim(in_bits)?;
    check_dim(out_bits)?;
    let rows = (0..out_bits).map(|_| tape.draw_uint(in_bits)).collect();
    let offset = tape.draw_uint(out_bits);
    Ok(Gf2AffineHash {
        in_bits,
        out_bits,
        rows,
        offset,
    })
}

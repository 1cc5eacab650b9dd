//! Deterministic, splittable random tapes.
//!
//! A tape is addressed by a 128-bit root seed and a path of stream indices.
//! Each address owns a ChaCha12 key; the bits of the tape are the keystream
//! under that key, read sequentially. Child keys are single ChaCha blocks on a
//! separate stream id, so sibling and parent streams never overlap.
//!
//! Bits are consumed least-significant first: the first bit drawn by
//! [`RandomTape::draw_uint`] is bit 0 of the result.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Largest single `draw_bits` request.
pub const MAX_DRAW_BITS: usize = 1 << 20;

const DOMAIN: &[u8; 16] = b"stability-tape/1";
const DRAW_STREAM: u64 = 0;
const DERIVE_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TapeError {
    #[error("invalid seed {0:?}: expected up to 32 hex digits")]
    InvalidSeed(String),
    #[error("draw of {0} bits exceeds the 2^20 limit")]
    DrawTooLarge(usize),
    #[error("precision {0} outside 1..=64")]
    BadPrecision(u32),
}

/// 128-bit root seed, written as hex on the command line and in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Seed(pub u128);

impl FromStr for Seed {
    type Err = TapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .unwrap_or(t);
        if t.is_empty() || t.len() > 32 || !t.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(TapeError::InvalidSeed(s.to_string()));
        }
        u128::from_str_radix(t, 16)
            .map(Seed)
            .map_err(|_| TapeError::InvalidSeed(s.to_string()))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// A fixed-point value `k / 2^precision` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitFixed {
    pub numer: u64,
    pub precision: u32,
}

impl UnitFixed {
    pub fn to_f64(self) -> f64 {
        self.numer as f64 / 2f64.powi(self.precision as i32)
    }
}

/// A bit string of arbitrary length, bit `i` being the `i`-th bit drawn.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Interprets the string as an integer with bit `i` weighted `2^i`.
    pub fn to_u64(&self) -> Option<u64> {
        match self.len {
            0 => Some(0),
            1..=64 => Some(self.words[0]),
            _ => None,
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A read cursor over the keystream at one address of the tape tree.
///
/// Cloning copies the cursor, so a clone replays exactly the bits the
/// original would draw next.
#[derive(Clone)]
pub struct RandomTape {
    seed: Seed,
    path: Vec<u64>,
    key: [u8; 32],
    rng: ChaCha12Rng,
    buf: u64,
    avail: u32,
    consumed: u64,
}

impl fmt::Debug for RandomTape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomTape")
            .field("seed", &self.seed)
            .field("path", &self.path)
            .field("offset", &self.consumed)
            .finish()
    }
}

impl RandomTape {
    pub fn new(seed: Seed) -> Self {
        let mut key = [0u8; 32];
        key[..16].copy_from_slice(&seed.0.to_le_bytes());
        key[16..].copy_from_slice(DOMAIN);
        Self::at(seed, Vec::new(), key)
    }

    pub fn from_u128(seed: u128) -> Self {
        Self::new(Seed(seed))
    }

    fn at(seed: Seed, path: Vec<u64>, key: [u8; 32]) -> Self {
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(DRAW_STREAM);
        RandomTape {
            seed,
            path,
            key,
            rng,
            buf: 0,
            avail: 0,
            consumed: 0,
        }
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Number of bits consumed from this address so far.
    pub fn offset(&self) -> u64 {
        self.consumed
    }

    /// Child tape at `path ++ [index]`, starting at offset 0. The result does
    /// not depend on how much of `self` has been consumed.
    pub fn derive(&self, index: u64) -> RandomTape {
        let mut kdf = ChaCha12Rng::from_seed(self.key);
        kdf.set_stream(DERIVE_STREAM);
        kdf.set_word_pos(u128::from(index) * 16);
        let mut key = [0u8; 32];
        kdf.fill_bytes(&mut key);
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self::at(self.seed, path, key)
    }

    pub fn derive_path(&self, indices: &[u64]) -> RandomTape {
        let mut t = self.fresh();
        for &i in indices {
            t = t.derive(i);
        }
        t
    }

    /// Same address, rewound to offset 0.
    pub fn fresh(&self) -> RandomTape {
        Self::at(self.seed, self.path.clone(), self.key)
    }

    /// Draws `n` bits (1..=64) as an integer, first bit least significant.
    #[inline]
    pub fn draw_uint(&mut self, n: u32) -> u64 {
        debug_assert!(n <= 64);
        if n == 0 {
            return 0;
        }
        self.consumed += u64::from(n);
        if n <= self.avail {
            let v = self.buf & mask(n);
            self.buf = if n == 64 { 0 } else { self.buf >> n };
            self.avail -= n;
            return v;
        }
        let have = self.avail;
        let need = n - have;
        let w = self.rng.next_u64();
        let v = self.buf | ((w & mask(need)) << have);
        self.buf = if need == 64 { 0 } else { w >> need };
        self.avail = 64 - need;
        v
    }

    pub fn draw_bool(&mut self) -> bool {
        self.draw_uint(1) == 1
    }

    pub fn draw_bits(&mut self, count: usize) -> Result<BitString, TapeError> {
        if count > MAX_DRAW_BITS {
            return Err(TapeError::DrawTooLarge(count));
        }
        let mut words = Vec::with_capacity(count.div_ceil(64));
        let mut left = count;
        while left > 0 {
            let n = left.min(64) as u32;
            words.push(self.draw_uint(n));
            left -= n as usize;
        }
        Ok(BitString { words, len: count })
    }

    /// Fills `out` with `bits` consecutive bits, 64 per word.
    pub fn draw_words(&mut self, bits: usize, out: &mut Vec<u64>) {
        out.clear();
        let mut left = bits;
        while left > 0 {
            let n = left.min(64) as u32;
            out.push(self.draw_uint(n));
            left -= n as usize;
        }
    }

    pub fn draw_unit(&mut self, precision: u32) -> Result<UnitFixed, TapeError> {
        if !(1..=64).contains(&precision) {
            return Err(TapeError::BadPrecision(precision));
        }
        Ok(UnitFixed {
            numer: self.draw_uint(precision),
            precision,
        })
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn draw_f64(&mut self) -> f64 {
        self.draw_uint(53) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. The bits consumed depend only on `n` and
    /// the tape, never on the caller's data.
    #[inline]
    pub fn draw_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "draw_below(0)");
        if n == 1 {
            return 0;
        }
        let bits = 64 - (n - 1).leading_zeros();
        loop {
            let v = self.draw_uint(bits);
            if v < n {
                return v;
            }
        }
    }

    /// Fisher-Yates shuffle driven by the tape.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.draw_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

#[inline]
fn mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Reads `len` bits (at most 64) starting at bit `off` of a word array.
#[inline]
pub fn extract_bits(words: &[u64], off: usize, len: u32) -> u64 {
    if len == 0 {
        return 0;
    }
    let w = off / 64;
    let s = (off % 64) as u32;
    let lo = words[w] >> s;
    let v = if s + len > 64 {
        lo | (words[w + 1] << (64 - s))
    } else {
        lo
    };
    v & mask(len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seed_parsing() {
        assert_eq!("00".parse::<Seed>().unwrap(), Seed(0));
        assert_eq!("0xff".parse::<Seed>().unwrap(), Seed(255));
        assert!("".parse::<Seed>().is_err());
        assert!("xyz".parse::<Seed>().is_err());
        assert!("1".repeat(33).parse::<Seed>().is_err());
        let s = Seed(0xdead_beef);
        assert_eq!(s.to_string().parse::<Seed>().unwrap(), s);
    }

    #[test]
    fn draw_bits_limits() {
        let mut t = RandomTape::from_u128(1);
        assert!(t.draw_bits(0).unwrap().is_empty());
        assert_eq!(t.offset(), 0);
        assert_eq!(
            t.draw_bits(MAX_DRAW_BITS + 1),
            Err(TapeError::DrawTooLarge(MAX_DRAW_BITS + 1))
        );
        assert_eq!(t.draw_bits(MAX_DRAW_BITS).unwrap().len(), MAX_DRAW_BITS);
    }

    #[test]
    fn unit_precision_bounds() {
        let mut t = RandomTape::from_u128(2);
        assert!(t.draw_unit(0).is_err());
        assert!(t.draw_unit(65).is_err());
        let u = t.draw_unit(1).unwrap();
        assert!(u.to_f64() == 0.0 || u.to_f64() == 0.5);
        assert_eq!(UnitFixed { numer: 3, precision: 2 }.to_f64(), 0.75);
    }

    #[test]
    fn bits_match_uint_reads() {
        let mut a = RandomTape::from_u128(3);
        let mut b = a.clone();
        let s = a.draw_bits(200).unwrap();
        let x = b.draw_uint(64);
        let y = b.draw_uint(7);
        for i in 0..64 {
            assert_eq!(s.get(i), (x >> i) & 1 == 1);
        }
        for i in 0..7 {
            assert_eq!(s.get(64 + i), (y >> i) & 1 == 1);
        }
    }

    #[test]
    fn extract_matches_sequential() {
        let mut a = RandomTape::from_u128(4);
        let mut b = a.clone();
        let mut words = Vec::new();
        a.draw_words(300, &mut words);
        let mut off = 0;
        for len in [5u32, 64, 13, 1, 60, 64, 64, 29] {
            assert_eq!(extract_bits(&words, off, len), b.draw_uint(len));
            off += len as usize;
        }
    }

    #[test]
    fn derive_ignores_parent_offset() {
        let t = RandomTape::from_u128(5);
        let mut used = t.clone();
        used.draw_uint(17);
        let mut c1 = t.derive(9);
        let mut c2 = used.derive(9);
        assert_eq!(c1.draw_uint(64), c2.draw_uint(64));
        assert_eq!(t.derive_path(&[1, 2]).path(), &[1, 2]);
    }

    #[test]
    fn sibling_streams_differ() {
        let t = RandomTape::from_u128(6);
        let a = t.derive(0).draw_bits(256).unwrap();
        let b = t.derive(1).draw_bits(256).unwrap();
        assert_ne!(a, b);
    }

    proptest! {
        #[test]
        fn clones_replay(seed in any::<u128>(), skip in 0u32..200, n in 1u32..=64) {
            let mut t = RandomTape::from_u128(seed);
            for _ in 0..skip { t.draw_uint(1); }
            let mut c = t.clone();
            prop_assert_eq!(t.draw_uint(n), c.draw_uint(n));
            prop_assert_eq!(t.offset(), c.offset());
        }

        #[test]
        fn fixed_address_is_reproducible(seed in any::<u128>(), path in prop::collection::vec(any::<u64>(), 0..4)) {
            let a = RandomTape::from_u128(seed).derive_path(&path).draw_bits(128).unwrap();
            let b = RandomTape::from_u128(seed).derive_path(&path).draw_bits(128).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn draw_below_in_range(seed in any::<u128>(), n in 1u64..1000) {
            let mut t = RandomTape::from_u128(seed);
            for _ in 0..20 { prop_assert!(t.draw_below(n) < n); }
        }

        #[test]
        fn permutation_is_bijective(seed in any::<u128>(), n in 0usize..50) {
            let mut p = RandomTape::from_u128(seed).permutation(n);
            p.sort_unstable();
            prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }
}

//! Truth-table circuits, brute-force inversion, and the composed circuit
//! `F(r) = h1(C(r)) || h2(r)`.
//!
//! File format: the line `CIRC 1`, then `<m> <n>`, then `2^m` lines each
//! holding the `n`-bit output for inputs `0, 1, ...` in order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::dist::FiniteDistribution;
use crate::hashing::{Bits, Gf2AffineHash};
use crate::tape::{RandomTape, Seed};

pub const MAX_IN_BITS: u32 = 20;
pub const MAX_OUT_BITS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("input width {0} outside 0..=20")]
    InputWidth(u32),
    #[error("output width {0} outside 1..=64")]
    OutputWidth(u32),
    #[error("table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("entry {index} does not fit in {width} bits")]
    EntryTooWide { index: usize, width: u32 },
    #[error("target has {got} bits, circuit outputs {expected}")]
    TargetWidth { expected: u32, got: u32 },
    #[error("{which} has shape {got}, expected {expected}")]
    HashDimension {
        which: &'static str,
        expected: String,
        got: String,
    },
    #[error("composed output width {0} exceeds 64 bits")]
    ComposedTooWide(u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("failure rate {0} outside [0, 1]")]
    FailureRate(f64),
}

fn out_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A function `{0,1}^m -> {0,1}^n` stored as its full table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTableCircuit {
    in_bits: u32,
    out_bits: u32,
    table: Vec<u64>,
}

impl TruthTableCircuit {
    pub fn new(in_bits: u32, out_bits: u32, table: Vec<u64>) -> Result<Self, CircuitError> {
        if in_bits > MAX_IN_BITS {
            return Err(CircuitError::InputWidth(in_bits));
        }
        if !(1..=MAX_OUT_BITS).contains(&out_bits) {
            return Err(CircuitError::OutputWidth(out_bits));
        }
        let expected = 1usize << in_bits;
        if table.len() != expected {
            return Err(CircuitError::TableSize {
                expected,
                got: table.len(),
            });
        }
        if let Some(index) = table.iter().position(|&v| v & !out_mask(out_bits) != 0) {
            return Err(CircuitError::EntryTooWide {
                index,
                width: out_bits,
            });
        }
        Ok(TruthTableCircuit {
            in_bits,
            out_bits,
            table,
        })
    }

    /// Uniformly random table.
    pub fn random(in_bits: u32, out_bits: u32, tape: &mut RandomTape) -> Result<Self, CircuitError> {
        if in_bits > MAX_IN_BITS {
            return Err(CircuitError::InputWidth(in_bits));
        }
        let table = (0..1usize << in_bits).map(|_| tape.draw_uint(out_bits)).collect();
        Self::new(in_bits, out_bits, table)
    }

    pub fn in_bits(&self) -> u32 {
        self.in_bits
    }

    pub fn out_bits(&self) -> u32 {
        self.out_bits
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    #[inline]
    pub fn eval(&self, r: u64) -> u64 {
        self.table[r as usize]
    }

    /// Distinct outputs with their preimages in increasing order.
    pub fn preimages(&self) -> BTreeMap<u64, Vec<u32>> {
        let mut m: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for (r, &y) in self.table.iter().enumerate() {
            m.entry(y).or_default().push(r as u32);
        }
        m
    }

    /// Output distribution under a uniform input, over the image in sorted
    /// order.
    pub fn induced_distribution(&self) -> FiniteDistribution<Bits> {
        let total = self.table.len() as f64;
        let (outcomes, probs): (Vec<Bits>, Vec<f64>) = self
            .preimages()
            .into_iter()
            .map(|(y, rs)| {
                (
                    Bits::new(y, self.out_bits).expect("entry fits"),
                    rs.len() as f64 / total,
                )
            })
            .unzip();
        FiniteDistribution::new(outcomes, probs).expect("counts sum to the table size")
    }
}

/// Inversion oracles. Both are deterministic; the tape argument of
/// [`InverterOracle::invert`] is accepted for interface uniformity.
#[derive(Clone, Debug, PartialEq)]
pub enum InverterOracle {
    BruteForce,
    /// Answers `None` on `round(rate * |image|)` image points chosen by a
    /// keyed ranking of the image under `seed`.
    BruteForceWithFailure { rate: f64, seed: Seed },
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl InverterOracle {
    pub fn with_failure(rate: f64, seed: Seed) -> Result<Self, CircuitError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(CircuitError::FailureRate(rate));
        }
        Ok(InverterOracle::BruteForceWithFailure { rate, seed })
    }

    /// Image points on which this oracle answers `None` for `c`.
    pub fn failing_targets(&self, c: &TruthTableCircuit) -> BTreeSet<u64> {
        match *self {
            InverterOracle::BruteForce => BTreeSet::new(),
            InverterOracle::BruteForceWithFailure { rate, seed } => {
                let key = RandomTape::new(seed).draw_uint(64);
                let mut image: Vec<u64> = c.preimages().into_keys().collect();
                let fail = (rate * image.len() as f64).round() as usize;
                image.sort_by_key(|&y| (mix64(key ^ mix64(y)), y));
                image.into_iter().take(fail).collect()
            }
        }
    }

    /// Least preimage of `y`, or `None` if there is none or the oracle fails.
    pub fn invert(
        &self,
        c: &TruthTableCircuit,
        y: Bits,
        _tape: &RandomTape,
    ) -> Result<Option<Bits>, CircuitError> {
        if y.len() != c.out_bits {
            return Err(CircuitError::TargetWidth {
                expected: c.out_bits,
                got: y.len(),
            });
        }
        let hit = c.table.iter().position(|&v| v == y.value());
        let Some(r) = hit else { return Ok(None) };
        if let InverterOracle::BruteForceWithFailure { .. } = self {
            if self.failing_targets(c).contains(&y.value()) {
                return Ok(None);
            }
        }
        Ok(Some(Bits::new(r as u64, c.in_bits).expect("index fits")))
    }
}

/// Builds `F(r) = h1(C(r)) || h2(r)` where `h1: n -> ell + k` and
/// `h2: m -> m - ell + k`. The output has `m + 2k` bits with `h1` in the
/// high part.
pub fn compose_f(
    c: &TruthTableCircuit,
    h1: &Gf2AffineHash,
    h2: &Gf2AffineHash,
    ell: u32,
) -> Result<TruthTableCircuit, CircuitError> {
    let (m, n) = (c.in_bits, c.out_bits);
    let shape = |h: &Gf2AffineHash| format!("{} -> {}", h.in_bits(), h.out_bits());
    if h1.in_bits() != n || h1.out_bits() < ell {
        return Err(CircuitError::HashDimension {
            which: "h1",
            expected: format!("{n} -> {ell} + k"),
            got: shape(h1),
        });
    }
    let k = h1.out_bits() - ell;
    if ell > m || h2.in_bits() != m || h2.out_bits() != m - ell + k {
        return Err(CircuitError::HashDimension {
            which: "h2",
            expected: format!("{m} -> {}", (m + k).saturating_sub(ell)),
            got: shape(h2),
        });
    }
    let w = m + 2 * k;
    if w > 64 {
        return Err(CircuitError::ComposedTooWide(w));
    }
    let low = h2.out_bits();
    let table = c
        .table
        .iter()
        .enumerate()
        .map(|(r, &y)| (h1.eval(y) << low) | h2.eval(r as u64))
        .collect();
    TruthTableCircuit::new(m, w, table)
}

pub fn emit_circuit(c: &TruthTableCircuit) -> String {
    let mut s = String::with_capacity(16 + c.table.len() * (c.out_bits as usize + 1));
    s.push_str("CIRC 1\n");
    let _ = writeln!(s, "{} {}", c.in_bits, c.out_bits);
    for &y in &c.table {
        let _ = writeln!(s, "{:0width$b}", y, width = c.out_bits as usize);
    }
    s
}

pub fn parse_circuit(text: &str) -> Result<TruthTableCircuit, CircuitError> {
    let err = |line: usize, msg: String| CircuitError::Parse { line, msg };
    let mut lines = text.lines();
    match lines.next() {
        Some("CIRC 1") => {}
        other => {
            return Err(err(
                1,
                format!("malformed header {:?}, expected \"CIRC 1\"", other.unwrap_or("")),
            ))
        }
    }
    let dims = lines.next().ok_or_else(|| err(2, "missing dimensions".into()))?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let parse_dim = |s: &str| s.parse::<u32>().map_err(|_| err(2, format!("bad dimension {s:?}")));
    let (m, n) = match parts.as_slice() {
        [a, b] => (parse_dim(a)?, parse_dim(b)?),
        _ => return Err(err(2, format!("expected \"<m> <n>\", got {dims:?}"))),
    };
    if m > MAX_IN_BITS {
        return Err(err(2, format!("input width {m} exceeds {MAX_IN_BITS}")));
    }
    if !(1..=MAX_OUT_BITS).contains(&n) {
        return Err(err(2, format!("output width {n} outside 1..={MAX_OUT_BITS}")));
    }
    let rows = 1usize << m;
    let mut table = Vec::with_capacity(rows);
    for (i, row) in lines.enumerate() {
        let line = i + 3;
        if table.len() == rows {
            return Err(err(line, format!("expected exactly {rows} rows")));
        }
        if row.len() != n as usize {
            return Err(err(
                line,
                format!("entry {row:?} has {} characters, expected {n}", row.len()),
            ));
        }
        let v = row
            .parse::<Bits>()
            .map_err(|e| err(line, e.to_string()))?
            .value();
        table.push(v);
    }
    if table.len() != rows {
        return Err(err(
            table.len() + 3,
            format!("expected {rows} rows, found {}", table.len()),
        ));
    }
    TruthTableCircuit::new(m, n, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::sample_hash;
    use proptest::prelude::*;

    fn tiny() -> TruthTableCircuit {
        TruthTableCircuit::new(2, 1, vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn induced_distribution_of_tiny_table() {
        let d = tiny().induced_distribution();
        assert_eq!(d.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn inversion_returns_least_preimage() {
        let t = RandomTape::from_u128(0);
        let c = tiny();
        let x = InverterOracle::BruteForce
            .invert(&c, "1".parse().unwrap(), &t)
            .unwrap()
            .unwrap();
        assert_eq!(x.to_string(), "10");
        let c = TruthTableCircuit::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(
            InverterOracle::BruteForce.invert(&c, "11".parse().unwrap(), &t),
            Ok(None)
        );
        assert!(InverterOracle::BruteForce
            .invert(&c, "1".parse().unwrap(), &t)
            .is_err());
    }

    #[test]
    fn failure_oracle_fails_on_exact_count() {
        let mut tape = RandomTape::from_u128(3);
        let c = TruthTableCircuit::random(6, 4, &mut tape).unwrap();
        let image = c.preimages().len();
        let o = InverterOracle::with_failure(0.3, Seed(5)).unwrap();
        let failing = o.failing_targets(&c);
        assert_eq!(failing.len(), (0.3 * image as f64).round() as usize);
        assert_eq!(failing, o.failing_targets(&c));
        let mut misses = 0;
        for y in c.preimages().keys() {
            let b = Bits::new(*y, 4).unwrap();
            if o.invert(&c, b, &tape).unwrap().is_none() {
                misses += 1;
            }
        }
        assert_eq!(misses, failing.len());
        assert!(InverterOracle::with_failure(1.5, Seed(0)).is_err());
    }

    #[test]
    fn compose_checks_dimensions() {
        let mut t = RandomTape::from_u128(1);
        let c = TruthTableCircuit::random(4, 3, &mut t).unwrap();
        let h1 = sample_hash(3, 1 + 2, &mut t).unwrap();
        let h2 = sample_hash(4, 4 - 1 + 2, &mut t).unwrap();
        let f = compose_f(&c, &h1, &h2, 1).unwrap();
        assert_eq!(f.out_bits(), 4 + 2 * 2);
        for r in 0..16u64 {
            assert_eq!(f.eval(r), (h1.eval(c.eval(r)) << 5) | h2.eval(r));
        }
        let bad1 = sample_hash(2, 3, &mut t).unwrap();
        let e = compose_f(&c, &bad1, &h2, 1).unwrap_err();
        assert!(e.to_string().starts_with("h1"));
        let bad2 = sample_hash(4, 4, &mut t).unwrap();
        let e = compose_f(&c, &h1, &bad2, 1).unwrap_err();
        assert!(e.to_string().starts_with("h2"));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = parse_circuit("CIRC 2\n1 1\n0\n1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 1, .. }));
        let e = parse_circuit("CIRC 1\n1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        let e = parse_circuit("CIRC 1\n1 1\n0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 4, .. }));
        let e = parse_circuit("CIRC 1\n1 1\n0\n1\n1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 5, .. }));
        let e = parse_circuit("CIRC 1\n1 2\n01\n011\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 4, .. }));
        let e = parse_circuit("CIRC 1\n1 2\n01\n0x\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 4, .. }));
    }

    #[test]
    fn tiny_text_form() {
        let text = "CIRC 1\n2 1\n0\n0\n1\n1\n";
        assert_eq!(parse_circuit(text).unwrap(), tiny());
        assert_eq!(emit_circuit(&tiny()), text);
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(seed in any::<u128>(), m in 0u32..8, n in 1u32..20) {
            let c = TruthTableCircuit::random(m, n, &mut RandomTape::from_u128(seed)).unwrap();
            let text = emit_circuit(&c);
            let back = parse_circuit(&text).unwrap();
            prop_assert_eq!(emit_circuit(&back), text);
            prop_assert_eq!(back, c);
        }

        #[test]
        fn brute_force_inverts_image(seed in any::<u128>(), m in 1u32..8, n in 1u32..6) {
            let mut t = RandomTape::from_u128(seed);
            let c = TruthTableCircuit::random(m, n, &mut t).unwrap();
            for y in 0..(1u64 << n) {
                let got = InverterOracle::BruteForce.invert(&c, Bits::new(y, n).unwrap(), &t).unwrap();
                let want = (0..1u64 << m).find(|&r| c.eval(r) == y);
                prop_assert_eq!(got.map(|b| b.value()), want);
            }
        }
    }
}

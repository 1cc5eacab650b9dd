use proptest::prelude::*;
use stability_core::hashing::{sample_hash, Bits, Gf2AffineHash};
use stability_core::tape::RandomTape;

/// Reference `A x + b` computed one bit at a time, row `i` giving output
/// bit `i`.
fn naive(rows: &[u64], offset: u64, n: u32, x: u64) -> u64 {
    let mut y = 0;
    for (i, row) in rows.iter().enumerate() {
        let mut bit = (offset >> i) & 1;
        for j in 0..n {
            bit ^= ((row >> j) & 1) & ((x >> j) & 1);
        }
        y |= bit << i;
    }
    y
}

fn family(n: u32, m: u32) -> Vec<Gf2AffineHash> {
    (0..1u64 << (n * m + m))
        .map(|code| {
            let rows = (0..m).map(|i| (code >> (i * n)) & ((1 << n) - 1)).collect();
            Gf2AffineHash::new(n, m, rows, code >> (n * m)).unwrap()
        })
        .collect()
}

#[test]
fn two_to_one_family_joint_hits() {
    let fam = family(2, 1);
    assert_eq!(fam.len(), 8);
    for r1 in 0..4 {
        for r2 in 0..4 {
            if r1 == r2 {
                continue;
            }
            for x1 in 0..2 {
                for x2 in 0..2 {
                    let hits = fam.iter().filter(|h| h.eval(r1) == x1 && h.eval(r2) == x2).count();
                    assert_eq!(hits * 4, fam.len());
                }
            }
        }
    }
}

#[test]
fn marginals_uniform_at_three_to_two() {
    let fam = family(3, 2);
    for r in 0..8 {
        for x in 0..4 {
            let hits = fam.iter().filter(|h| h.eval(r) == x).count();
            assert_eq!(hits * 4, fam.len());
        }
    }
}

#[test]
fn apply_checks_length() {
    let h = Gf2AffineHash::new(2, 1, vec![0b11], 1).unwrap();
    assert_eq!(h.apply(Bits::new(0b01, 2).unwrap()).unwrap().value(), 0);
    assert!(h.apply(Bits::new(0b01, 3).unwrap()).is_err());
}

proptest! {
    #[test]
    fn eval_matches_reference(seed: u128, n in 1u32..=64, m in 1u32..=64, x: u64) {
        let h = sample_hash(n, m, &mut RandomTape::from_u128(seed)).unwrap();
        let x = if n == 64 { x } else { x & ((1 << n) - 1) };
        prop_assert_eq!(h.eval(x), naive(h.rows(), h.offset(), n, x));
    }

    #[test]
    fn affine_identity(seed: u128, n in 1u32..=64, m in 1u32..=64, x: u64, y: u64) {
        let h = sample_hash(n, m, &mut RandomTape::from_u128(seed)).unwrap();
        let mask = if n == 64 { u64::MAX } else { (1 << n) - 1 };
        let (x, y) = (x & mask, y & mask);
        prop_assert_eq!(h.eval(x) ^ h.eval(y) ^ h.eval(x ^ y), h.eval(0));
    }

    #[test]
    fn sampling_replays(seed: u128, n in 1u32..=64, m in 1u32..=64) {
        let t = RandomTape::from_u128(seed);
        prop_assert_eq!(sample_hash(n, m, &mut t.clone()).unwrap(), sample_hash(n, m, &mut t.clone()).unwrap());
    }
}

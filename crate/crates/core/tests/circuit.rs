use proptest::prelude::*;
use stability_core::circuit::{compose_f, emit_circuit, parse_circuit, InverterOracle, TruthTableCircuit};
use stability_core::hashing::{sample_hash, Bits};
use stability_core::tape::{RandomTape, Seed};

#[test]
fn inversion_exhaustive_at_twelve_bits() {
    let c = TruthTableCircuit::random(12, 8, &mut RandomTape::from_u128(4)).unwrap();
    let tape = RandomTape::from_u128(0);
    for y in 0..256u64 {
        let got = InverterOracle::BruteForce.invert(&c, Bits::new(y, 8).unwrap(), &tape).unwrap();
        let least = c.table().iter().position(|&v| v == y);
        match (got, least) {
            (Some(r), Some(i)) => {
                assert_eq!(r.value(), i as u64);
                assert_eq!(c.eval(r.value()), y);
            }
            (None, None) => {}
            other => panic!("y = {y}: {other:?}"),
        }
    }
}

#[test]
fn induced_distributions() {
    let constant = TruthTableCircuit::new(3, 2, vec![2; 8]).unwrap();
    let d = constant.induced_distribution();
    assert_eq!(d.len(), 1);
    assert_eq!(d.probs(), &[1.0]);
    let identity = TruthTableCircuit::new(3, 3, (0..8).collect()).unwrap();
    assert!(identity.induced_distribution().probs().iter().all(|&p| p == 0.125));
}

#[test]
fn failure_oracle_is_deterministic() {
    let c = TruthTableCircuit::random(8, 6, &mut RandomTape::from_u128(2)).unwrap();
    let o = InverterOracle::with_failure(0.25, Seed(9)).unwrap();
    let image = c.preimages().len();
    let fails = o.failing_targets(&c);
    assert_eq!(fails.len(), (0.25 * image as f64).round() as usize);
    assert_eq!(fails, o.failing_targets(&c));
}

#[test]
fn compose_matches_direct_evaluation() {
    let mut t = RandomTape::from_u128(8);
    let c = TruthTableCircuit::random(4, 3, &mut t).unwrap();
    let (ell, k) = (2, 1);
    let h1 = sample_hash(3, ell + k, &mut t).unwrap();
    let h2 = sample_hash(4, 4 - ell + k, &mut t).unwrap();
    let f = compose_f(&c, &h1, &h2, ell).unwrap();
    assert_eq!(f.out_bits(), 4 + 2 * k);
    for r in 0..16u64 {
        let hi = h1.eval(c.eval(r));
        let lo = h2.eval(r);
        assert_eq!(f.eval(r), hi << (4 - ell + k) | lo);
    }
}

proptest! {
    #[test]
    fn text_round_trip(seed: u128, m in 1u32..=6, n in 1u32..=8) {
        let c = TruthTableCircuit::random(m, n, &mut RandomTape::from_u128(seed)).unwrap();
        let text = emit_circuit(&c);
        let back = parse_circuit(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(emit_circuit(&back), text);
    }

    #[test]
    fn induced_distribution_sums_to_one(seed: u128, m in 1u32..=10, n in 1u32..=6) {
        let c = TruthTableCircuit::random(m, n, &mut RandomTape::from_u128(seed)).unwrap();
        let total: f64 = c.induced_distribution().probs().iter().sum();
        prop_assert_eq!(total, 1.0);
    }
}

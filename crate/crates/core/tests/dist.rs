use proptest::prelude::*;
use stability_core::dist::{
    empirical, estimate_replicability, indistinguishable, tv_distance, DistError, FiniteDistribution,
};
use stability_core::tape::RandomTape;

fn two(p: f64) -> FiniteDistribution<u8> {
    FiniteDistribution::new(vec![0, 1], vec![p, 1.0 - p]).unwrap()
}

#[test]
fn tv_examples() {
    assert_eq!(tv_distance(&two(0.75), &two(0.5)), 0.25);
    let a = FiniteDistribution::point(1u8);
    let b = FiniteDistribution::point(2u8);
    assert_eq!(tv_distance(&a, &b), 1.0);
}

#[test]
fn disjoint_point_masses_are_not_close() {
    assert!(!indistinguishable(&two(1.0), &two(0.0), 0.0, 0.5));
}

#[test]
fn empirical_counts_and_normalization() {
    let e = empirical(&["a", "a", "b"]);
    assert_eq!(e.count(&"a"), 2);
    assert_eq!(e.total(), 3);
    let d = e.normalize().unwrap();
    assert!((d.prob(&"a") - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(empirical::<u8>(&[]).normalize(), Err(DistError::EmptyEmpirical));
}

#[test]
fn replicability_examples() {
    let d = FiniteDistribution::uniform(vec![0u8, 1]).unwrap();
    let tape = RandomTape::from_u128(2);
    let constant = estimate_replicability(|_: &[u8], _: &RandomTape| 7, &d, 4, 500, &tape).unwrap();
    assert_eq!(constant.rate, 1.0);
    let coin = estimate_replicability(|_: &[u8], c: &RandomTape| c.clone().draw_bool(), &d, 4, 500, &tape).unwrap();
    assert_eq!(coin.rate, 1.0);
    let first = estimate_replicability(|s: &[u8], _: &RandomTape| s[0], &d, 1, 4000, &tape).unwrap();
    assert!((first.rate - 0.5).abs() <= 3.0 * first.half_width);
    assert!(estimate_replicability(|_: &[u8], _: &RandomTape| 0, &d, 1, 99, &tape).is_err());
}

fn arb_dist() -> impl Strategy<Value = FiniteDistribution<u8>> {
    prop::collection::vec(0.01f64..1.0, 1..8).prop_map(|w| {
        let n = w.len() as u8;
        FiniteDistribution::from_weights((0..n).collect(), w).unwrap()
    })
}

proptest! {
    #[test]
    fn pure_zero_closeness_is_equality(p in arb_dist(), q in arb_dist()) {
        prop_assert_eq!(indistinguishable(&p, &q, 0.0, 0.0), tv_distance(&p, &q) <= 1e-12);
    }

    #[test]
    fn zero_eps_matches_tv(p in arb_dist(), q in arb_dist(), delta in 0.0f64..1.0) {
        let tv = tv_distance(&p, &q);
        // skip the measure-zero boundary
        prop_assume!((tv - delta).abs() > 1e-9);
        prop_assert_eq!(indistinguishable(&p, &q, 0.0, delta), tv <= delta);
    }

    #[test]
    fn tv_symmetric(p in arb_dist(), q in arb_dist()) {
        prop_assert_eq!(tv_distance(&p, &q), tv_distance(&q, &p));
    }
}

use std::collections::BTreeMap;
use std::sync::Arc;

use stability_core::algo::{FnAlgorithm, StatAlgorithm};
use stability_core::dist::{tv_distance, EmpiricalDistribution, FiniteDistribution};
use stability_core::harness::ToyBase;
use stability_core::learners::{FiniteClass, LabeledPoint};
use stability_core::parallel::par_map;
use stability_core::tape::RandomTape;
use stability_core::transforms::*;

#[test]
fn exp_mech_accuracy_tail() {
    let scores = [0.0, 3.0, 5.0, 8.0, 9.5, 10.0, 2.0, 7.0];
    let (sens, eps, a) = (1.0, 1.0, 3.0);
    let top = 10.0;
    let cut = top - 2.0 * sens / eps * ((scores.len() as f64).ln() + a);
    let probs = exp_mech_probs(&scores, sens, eps).unwrap();
    let bad: f64 = scores.iter().zip(&probs).filter(|(s, _)| **s <= cut).map(|(_, p)| p).sum();
    assert!(bad <= (-a as f64).exp());
    // sampling agrees with the closed form
    let mut t = RandomTape::from_u128(70);
    let n = 50_000;
    let mut hist = vec![0u64; scores.len()];
    for _ in 0..n {
        hist[exp_mech_index(&scores, sens, eps, &mut t).unwrap()] += 1;
    }
    for (h, p) in hist.iter().zip(&probs) {
        assert!((*h as f64 / n as f64 - p).abs() < 0.01);
    }
}

#[test]
fn selection_output_is_near_the_mode() {
    let sel = DpSelection::new(DPParams::new(1.0, 0.1).unwrap());
    let mut gen = RandomTape::from_u128(71);
    for _ in 0..50 {
        let counts: BTreeMap<u8, u64> = (0..5u8).map(|i| (i, gen.draw_below(40))).filter(|&(_, c)| c > 0).collect();
        if counts.is_empty() {
            continue;
        }
        let mode = *counts.values().max().unwrap();
        let d = sel.distribution(&counts);
        for (o, p) in d.iter() {
            if p > 0.0 {
                if let Some(y) = o {
                    assert!(counts[y] as i64 >= mode as i64 - sel.max_gap(), "{counts:?} -> {y}");
                }
            }
        }
        if mode as f64 >= sel.threshold() + sel.max_gap() as f64 {
            assert!(d.prob(&None) < 1e-12);
        }
    }
}

#[test]
fn rep_to_dp_returns_the_canonical_output() {
    // deterministic in the sample's parity, which is fixed here
    let base = FnAlgorithm::new(4, |s: &[u8], _: &RandomTape| s.iter().map(|&x| u32::from(x)).sum::<u32>() % 2);
    let p = RepToDpParams::new(DPParams::new(1.0, 0.1).unwrap(), 0.1, RepToDpConstants::default()).unwrap();
    let alg = RepToDp::new(base, p);
    let s = vec![2u8; alg.sample_size()];
    for seed in 0..50u128 {
        assert_eq!(alg.run(&s, &RandomTape::from_u128(seed)), Some(0));
    }
}

#[test]
fn rep_to_dp_exact_matches_sampling() {
    let p = RepToDpParams::explicit(DPParams::new(1.0, 0.2).unwrap(), 0.1, 2, 4).unwrap();
    let alg = RepToDp::new(FiniteCoins(ToyBase), p);
    let s: Vec<u8> = vec![0, 1, 1, 1, 2, 0, 0, 0];
    let exact = alg.exact_distribution(&s);
    let root = RandomTape::from_u128(72);
    let emp: EmpiricalDistribution<Option<u8>> = par_map(60_000, |i| alg.run(&s, &root.derive(i as u64))).into_iter().collect();
    let tv = tv_distance(&emp.normalize().unwrap(), &exact);
    assert!(tv < 0.015, "tv {tv}");
    // never invents outputs
    for (o, p) in exact.iter() {
        if p > 0.0 {
            if let Some(y) = o {
                assert!(*y < 3);
            }
        }
    }
}

#[test]
fn rep_to_pg_keeps_a_deterministic_output() {
    let base = FnAlgorithm::new(2, |s: &[u8], _: &RandomTape| s[0] % 2);
    let p = RepToPgParams::new(1.0, 0.1, 0.1, RepToPgConstants::default()).unwrap();
    let alg = RepToPg::new(base, p);
    let s = vec![4u8; alg.sample_size()];
    for seed in 0..10u128 {
        assert_eq!(alg.run(&s, &RandomTape::from_u128(seed)), 0);
    }
}

fn subsets(v: &[u8], n: usize) -> Vec<Vec<u8>> {
    if n == 0 {
        return vec![vec![]];
    }
    if v.len() < n {
        return vec![];
    }
    let mut out: Vec<Vec<u8>> = subsets(&v[1..], n - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, v[0]);
            s
        })
        .collect();
    out.extend(subsets(&v[1..], n));
    out
}

#[test]
fn subsample_histograms_match_enumeration() {
    let sample = [0u8, 0, 1, 2, 2, 2];
    let hist = |s: &[u8]| {
        let mut h = [0u8; 3];
        for &x in s {
            h[x as usize] += 1;
        }
        h
    };
    let alg = FnAlgorithm::new(3, move |s: &[u8], _: &RandomTape| hist(s));
    let w = subsample_amplify(alg, 6).unwrap();
    let all = subsets(&sample, 3);
    let mut exact: BTreeMap<[u8; 3], f64> = BTreeMap::new();
    for s in &all {
        *exact.entry(hist(s)).or_default() += 1.0 / all.len() as f64;
    }
    let (o, p): (Vec<_>, Vec<_>) = exact.into_iter().unzip();
    let exact = FiniteDistribution::new(o, p).unwrap();
    let root = RandomTape::from_u128(73);
    let emp: EmpiricalDistribution<[u8; 3]> = par_map(40_000, |i| w.run(&sample, &root.derive(i as u64))).into_iter().collect();
    assert!(tv_distance(&emp.normalize().unwrap(), &exact) < 0.015);
}

fn four_class() -> Arc<FiniteClass> {
    let hs = vec![
        vec![false, false, false, false],
        vec![true, true, false, false],
        vec![true, false, true, false],
        vec![true, true, true, true],
    ];
    Arc::new(FiniteClass::new(4, hs).unwrap())
}

#[test]
fn large_eps_learner_picks_the_minimizer() {
    let class = four_class();
    let sample: Vec<LabeledPoint> = (0..40).map(|i| ((i % 4) as u32, i % 4 < 2)).collect();
    let hits = (0..200u128)
        .filter(|&s| dp_exp_mech_learner(class.clone(), 50.0, &sample, &RandomTape::from_u128(s)).unwrap() == 1)
        .count();
    assert!(hits as f64 / 200.0 >= 0.99);
}

#[test]
fn dp_to_rep_fallback_is_flagged() {
    let noisy = FnAlgorithm::new(1, |s: &[u8], c: &RandomTape| (s[0] + c.clone().draw_below(2) as u8) % 3);
    struct WithSpace<A>(A);
    impl<A: StatAlgorithm<u8, Output = u8>> StatAlgorithm<u8> for WithSpace<A> {
        type Output = u8;
        fn sample_size(&self) -> usize {
            1
        }
        fn run(&self, s: &[u8], c: &RandomTape) -> u8 {
            self.0.run(s, c)
        }
        fn output_space(&self) -> Option<Vec<u8>> {
            Some(vec![0, 1, 2])
        }
    }
    let w = DpToRep::with_fallback(WithSpace(noisy), 2000);
    assert!(w.approximate(&[1u8]));
    assert!(w.exact_output_distribution(&[1u8]).is_none());
    let q = w.target(&[1u8], &RandomTape::from_u128(74)).unwrap();
    assert!(q.prob(&0) < 1e-12 && (q.prob(&1) - 0.5).abs() < 0.05);
    let y = w.try_run(&[1u8], &RandomTape::from_u128(75)).unwrap();
    assert!(y == 1 || y == 2);

    let exact = DpToRep::new(DpExpMechLearner::new(four_class(), 1.0, 4).unwrap());
    assert!(!exact.approximate(&[(0u32, true); 4]));
}

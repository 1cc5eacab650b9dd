use std::collections::BTreeSet;
use std::sync::Arc;

use stability_core::algo::{run_on, FnAlgorithm, StatAlgorithm, SubsetSampler};
use stability_core::dist::{estimate_rate, estimate_replicability, Estimate, FiniteDistribution};
use stability_core::harness::realizable_instance;
use stability_core::learners::*;
use stability_core::parallel::par_map;
use stability_core::tape::RandomTape;

fn noisy_instance(seed: u128, noise: f64) -> (Arc<FiniteClass>, FiniteDistribution<LabeledPoint>) {
    let mut t = RandomTape::from_u128(seed);
    let class = Arc::new(FiniteClass::random(8, 4, &mut t).unwrap());
    let target = class.hypothesis(0).to_vec();
    let mut pts = Vec::new();
    let mut w = Vec::new();
    for x in 0..8u32 {
        pts.push((x, target[x as usize]));
        w.push(1.0 - noise);
        pts.push((x, !target[x as usize]));
        w.push(noise);
    }
    (class, FiniteDistribution::from_weights(pts, w).unwrap())
}

#[test]
fn most_thresholds_separate_two_samples() {
    let (class, data) = realizable_instance(&RandomTape::from_u128(50));
    let p = LearnerParams::new(class.len(), 0.2, 0.2, 0.1, true, LearnerConstants::default()).unwrap();
    let grid = p.thresholds(0.0);
    let root = RandomTape::from_u128(51);
    // under a uniform ordering two nested eligible sets pick different first
    // elements with probability |A xor B| / |A or B|
    let fractions = par_map(100, |i| {
        let t = root.derive(i as u64);
        let mistakes: Vec<Vec<u64>> = (1..3)
            .map(|j| {
                let s = data.sample_n(p.m, &mut t.derive(j));
                class.mistakes(&LabelCounts::from_points(64, &s))
            })
            .collect();
        let mut total = 0.0;
        for &v in &grid {
            let bar = v * p.m as f64;
            let (mut union, mut sym) = (0, 0);
            for h in 0..class.len() {
                let (a, b) = (mistakes[0][h] as f64 <= bar, mistakes[1][h] as f64 <= bar);
                union += usize::from(a || b);
                sym += usize::from(a != b);
            }
            total += sym as f64 / union.max(1) as f64;
        }
        total / grid.len() as f64
    });
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!(mean <= p.rho, "mean disagreement over thresholds {mean}");
}

#[test]
fn opt_estimate_lies_in_its_window() {
    for seed in 0..20u128 {
        let (class, data) = noisy_instance(seed, 0.15);
        let s = data.sample_n(500, &mut RandomTape::from_u128(seed + 100));
        let counts = LabelCounts::from_points(8, &s);
        let opt_s = *class.mistakes(&counts).iter().min().unwrap() as f64 / 500.0;
        let alpha = 0.2;
        let v = estimate_opt(&class, &s, alpha, &RandomTape::from_u128(seed)).unwrap();
        assert!(v >= opt_s + alpha / 8.0 - 1e-12 && v <= opt_s + alpha / 4.0 + 1e-12, "{v} vs {opt_s}");
    }
}

#[test]
fn end_to_end_replay() {
    let (class, data) = realizable_instance(&RandomTape::from_u128(52));
    let p = LearnerParams::new(class.len(), 0.2, 0.2, 0.1, true, LearnerConstants::default()).unwrap();
    for seed in 0..5u128 {
        let coins = RandomTape::from_u128(seed);
        let a = r_finite_learn(class.clone(), &data, p, &coins, &mut RandomTape::from_u128(seed + 9)).unwrap();
        let b = r_finite_learn(class.clone(), &data, p, &coins, &mut RandomTape::from_u128(seed + 9)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn agnostic_threshold_learner_is_accurate() {
    let (class, data) = noisy_instance(53, 0.1);
    let (rho, alpha, beta) = (0.3, 0.2, 0.1);
    let p = LearnerParams::new(4, rho, alpha, beta, false, LearnerConstants::default()).unwrap();
    let l = RFiniteLearner::new(class.clone(), p).unwrap();
    let opt = class.opt(&data);
    let ok = estimate_rate(200, &RandomTape::from_u128(54), |t| {
        let h = run_on(&l, &data, &t.derive(0), &mut t.derive(1));
        class.true_risk(h, &data) <= opt + alpha
    });
    assert!(ok.rate >= 1.0 - beta - 3.0 * ok.half_width, "{ok:?}");
}

struct TwoLists;

impl SubsetSampler for TwoLists {
    fn universe_size(&self) -> usize {
        2
    }
    fn max_size(&self) -> usize {
        1
    }
    fn draw(&self, tape: &mut RandomTape) -> Vec<usize> {
        if tape.draw_f64() < 0.9 {
            vec![0]
        } else {
            vec![1]
        }
    }
}

#[test]
fn list_heavy_hitter_finds_the_heavy_element() {
    let p = ListHHParams::new(0.5, 0.2, 0.1, 1, ListHHConstants::default()).unwrap();
    let root = RandomTape::from_u128(55);
    let outs = par_map(300, |i| {
        let t = root.derive(i as u64);
        list_heavy_hitter(&TwoLists, p, &t.derive(0), &mut t.derive(1))
    });
    // b has weight 0.1, below every threshold
    let hits = outs.iter().filter(|&&o| o == Some(0)).count();
    assert!(hits as f64 / 300.0 >= 0.9, "{hits}");
    assert!(outs.iter().all(|&o| o != Some(1)));
}

#[test]
fn amplification_raises_replicability() {
    // at least 5 of 10 with bias 0.65: agreement about 0.83
    let base = FnAlgorithm::new(10, |s: &[bool], _: &RandomTape| s.iter().filter(|&&b| b).count() >= 5);
    let data = FiniteDistribution::new(vec![false, true], vec![0.35, 0.65]).unwrap();
    let base_rep = estimate_replicability(|s: &[bool], c: &RandomTape| base.run(s, c), &data, 10, 2000, &RandomTape::from_u128(56)).unwrap();
    let amp = amplify_replicability(base, 0.1, AmplifyConstants::default()).unwrap();
    let n = amp.sample_size();
    let rep: Estimate =
        estimate_replicability(|s: &[bool], c: &RandomTape| amp.run(s, c), &data, n, 1000, &RandomTape::from_u128(57)).unwrap();
    assert!(rep.rate >= 0.9 - 3.0 * rep.half_width, "amplified {rep:?}, base {base_rep:?}");
    assert!(rep.rate > base_rep.rate);
}

#[test]
fn generator_keeps_only_near_best_outputs() {
    let (class, data) = noisy_instance(58, 0.05);
    let lp = LearnerParams::new(4, 0.25, 0.05, 0.025, true, LearnerConstants::default()).unwrap();
    let l = RFiniteLearner::new(class.clone(), lp).unwrap();
    let strings: Vec<RandomTape> = (0..3).map(|i| RandomTape::from_u128(i)).collect();
    let mut t = RandomTape::from_u128(59);
    let xs: Vec<u32> = data.sample_n(lp.m, &mut t).into_iter().map(|p| p.0).collect();
    let labeled = data.sample_n(400, &mut t);
    let alpha = 0.2;
    let out = list_distribution_generator(&l, &strings, &xs, &labeled, alpha);
    assert!(!out.is_empty());
    let risk = |h: usize| empirical_risk(&class, h, &labeled).unwrap();
    let best = out.iter().map(|&h| risk(h)).min().unwrap();
    let slack = num_rational::Ratio::new((alpha * 400.0 / 2.0) as u64, 400);
    assert!(out.iter().all(|&h| risk(h) <= best + slack));
    // the realizable learner sees every labeling, so the true target shows up
    assert!(out.contains(&0));
}

#[test]
fn agnostic_pipeline_small() {
    let (class, data) = noisy_instance(60, 0.1);
    let opt = class.opt(&data);
    let (rho, alpha, beta) = (0.3, 0.4, 0.2);
    let constants = AgnosticConstants {
        hh: ListHHConstants { c_t1: 1.0, c_t2: 1.0 / 64.0, c_tau: 1.0 },
        ..AgnosticConstants::default()
    };
    let root = RandomTape::from_u128(61);
    let outs = par_map(30, |i| {
        let t = root.derive(i as u64);
        agnostic_learn(class.clone(), &data, rho, alpha, beta, constants, &t.derive(0), &mut t.derive(1)).unwrap()
    });
    let good = outs.iter().filter(|o| o.is_some_and(|h| class.true_risk(h, &data) <= opt + alpha)).count();
    assert!(good as f64 / 30.0 >= 1.0 - beta, "{good}/30: {outs:?}");
    let distinct: BTreeSet<_> = outs.iter().collect();
    assert!(distinct.len() <= 2, "{distinct:?}");
}

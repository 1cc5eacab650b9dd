//! Acceptance experiments. Each criterion returns a [`Report`] whose
//! pass/fail follows from the recorded values and bounds alone.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::algo::{FnAlgorithm, SampleSource, StatAlgorithm, SubsetSampler};
use crate::circuit::{InverterOracle, TruthTableCircuit};
use crate::corrsamp::{consistent_sample, CorrSampConstants, CorrSampParams, CorrSampler};
use crate::crypto::{keygen, max_selection_ratio, CheatSolver, DpRandEnc, GmKeys, measure_advantage};
use crate::dist::{
    chi_square_gof, estimate_paired, estimate_rate, estimate_replicability, indistinguishable, tv_distance,
    EmpiricalDistribution, Estimate, FiniteDistribution,
};
use crate::hashing::Gf2AffineHash;
use crate::learners::{
    first_element_disagreement, FiniteClass, LabeledPoint, LearnerConstants, LearnerParams, ListHHConstants,
    ListHHParams, ListHeavyHitter, RFiniteLearner,
};
use crate::parallel::par_map;
use crate::tape::RandomTape;
use crate::transforms::{
    DPParams, DpExpMechLearner, DpToRep, FiniteCoinAlgorithm, FiniteCoins, RepToDp, RepToDpParams, RepToPg,
    RepToPgParams,
};

/// Slack for comparisons of values that are exact up to float rounding.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    /// `value <= bound`
    Le,
    /// `value >= bound`
    Ge,
    /// `|value - bound| <= EXACT_TOL`
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub cmp: Cmp,
    /// Threshold the value is compared against, with any Monte Carlo
    /// allowance already included.
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub half_width: Option<f64>,
    pub pass: bool,
}

impl Metric {
    pub fn new(value: f64, cmp: Cmp, bound: f64, half_width: Option<f64>) -> Self {
        let pass = match cmp {
            Cmp::Le => value <= bound,
            Cmp::Ge => value >= bound,
            Cmp::Eq => (value - bound).abs() <= EXACT_TOL,
        };
        Metric {
            value,
            cmp,
            bound,
            half_width,
            pass,
        }
    }

    pub fn le(value: f64, bound: f64) -> Self {
        Self::new(value, Cmp::Le, bound, None)
    }

    pub fn ge(value: f64, bound: f64) -> Self {
        Self::new(value, Cmp::Ge, bound, None)
    }

    pub fn eq(value: f64, expected: f64) -> Self {
        Self::new(value, Cmp::Eq, expected, None)
    }

    /// `rate >= bound - 3 half_width`.
    pub fn ge_est(e: Estimate, bound: f64) -> Self {
        Self::new(e.rate, Cmp::Ge, bound - 3.0 * e.half_width, Some(e.half_width))
    }

    /// `rate <= bound + 3 half_width`.
    pub fn le_est(e: Estimate, bound: f64) -> Self {
        Self::new(e.rate, Cmp::Le, bound + 3.0 * e.half_width, Some(e.half_width))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub seed: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, Metric>,
    pub constants: BTreeMap<String, f64>,
    /// Non-metric outputs such as histograms or chosen hypotheses.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub details: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

impl Report {
    pub fn new(suite: &str, seed: &str) -> Self {
        Report {
            suite: suite.to_string(),
            seed: seed.to_string(),
            pass: true,
            metrics: BTreeMap::new(),
            constants: BTreeMap::new(),
            details: BTreeMap::new(),
            wall_clock_secs: None,
        }
    }

    pub fn metric(&mut self, name: &str, m: Metric) {
        self.metrics.insert(name.to_string(), m);
        self.refresh();
    }

    pub fn constant(&mut self, name: &str, v: f64) {
        self.constants.insert(name.to_string(), v);
    }

    /// Recomputes `pass` from the metrics.
    pub fn refresh(&mut self) {
        self.pass = self.metrics.values().all(|m| m.pass);
    }

    /// Copies `other`'s metrics and constants under `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.constants {
            self.constants.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.details {
            self.details.insert(format!("{prefix}.{k}"), v);
        }
        self.refresh();
    }

    pub fn failures(&self) -> Vec<&str> {
        self.metrics.iter().filter(|(_, m)| !m.pass).map(|(k, _)| k.as_str()).collect()
    }
}

/// Overrides for the experiment parameters. `None` keeps the value the
/// acceptance criteria use.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    /// Main Monte Carlo count of the suite.
    pub trials: Option<usize>,
    pub prime_bits: Option<u32>,
    pub corrsamp: Option<CorrSampConstants>,
    pub learner: Option<LearnerConstants>,
    pub list_hh: Option<ListHHConstants>,
}

pub const CRITERIA: [&str; 13] = [
    "pairwise independence",
    "consistent sampler",
    "corrsamp accuracy",
    "corrsamp correlation",
    "finite-class learner",
    "random-ordering identity",
    "rep_to_dp privacy",
    "rep_to_pg generalization",
    "dp_to_rep",
    "dp_rand_enc",
    "gm rerandomization",
    "adversary advantage",
    "list heavy-hitters",
];

/// Runs criterion `id` (1-based).
pub fn criterion(id: usize, s: &Settings, tape: &RandomTape, seed: &str) -> Report {
    let mut r = Report::new(&format!("criterion-{id}"), seed);
    match id {
        1 => pairwise_independence(&mut r),
        2 => consistent_sampler(&mut r, s, tape),
        3 => corrsamp_accuracy(&mut r, s, tape),
        4 => corrsamp_correlation(&mut r, s, tape),
        5 => finite_learner(&mut r, s, tape),
        6 => ordering_identity(&mut r),
        7 => rep_to_dp_exact(&mut r, s),
        8 => rep_to_pg_generalization(&mut r, s, tape),
        9 => dp_to_rep(&mut r, s, tape),
        10 => dp_rand_enc(&mut r, s),
        11 => rerandomization(&mut r),
        12 => adversary_advantage(&mut r, s, tape),
        13 => list_heavy_hitters(&mut r, s, tape),
        _ => panic!("no criterion {id}"),
    }
    r
}

fn record_corrsamp_constants(r: &mut Report, p: &CorrSampParams) {
    r.constant("c0", p.constants.c0);
    r.constant("c1", p.constants.c1);
    r.constant("c2", p.constants.c2);
    r.constant("k", f64::from(p.k));
    r.constant("t1", p.t1 as f64);
    r.constant("t2", p.t2 as f64);
}

/// Criterion 1: exact joint hit counts of the affine family.
pub fn pairwise_independence(r: &mut Report) {
    let mut worst = 0u64;
    for n in 2..=4u32 {
        for m in 1..=3u32 {
            let size = 1usize << n;
            let outs = 1usize << m;
            let mut hits = vec![0u64; size * size * outs * outs];
            let funcs = 1u64 << (n * m + m);
            for code in 0..funcs {
                let rows: Vec<u64> = (0..m).map(|i| (code >> (i * n)) & ((1 << n) - 1)).collect();
                let offset = code >> (n * m);
                let h = Gf2AffineHash::new(n, m, rows, offset).expect("in range");
                let ys: Vec<usize> = (0..size as u64).map(|x| h.eval(x) as usize).collect();
                for x1 in 0..size {
                    for x2 in 0..size {
                        if x1 != x2 {
                            hits[((x1 * size + x2) * outs + ys[x1]) * outs + ys[x2]] += 1;
                        }
                    }
                }
            }
            let expect = funcs >> (2 * m);
            for x1 in 0..size {
                for x2 in 0..size {
                    if x1 == x2 {
                        continue;
                    }
                    for y in 0..outs * outs {
                        worst = worst.max(hits[(x1 * size + x2) * outs * outs + y].abs_diff(expect));
                    }
                }
            }
        }
    }
    r.metric("max_count_deviation", Metric::eq(worst as f64, 0.0));
}

/// Random `(P, Q)` over `s` outcomes with `tv(P, Q) = target`: `Q` moves
/// mass from `P` toward the least likely outcome.
fn distribution_pair(tape: &mut RandomTape) -> (FiniteDistribution<u32>, FiniteDistribution<u32>) {
    let s = 2 + tape.draw_below(63) as usize;
    let target = 0.05 + 0.45 * tape.draw_f64();
    let w: Vec<f64> = (0..s).map(|_| 0.05 + tape.draw_f64()).collect();
    let total: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / total).collect();
    let (low, pmin) = p.iter().enumerate().fold((0, 1.0), |a, (i, &x)| if x < a.1 { (i, x) } else { a });
    let lambda = target / (1.0 - pmin);
    let q: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, &x)| (1.0 - lambda) * x + if i == low { lambda } else { 0.0 })
        .collect();
    let outs: Vec<u32> = (0..s as u32).collect();
    (
        FiniteDistribution::new(outs.clone(), p).expect("normalized"),
        FiniteDistribution::new(outs, q).expect("normalized"),
    )
}

/// Criterion 2.
pub fn consistent_sampler(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let trials = s.trials.unwrap_or(100_000);
    let pairs = 20;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst = None;
    let mut min_p = 1.0f64;
    for i in 0..pairs {
        let (p, q) = distribution_pair(&mut tape.derive(i).derive(0));
        let d = tv_distance(&p, &q);
        let draws = par_map(trials, |j| {
            let t = tape.derive(i).derive(1).derive(j as u64);
            let a = consistent_sample(&p, &mut t.clone()).expect("terminates");
            let b = consistent_sample(&q, &mut t.clone()).expect("terminates");
            (a, b)
        });
        let e = Estimate::from_counts(draws.iter().filter(|(a, b)| a != b).count(), trials);
        let bound = 2.0 * d / (1.0 + d);
        let margin = e.rate - (bound + 3.0 * e.half_width);
        if margin > worst_margin {
            worst_margin = margin;
            worst = Some((e, bound));
        }
        for (dist, side) in [(&p, 0), (&q, 1)] {
            let mut obs = vec![0u64; dist.len()];
            for pair in &draws {
                obs[if side == 0 { pair.0 } else { pair.1 } as usize] += 1;
            }
            min_p = min_p.min(chi_square_gof(&obs, dist.probs()).p_value);
        }
    }
    let (e, bound) = worst.expect("pairs > 0");
    r.metric("worst_disagreement", Metric::le_est(e, bound));
    r.metric("min_marginal_p_value", Metric::ge(min_p, 1e-3));
}

/// Empirical output distribution of `sampler` over `runs` tapes with the
/// bottom symbol as `None`.
fn corrsamp_outputs(sampler: &CorrSampler, runs: usize, tape: &RandomTape) -> Vec<Option<u64>> {
    par_map(runs, |j| sampler.sample(&tape.derive(j as u64)).expect("valid params").value)
}

fn corrsamp_sampler(c: TruthTableCircuit, nu: f64, s: &Settings) -> CorrSampler {
    let params = CorrSampParams::for_width(c.in_bits(), nu, s.corrsamp.unwrap_or_default()).expect("nu in range");
    CorrSampler::new(c, params, InverterOracle::BruteForce).expect("valid params")
}

fn target_with_bottom(c: &TruthTableCircuit) -> FiniteDistribution<Option<u64>> {
    c.induced_distribution().map(|b| Some(b.value()))
}

/// Criterion 3: five random circuits, `trials / 5` runs each.
pub fn corrsamp_accuracy(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let nu = s.nu.unwrap_or(0.1);
    let runs = s.trials.unwrap_or(100_000);
    let circuits = 5;
    let (mut tv_max, mut bot_max) = (0.0f64, 0.0f64);
    for i in 0..circuits {
        let c = TruthTableCircuit::random(6, 4, &mut tape.derive(i).derive(0)).expect("in range");
        let sampler = corrsamp_sampler(c.clone(), nu, s);
        if i == 0 {
            record_corrsamp_constants(r, sampler.params());
        }
        let outs = corrsamp_outputs(&sampler, runs / circuits as usize, &tape.derive(i).derive(1));
        let bots = outs.iter().filter(|o| o.is_none()).count();
        let emp: EmpiricalDistribution<Option<u64>> = outs.into_iter().collect();
        tv_max = tv_max.max(tv_distance(&emp.normalize().expect("runs > 0"), &target_with_bottom(&c)));
        bot_max = bot_max.max(bots as f64 / (runs / circuits as usize) as f64);
    }
    r.metric("tv_to_target", Metric::le(tv_max, 5.0 * nu));
    r.metric("bot_rate", Metric::le(bot_max, 5.0 * nu));
}

/// A copy of `c` with `changes` random entries replaced.
fn perturbed(c: &TruthTableCircuit, changes: usize, tape: &mut RandomTape) -> TruthTableCircuit {
    let mut table = c.table().to_vec();
    for _ in 0..changes {
        let i = tape.draw_below(table.len() as u64) as usize;
        table[i] = tape.draw_uint(c.out_bits());
    }
    TruthTableCircuit::new(c.in_bits(), c.out_bits(), table).expect("same shape")
}

/// Criterion 4: ten pairs, `trials / 10` shared tapes each.
pub fn corrsamp_correlation(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let nu = s.nu.unwrap_or(0.1);
    let tapes = s.trials.unwrap_or(100_000);
    let pairs = 10u64;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst = None;
    let mut tv_seen = 0.0f64;
    for i in 0..pairs {
        let mut t = tape.derive(i).derive(0);
        let c1 = TruthTableCircuit::random(6, 4, &mut t).expect("in range");
        let changes = 1 + (i as usize % 6);
        let c2 = perturbed(&c1, changes, &mut t);
        let d = tv_distance(&c1.induced_distribution(), &c2.induced_distribution());
        tv_seen = tv_seen.max(d);
        let s1 = corrsamp_sampler(c1, nu, s);
        let s2 = corrsamp_sampler(c2, nu, s);
        let per = tapes / pairs as usize;
        let shared = tape.derive(i).derive(1);
        let differ = par_map(per, |j| {
            let t = shared.derive(j as u64);
            s1.sample(&t).expect("valid").value != s2.sample(&t).expect("valid").value
        });
        let e = Estimate::from_counts(differ.iter().filter(|&&x| x).count(), per);
        let bound = 8.0 * (d + nu);
        let margin = e.rate - bound - 3.0 * e.half_width;
        if margin > worst_margin {
            worst_margin = margin;
            worst = Some((e, bound));
        }
    }
    let (e, bound) = worst.expect("pairs > 0");
    r.metric("pair_tv_max", Metric::le(tv_seen, 0.1));
    r.metric("worst_disagreement", Metric::le_est(e, bound));
}

/// Target concept plus 31 variants with growing flip rates, over a domain
/// of 64 points; uniform marginal.
pub fn realizable_instance(tape: &RandomTape) -> (Arc<FiniteClass>, FiniteDistribution<LabeledPoint>) {
    let mut t = tape.clone();
    let target: Vec<bool> = (0..64).map(|_| t.draw_bool()).collect();
    let mut hs = vec![target.clone()];
    for i in 0..31 {
        let rate = 0.3 * i as f64 / 31.0;
        hs.push(target.iter().map(|&b| b ^ (t.draw_f64() < rate)).collect());
    }
    let class = Arc::new(FiniteClass::new(64, hs).expect("valid hypotheses"));
    let pts: Vec<LabeledPoint> = (0..64u32).map(|x| (x, target[x as usize])).collect();
    (class, FiniteDistribution::uniform(pts).expect("non-empty"))
}

/// Criterion 5.
pub fn finite_learner(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let (rho, alpha, beta) = (s.rho.unwrap_or(0.2), s.alpha.unwrap_or(0.2), s.beta.unwrap_or(0.1));
    let trials = s.trials.unwrap_or(200);
    let constants = s.learner.unwrap_or_default();
    let (class, data) = realizable_instance(&tape.derive(0));
    let p = LearnerParams::new(class.len(), rho, alpha, beta, true, constants).expect("valid params");
    r.constant("c_tau", constants.c_tau);
    r.constant("c_m", constants.c_m);
    r.constant("m", p.m as f64);
    r.constant("cells", p.cells() as f64);
    let l = RFiniteLearner::new(class.clone(), p).expect("valid learner");
    let rep = estimate_replicability(|x: &[LabeledPoint], c: &RandomTape| l.run(x, c), &data, p.m, trials, &tape.derive(1))
        .expect("enough trials");
    let good = estimate_rate(trials, &tape.derive(2), |t| {
        let sample = data.draw_n(p.m, &mut t.derive(1));
        class.true_risk(l.run(&sample, &t.derive(0)), &data) <= alpha
    });
    r.metric("replicability", Metric::ge_est(rep, 1.0 - rho));
    r.metric("accurate_rate", Metric::ge(good.rate, 1.0 - beta));
}

/// Criterion 6.
pub fn ordering_identity(r: &mut Report) {
    let subsets: Vec<BTreeSet<usize>> = (1..32u32)
        .map(|mask| (0..5).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect())
        .collect();
    let mut mismatches = 0;
    for a in &subsets {
        for b in &subsets {
            let sym = a.symmetric_difference(b).count() as u64;
            let uni = a.union(b).count() as u64;
            if first_element_disagreement(a, b) != Ratio::new(sym, uni) {
                mismatches += 1;
            }
        }
    }
    r.metric("mismatched_pairs", Metric::eq(f64::from(mismatches), 0.0));
}

/// Toy base for criterion 7: two records from `{0,1,2}` and two coin
/// bits; outputs `(x0 + x1 + coin) mod 3` thresholded by the second bit.
#[derive(Clone, Copy, Debug)]
pub struct ToyBase;

impl FiniteCoinAlgorithm<u8> for ToyBase {
    type Output = u8;

    fn sample_size(&self) -> usize {
        2
    }

    fn coin_count(&self) -> u64 {
        4
    }

    fn run_with_coin(&self, sample: &[u8], coin: u64) -> u8 {
        let sum = u64::from(sample[0]) + u64::from(sample[1]);
        if coin & 2 == 0 {
            (sum.min(2)) as u8
        } else {
            ((sum + (coin & 1)) % 3) as u8
        }
    }
}

fn all_samples(len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..3u8).map(move |x| {
                    let mut s = s.clone();
                    s.push(x);
                    s
                })
            })
            .collect();
    }
    out
}

/// Criterion 7: exhaustive neighbor checks at pooled sizes 2 through 8.
pub fn rep_to_dp_exact(r: &mut Report, s: &Settings) {
    let dp = DPParams::new(s.eps.unwrap_or(1.0), s.delta.unwrap_or(0.05)).expect("valid privacy params");
    let space: Vec<Option<u8>> = vec![None, Some(0), Some(1), Some(2)];
    let mut violations = 0u64;
    let mut checked = 0u64;
    for (k1, k2) in [(1, 1), (1, 2), (2, 2), (1, 3), (2, 4)] {
        let alg = RepToDp::new(FiniteCoins(ToyBase), RepToDpParams::explicit(dp, 0.1, k1, k2).expect("k1 | k2"));
        let samples = all_samples(alg.sample_size());
        let dists: Vec<FiniteDistribution<Option<u8>>> = par_map(samples.len(), |i| {
            alg.exact_distribution(&samples[i]).aligned(&space).expect("outputs in Y")
        });
        // sample index is base 3 with the first record most significant
        let len = alg.sample_size();
        let bad = par_map(samples.len(), |i| {
            let mut bad = 0u64;
            let mut n = 0u64;
            for pos in 0..len {
                let w = 3usize.pow((len - 1 - pos) as u32);
                let digit = (i / w) % 3;
                for d in digit + 1..3 {
                    let j = i + (d - digit) * w;
                    n += 1;
                    if !indistinguishable(&dists[i], &dists[j], dp.eps, dp.delta) {
                        bad += 1;
                    }
                }
            }
            (bad, n)
        });
        for (b, n) in bad {
            violations += b;
            checked += n;
        }
    }
    r.constant("neighbor_pairs", checked as f64);
    r.metric("violating_pairs", Metric::eq(violations as f64, 0.0));
}

/// Criterion 8.
pub fn rep_to_pg_generalization(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let (eps, delta) = (s.eps.unwrap_or(1.0), s.delta.unwrap_or(0.1));
    let pairs = s.trials.unwrap_or(200);
    let runs = 500;
    let n = 8;
    let params = RepToPgParams::explicit(eps, delta, 0.1, 4, 64).expect("valid params");
    r.constant("k", params.k as f64);
    r.constant("t", params.t as f64);
    r.constant("sensitivity", params.sensitivity());
    r.constant("runs_per_dataset", runs as f64);
    let base = FnAlgorithm::new(n, |x: &[bool], c: &RandomTape| {
        let u = 0.3 + 0.4 * c.clone().draw_f64();
        x.iter().filter(|&&b| b).count() as f64 / x.len() as f64 >= u
    });
    let alg = RepToPg::new(base, params);
    let data = FiniteDistribution::new(vec![false, true], vec![0.5, 0.5]).expect("normalized");
    let slack = 2.0 * delta + 0.05;
    let violated = par_map(pairs, |i| {
        let t = tape.derive(i as u64);
        let dist = |side: u64| {
            let sample = data.draw_n(alg.sample_size(), &mut t.derive(side));
            let e: EmpiricalDistribution<bool> =
                (0..runs).map(|j| alg.run(&sample, &t.derive(2 + side).derive(j as u64))).collect();
            e.normalize().expect("runs > 0").aligned(&[false, true]).expect("binary")
        };
        !indistinguishable(&dist(0), &dist(1), eps, slack)
    });
    let rate = violated.iter().filter(|&&v| v).count() as f64 / pairs as f64;
    r.metric("violation_rate", Metric::le(rate, slack));
}

/// Criterion 9.
pub fn dp_to_rep(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let rho = s.rho.unwrap_or(0.1);
    let runs = s.trials.unwrap_or(100_000);
    let m = 20;
    let mut t = tape.derive(0);
    let target: Vec<bool> = (0..16).map(|_| t.draw_bool()).collect();
    let mut hs = vec![target.clone()];
    while hs.len() < 8 {
        let h: Vec<bool> = (0..16).map(|_| t.draw_bool()).collect();
        if !hs.contains(&h) {
            hs.push(h);
        }
    }
    let class = Arc::new(FiniteClass::new(16, hs).expect("valid"));
    let data = FiniteDistribution::uniform((0..16u32).map(|x| (x, target[x as usize])).collect()).expect("non-empty");
    let eps = DpExpMechLearner::replicable_eps(rho, m);
    r.constant("eps", eps);
    r.constant("m", m as f64);
    let w = DpToRep::new(DpExpMechLearner::new(class, eps, m).expect("valid"));
    let sample = data.draw_n(m, &mut tape.derive(1));
    let exact = w.exact_output_distribution(&sample).expect("exact");
    let outs = par_map(runs, |i| w.run(&sample, &tape.derive(2).derive(i as u64)));
    let emp: EmpiricalDistribution<usize> = outs.into_iter().collect();
    let tv = tv_distance(&emp.normalize().expect("runs > 0"), &exact);
    let rep = estimate_replicability(|x: &[LabeledPoint], c: &RandomTape| w.run(x, c), &data, m, 2000, &tape.derive(3))
        .expect("enough trials");
    r.metric("marginal_tv", Metric::le(tv, 0.01));
    r.metric("replicability", Metric::ge_est(rep, 1.0 - 8.0 * rho));
}

fn keys77() -> GmKeys {
    GmKeys::from_primes(7, 11, &RandomTape::from_u128(77)).expect("7 and 11 are prime")
}

/// Criterion 10.
pub fn dp_rand_enc(r: &mut Report, _s: &Settings) {
    let (m, k) = (6usize, 2usize);
    let keys = keys77();
    let pk = &keys.public;
    let ratio = max_selection_ratio(k, m);
    r.metric(
        "selection_ratio_max",
        Metric::le(*ratio.numer() as f64 / *ratio.denom() as f64, (k as f64 + 1.0) / k as f64),
    );

    // per-event check on the output distributions, one representative per
    // ciphertext class: residue, x times a residue, invalid
    let alg = DpRandEnc::with_k(pk.clone(), k, m);
    let reps = [num_bigint::BigUint::from(1u32), pk.x.clone(), num_bigint::BigUint::from(7u32)];
    let mut dists = BTreeMap::new();
    for z in 0..=m {
        for o in 0..=m - z {
            let mut sample = vec![reps[0].clone(); z];
            sample.extend(std::iter::repeat_n(reps[1].clone(), o));
            sample.extend(std::iter::repeat_n(reps[2].clone(), m - z - o));
            dists.insert((z, o), alg.exact_output_distribution(&sample).expect("N = 77 is enumerable"));
        }
    }
    let space = pk.units().expect("enumerable");
    let mut worst = 1.0f64;
    for (&(z, o), d) in &dists {
        let d = d.aligned(&space).expect("units");
        let c = [z, o, m - z - o];
        for from in 0..3 {
            for to in 0..3 {
                if from == to || c[from] == 0 {
                    continue;
                }
                let mut e = c;
                e[from] -= 1;
                e[to] += 1;
                let d2 = dists[&(e[0], e[1])].aligned(&space).expect("units");
                for (p, q) in d.probs().iter().zip(d2.probs()) {
                    if *q > 0.0 {
                        worst = worst.max(p / q);
                    } else if *p > 0.0 {
                        worst = f64::INFINITY;
                    }
                }
            }
        }
    }
    r.metric("output_ratio_max", Metric::le(worst, 1.5 + EXACT_TOL));

    let expect = k as f64 / (m + 2 * k) as f64;
    for b in [false, true] {
        let clean = vec![if b { pk.x.clone() } else { reps[0].clone() }; m];
        let d = alg.exact_output_distribution(&clean).expect("enumerable");
        let fail: f64 = d.iter().filter(|(c, _)| keys.dec(c) != Some(b)).map(|(_, p)| p).sum();
        let sel = alg.plaintext_probs(&keys.secret, &clean)[usize::from(!b)];
        r.metric(&format!("failure_prob_bit{}", u8::from(b)), Metric::eq(fail, expect));
        r.metric(
            &format!("selection_failure_bit{}", u8::from(b)),
            Metric::eq(*sel.numer() as f64 / *sel.denom() as f64, expect),
        );
    }
}

/// Criterion 11: all pairs within each plaintext class of the well-formed
/// ciphertexts modulo 77.
pub fn rerandomization(r: &mut Report) {
    let keys = keys77();
    let pk = &keys.public;
    let units = pk.units().expect("enumerable");
    let mut worst = 0.0f64;
    let mut preserved = true;
    for b in [false, true] {
        let class: Vec<_> = units.iter().filter(|c| pk.well_formed(c) && keys.dec(c) == Some(b)).collect();
        let dists: Vec<_> = class.iter().map(|c| pk.rerandomize_distribution(c).expect("enumerable")).collect();
        for d in &dists {
            preserved &= d.iter().all(|(c, _)| keys.dec(c) == Some(b));
            for e in &dists {
                worst = worst.max(tv_distance(d, e));
            }
        }
    }
    r.metric("max_tv_same_plaintext", Metric::eq(worst, 0.0));
    r.metric("plaintext_preserved", Metric::eq(f64::from(u8::from(preserved)), 1.0));
}

/// Criterion 12.
pub fn adversary_advantage(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let bits = s.prime_bits.unwrap_or(16);
    let trials = s.trials.unwrap_or(1000);
    let keys = keygen(bits, &tape.derive(0)).expect("prime search");
    r.constant("prime_bits", f64::from(bits));
    let solver = CheatSolver { keys: keys.clone() };
    let adv = measure_advantage(&keys.public, &solver, 8, trials, &tape.derive(1));
    r.metric("advantage", Metric::new(adv.value(), Cmp::Ge, 0.99, Some(adv.half_width())));
}

/// Subsets over 32 elements: element 0 with probability 0.85, element 1
/// with 0.45, every other element with 0.1, truncated to 8 elements.
#[derive(Clone, Debug)]
pub struct HeavySampler;

impl SubsetSampler for HeavySampler {
    fn universe_size(&self) -> usize {
        32
    }

    fn max_size(&self) -> usize {
        8
    }

    fn draw(&self, tape: &mut RandomTape) -> Vec<usize> {
        let mut out = Vec::with_capacity(8);
        for e in 0..32 {
            let p = match e {
                0 => 0.85,
                1 => 0.45,
                _ => 0.1,
            };
            if tape.draw_f64() < p && out.len() < 8 {
                out.push(e);
            }
        }
        out
    }
}

/// Criterion 13.
pub fn list_heavy_hitters(r: &mut Report, s: &Settings, tape: &RandomTape) {
    let (rho, beta) = (s.rho.unwrap_or(0.2), s.beta.unwrap_or(0.1));
    let eta = 0.8;
    let trials = s.trials.unwrap_or(1000);
    let constants = s.list_hh.unwrap_or_default();
    let sampler = HeavySampler;
    let p = ListHHParams::new(eta, rho, beta, sampler.max_size(), constants).expect("valid params");
    r.constant("t1", p.t1 as f64);
    r.constant("t2", p.t2 as f64);
    r.constant("levels", p.levels as f64);
    let hh = ListHeavyHitter::new(p, sampler.universe_size());
    // exact marginals of the sampler by dynamic programming over the cap
    let freq = heavy_sampler_marginals();
    let draw = |samples: &mut RandomTape| -> Vec<Vec<usize>> {
        (0..hh.sample_size()).map(|_| sampler.draw(samples)).collect()
    };
    let good = estimate_rate(trials, &tape.derive(0), |t| {
        let sample = draw(&mut t.derive(1));
        hh.run(&sample, &t.derive(0)).is_some_and(|e| freq[e] >= eta / 2.0)
    });
    let rep = estimate_paired(trials, &tape.derive(1), |coins, mut data| hh.run(&draw(&mut data), coins))
        .expect("enough trials");
    r.metric("heavy_rate", Metric::ge(good.rate, 1.0 - beta));
    r.metric("replicability", Metric::ge_est(rep, 1.0 - rho));
}

/// Inclusion probability of each element under [`HeavySampler`].
pub fn heavy_sampler_marginals() -> Vec<f64> {
    // dist[c] = probability that c elements were kept so far
    let mut dist = vec![0.0f64; 9];
    dist[0] = 1.0;
    let mut marg = Vec::with_capacity(32);
    for e in 0..32 {
        let p = match e {
            0 => 0.85,
            1 => 0.45,
            _ => 0.1,
        };
        marg.push(p * dist[..8].iter().sum::<f64>());
        let mut next = vec![0.0; 9];
        for c in 0..9 {
            if c < 8 {
                next[c] += dist[c] * (1.0 - p);
                next[c + 1] += dist[c] * p;
            } else {
                next[c] += dist[c];
            }
        }
        dist = next;
    }
    marg
}

/// Every criterion, metrics prefixed `cNN.`.
pub fn verify_all(s: &Settings, tape: &RandomTape, seed: &str) -> Report {
    let mut all = Report::new("verify-all", seed);
    for id in 1..=CRITERIA.len() {
        all.absorb(&format!("c{id:02}"), criterion(id, s, &tape.derive(id as u64), seed));
    }
    all
}

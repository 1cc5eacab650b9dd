//! Replicable learning over finite hypothesis classes.
//!
//! Learners return hypothesis indices into their [`FiniteClass`]. Every
//! learner splits its coins by purpose: `derive(0)` for the OPT estimate,
//! `derive(1)` for the threshold, `derive(2)` for the ordering of the class.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algo::{keyed_hash, SampleSource, StatAlgorithm, SubsetSampler};
use crate::dist::FiniteDistribution;
use crate::tape::RandomTape;

/// `(x, y)` with `x` a domain index.
pub type LabeledPoint = (u32, bool);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("class has no hypotheses")]
    EmptyClass,
    #[error("domain size must be positive")]
    EmptyDomain,
    #[error("hypothesis {index} has length {got}, expected {expected}")]
    HypothesisLength { index: usize, got: usize, expected: usize },
    #[error("point {x} outside domain of size {domain}")]
    PointOutOfDomain { x: u32, domain: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("{name} = {value} out of range: {why}")]
    Param {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
    #[error("invalid class description: {0}")]
    Parse(String),
}

fn param(name: &'static str, value: f64, why: &'static str) -> LearnError {
    LearnError::Param { name, value, why }
}

fn check_unit(name: &'static str, v: f64) -> Result<(), LearnError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(param(name, v, "must lie in (0, 1)"))
    }
}

/// Hypotheses as label vectors over the domain `0..domain_size`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteClass {
    domain_size: usize,
    hypotheses: Vec<Vec<bool>>,
}

/// JSON form: labels written as strings of `0`/`1`, one character per point.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassSpec {
    pub domain_size: usize,
    pub hypotheses: Vec<String>,
}

impl FiniteClass {
    /// Duplicate label vectors collapse to their first occurrence.
    pub fn new(domain_size: usize, hypotheses: Vec<Vec<bool>>) -> Result<Self, LearnError> {
        if domain_size == 0 {
            return Err(LearnError::EmptyDomain);
        }
        if hypotheses.is_empty() {
            return Err(LearnError::EmptyClass);
        }
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for (index, h) in hypotheses.into_iter().enumerate() {
            if h.len() != domain_size {
                return Err(LearnError::HypothesisLength {
                    index,
                    got: h.len(),
                    expected: domain_size,
                });
            }
            if seen.insert(h.clone()) {
                kept.push(h);
            }
        }
        Ok(FiniteClass {
            domain_size,
            hypotheses: kept,
        })
    }

    pub fn from_spec(spec: &ClassSpec) -> Result<Self, LearnError> {
        let hs = spec
            .hypotheses
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(LearnError::Parse(format!("bad label character {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        FiniteClass::new(spec.domain_size, hs)
    }

    pub fn to_spec(&self) -> ClassSpec {
        ClassSpec {
            domain_size: self.domain_size,
            hypotheses: self
                .hypotheses
                .iter()
                .map(|h| h.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
        }
    }

    /// `count` distinct random hypotheses, drawn until enough are distinct.
    pub fn random(domain_size: usize, count: usize, tape: &mut RandomTape) -> Result<Self, LearnError> {
        if count == 0 {
            return Err(LearnError::EmptyClass);
        }
        if domain_size < 64 && count as u64 > 1u64 << domain_size {
            return Err(param("count", count as f64, "exceeds the number of labelings"));
        }
        let mut seen = BTreeSet::new();
        let mut hs = Vec::with_capacity(count);
        while hs.len() < count {
            let h: Vec<bool> = (0..domain_size).map(|_| tape.draw_bool()).collect();
            if seen.insert(h.clone()) {
                hs.push(h);
            }
        }
        FiniteClass::new(domain_size, hs)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn hypothesis(&self, i: usize) -> &[bool] {
        &self.hypotheses[i]
    }

    pub fn label(&self, h: usize, x: u32) -> bool {
        self.hypotheses[h][x as usize]
    }

    /// Misclassification counts of every hypothesis on a histogram.
    pub fn mistakes(&self, counts: &LabelCounts) -> Vec<u64> {
        self.hypotheses
            .iter()
            .map(|h| {
                h.iter()
                    .zip(&counts.counts)
                    .map(|(&l, c)| c[usize::from(!l)])
                    .sum()
            })
            .collect()
    }

    /// Exact risk under a distribution over labeled points.
    pub fn true_risk(&self, h: usize, data: &FiniteDistribution<LabeledPoint>) -> f64 {
        data.iter()
            .filter(|((x, y), _)| self.label(h, *x) != *y)
            .map(|(_, p)| p)
            .sum()
    }

    /// Minimum true risk over the class.
    pub fn opt(&self, data: &FiniteDistribution<LabeledPoint>) -> f64 {
        (0..self.len())
            .map(|h| self.true_risk(h, data))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_points(&self, points: &[LabeledPoint]) -> Result<(), LearnError> {
        match points.iter().find(|(x, _)| *x as usize >= self.domain_size) {
            Some(&(x, _)) => Err(LearnError::PointOutOfDomain {
                x,
                domain: self.domain_size,
            }),
            None => Ok(()),
        }
    }
}

/// Per-point label histogram of a labeled sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCounts {
    n: u64,
    counts: Vec<[u64; 2]>,
}

impl LabelCounts {
    /// Panics on a point outside the domain.
    pub fn from_points(domain_size: usize, points: &[LabeledPoint]) -> Self {
        let mut counts = vec![[0u64; 2]; domain_size];
        for &(x, y) in points {
            assert!((x as usize) < domain_size, "point {x} outside domain of size {domain_size}");
            counts[x as usize][usize::from(y)] += 1;
        }
        LabelCounts {
            n: points.len() as u64,
            counts,
        }
    }

    /// The points of `hist` labeled by hypothesis `h`.
    pub fn labeled_by(class: &FiniteClass, h: usize, hist: &[u64]) -> Self {
        let counts = hist
            .iter()
            .zip(class.hypothesis(h))
            .map(|(&c, &l)| if l { [0, c] } else { [c, 0] })
            .collect();
        LabelCounts {
            n: hist.iter().sum(),
            counts,
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Exact fraction of `sample` that `h` misclassifies.
pub fn empirical_risk(class: &FiniteClass, h: usize, sample: &[LabeledPoint]) -> Result<Ratio<u64>, LearnError> {
    if sample.is_empty() {
        return Err(LearnError::EmptySample);
    }
    class.check_points(sample)?;
    let wrong = sample.iter().filter(|&&(x, y)| class.label(h, x) != y).count();
    Ok(Ratio::new(wrong as u64, sample.len() as u64))
}

/// Randomized rounding of `opt_s + alpha/4` down to the grid
/// `a + (alpha/8) Z`, clamped to `[0, 1]`.
pub fn round_opt(opt_s: f64, alpha: f64, a: f64) -> f64 {
    let w = alpha / 8.0;
    let j = ((opt_s + alpha / 4.0 - a) / w).floor();
    (j * w + a).clamp(0.0, 1.0)
}

/// Replicable estimate of OPT from an empirical optimum. The offset is
/// uniform in `[0, alpha/16)`.
pub fn estimate_opt_value(opt_s: f64, alpha: f64, tape: &RandomTape) -> f64 {
    let a = tape.clone().draw_f64() * alpha / 16.0;
    round_opt(opt_s, alpha, a)
}

pub fn estimate_opt(
    class: &FiniteClass,
    sample: &[LabeledPoint],
    alpha: f64,
    tape: &RandomTape,
) -> Result<f64, LearnError> {
    if sample.is_empty() {
        return Err(LearnError::EmptySample);
    }
    class.check_points(sample)?;
    check_unit("alpha", alpha)?;
    let counts = LabelCounts::from_points(class.domain_size(), sample);
    let best = class.mistakes(&counts).into_iter().min().unwrap_or(0);
    Ok(estimate_opt_value(best as f64 / counts.n as f64, alpha, tape))
}

/// Constants behind the learner's asymptotic parameter choices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConstants {
    /// `tau <= c_tau * alpha * rho^2 / ln|H|`.
    pub c_tau: f64,
    /// Multiplier on the sample-size bound.
    pub c_m: f64,
}

impl Default for LearnerConstants {
    fn default() -> Self {
        LearnerConstants {
            c_tau: 1.0,
            c_m: 1.0 / 16.0,
        }
    }
}

fn ln_class(class_size: usize) -> f64 {
    (class_size.max(2) as f64).ln()
}

/// The learner's sample-size bound, before rounding up.
pub fn learner_sample_bound(class_size: usize, rho: f64, alpha: f64, beta: f64, realizable: bool, c_m: f64) -> f64 {
    let lh = ln_class(class_size);
    let head = lh * lh * (1.0 / rho).ln();
    if realizable {
        c_m * (head + rho.powi(4) * (1.0 / beta).ln()) / (alpha * rho.powi(4))
    } else {
        c_m * (head + rho * rho * (1.0 / beta).ln()) / (alpha * alpha * rho.powi(4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Threshold spacing; `alpha/4` is an exact multiple of it.
    pub tau: f64,
    pub m: usize,
    pub realizable: bool,
    pub constants: LearnerConstants,
}

impl LearnerParams {
    pub fn new(
        class_size: usize,
        rho: f64,
        alpha: f64,
        beta: f64,
        realizable: bool,
        constants: LearnerConstants,
    ) -> Result<Self, LearnError> {
        check_unit("rho", rho)?;
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        if !(constants.c_tau > 0.0) || !(constants.c_m > 0.0) {
            return Err(param("c_tau/c_m", constants.c_tau.min(constants.c_m), "constants must be positive"));
        }
        let cells = (ln_class(class_size) / (4.0 * constants.c_tau * rho * rho)).ceil().max(2.0);
        let p = LearnerParams {
            rho,
            alpha,
            beta,
            tau: alpha / (4.0 * cells),
            m: learner_sample_bound(class_size, rho, alpha, beta, realizable, constants.c_m).ceil() as usize,
            realizable,
            constants,
        };
        p.validate(class_size)?;
        Ok(p)
    }

    /// Number of `tau` cells in `alpha/4`.
    pub fn cells(&self) -> usize {
        (self.alpha / (4.0 * self.tau)).round() as usize
    }

    /// The grid `v_init + 3tau/2, v_init + 5tau/2, ..., v_init + alpha/4 - tau/2`.
    pub fn thresholds(&self, v_init: f64) -> Vec<f64> {
        (0..self.cells() - 1)
            .map(|i| v_init + (2 * i + 3) as f64 * self.tau / 2.0)
            .collect()
    }

    pub fn validate(&self, class_size: usize) -> Result<(), LearnError> {
        check_unit("rho", self.rho)?;
        check_unit("alpha", self.alpha)?;
        check_unit("beta", self.beta)?;
        if !(self.tau > 0.0) {
            return Err(param("tau", self.tau, "must be positive"));
        }
        let ratio = self.alpha / (4.0 * self.tau);
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 2.0 {
            return Err(param("tau", self.tau, "alpha/4 must be an integer multiple (at least 2) of tau"));
        }
        let cap = self.constants.c_tau * self.alpha * self.rho * self.rho / ln_class(class_size);
        if self.tau > cap * (1.0 + 1e-12) {
            return Err(param("tau", self.tau, "exceeds c_tau * alpha * rho^2 / ln|H|"));
        }
        let need = learner_sample_bound(
            class_size,
            self.rho,
            self.alpha,
            self.beta,
            self.realizable,
            self.constants.c_m,
        );
        if (self.m as f64) < need.ceil() {
            return Err(param("m", self.m as f64, "below the sample-size bound"));
        }
        Ok(())
    }
}

/// The random-threshold learner.
#[derive(Clone, Debug)]
pub struct RFiniteLearner {
    class: Arc<FiniteClass>,
    params: LearnerParams,
}

impl RFiniteLearner {
    pub fn new(class: Arc<FiniteClass>, params: LearnerParams) -> Result<Self, LearnError> {
        params.validate(class.len())?;
        Ok(RFiniteLearner { class, params })
    }

    pub fn class(&self) -> &FiniteClass {
        &self.class
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    fn threshold(&self, mistakes: &[u64], n: u64, coins: &RandomTape) -> f64 {
        let v_init = if self.params.realizable {
            0.0
        } else {
            let best = mistakes.iter().copied().min().unwrap_or(0);
            let opt_s = if n == 0 { 0.0 } else { best as f64 / n as f64 };
            estimate_opt_value(opt_s, self.params.alpha, &coins.derive(0))
        };
        let grid = self.params.thresholds(v_init);
        grid[coins.derive(1).draw_below(grid.len() as u64) as usize]
    }

    /// The threshold drawn by `coins` and the hypotheses at or below it.
    pub fn threshold_set(&self, counts: &LabelCounts, coins: &RandomTape) -> (f64, Vec<usize>) {
        let mistakes = self.class.mistakes(counts);
        let v = self.threshold(&mistakes, counts.n, coins);
        let below = (0..mistakes.len())
            .filter(|&h| mistakes[h] as f64 <= v * counts.n as f64)
            .collect();
        (v, below)
    }

    pub fn learn_counts(&self, counts: &LabelCounts, coins: &RandomTape) -> usize {
        let mistakes = self.class.mistakes(counts);
        let bar = self.threshold(&mistakes, counts.n, coins) * counts.n as f64;
        let order = coins.derive(2).permutation(self.class.len());
        if let Some(&h) = order.iter().find(|&&h| mistakes[h] as f64 <= bar) {
            return h;
        }
        // only reachable when the OPT estimate failed
        let best = mistakes.iter().copied().min().unwrap_or(0);
        *order.iter().find(|&&h| mistakes[h] == best).expect("nonempty class")
    }
}

impl StatAlgorithm<LabeledPoint> for RFiniteLearner {
    type Output = usize;

    fn sample_size(&self) -> usize {
        self.params.m
    }

    fn run(&self, sample: &[LabeledPoint], coins: &RandomTape) -> usize {
        self.learn_counts(&LabelCounts::from_points(self.class.domain_size(), sample), coins)
    }

    fn output_space(&self) -> Option<Vec<usize>> {
        Some((0..self.class.len()).collect())
    }
}

/// Draws `params.m` points from `data` with `samples` and learns with `coins`.
pub fn r_finite_learn(
    class: Arc<FiniteClass>,
    data: &impl SampleSource<LabeledPoint>,
    params: LearnerParams,
    coins: &RandomTape,
    samples: &mut RandomTape,
) -> Result<usize, LearnError> {
    let learner = RFiniteLearner::new(class, params)?;
    let s = data.draw_n(params.m, samples);
    learner.class().check_points(&s)?;
    Ok(learner.run(&s, coins))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifyConstants {
    /// `k = ceil(c_k ln(1/rho))` coin strings.
    pub c_k: f64,
    /// `t = ceil(c_t ln^3(1/rho) / rho^2)` base samples.
    pub c_t: f64,
    /// Range of the random heaviness threshold.
    pub low: f64,
    pub high: f64,
}

impl Default for AmplifyConstants {
    fn default() -> Self {
        AmplifyConstants {
            c_k: 1.0,
            c_t: 1.0 / 16.0,
            low: 0.5,
            high: 0.8,
        }
    }
}

/// Replicability amplification of a constant-replicability base.
///
/// The sample is `t + 1` consecutive base-sized chunks. Each of `k` coin
/// strings runs the base on the first `t` chunks; outputs whose frequency
/// under some string clears a random threshold form a list, and the list
/// member with the least keyed hash is returned. An empty list falls back
/// to one base run on the last chunk with fresh coins.
#[derive(Clone, Debug)]
pub struct Amplified<A> {
    base: A,
    k: usize,
    t: usize,
    constants: AmplifyConstants,
}

pub fn amplify_replicability<X, A: StatAlgorithm<X>>(
    base: A,
    rho_target: f64,
    constants: AmplifyConstants,
) -> Result<Amplified<A>, LearnError> {
    check_unit("rho_target", rho_target)?;
    if !(0.0 < constants.low && constants.low <= constants.high && constants.high < 1.0) {
        return Err(param("low", constants.low, "threshold range must satisfy 0 < low <= high < 1"));
    }
    let l = (1.0 / rho_target).ln();
    Ok(Amplified {
        base,
        k: ((constants.c_k * l).ceil() as usize).max(1),
        t: ((constants.c_t * l.powi(3) / (rho_target * rho_target)).ceil() as usize).max(1),
        constants,
    })
}

impl<A> Amplified<A> {
    pub fn strings(&self) -> usize {
        self.k
    }

    pub fn chunks(&self) -> usize {
        self.t
    }

    pub fn base(&self) -> &A {
        &self.base
    }

    /// The list of frequent outputs; empty means the fallback runs.
    pub fn heavy_list<X>(&self, sample: &[X], coins: &RandomTape) -> BTreeSet<A::Output>
    where
        A: StatAlgorithm<X>,
    {
        let n = self.base.sample_size();
        let c = &self.constants;
        let v = c.low + (c.high - c.low) * coins.derive(1).draw_f64();
        let mut list = BTreeSet::new();
        for i in 0..self.k {
            let r = coins.derive(0).derive(i as u64);
            let mut freq: BTreeMap<A::Output, usize> = BTreeMap::new();
            for j in 0..self.t {
                *freq.entry(self.base.run(&sample[j * n..(j + 1) * n], &r)).or_default() += 1;
            }
            list.extend(freq.into_iter().filter(|&(_, f)| f as f64 >= v * self.t as f64).map(|(y, _)| y));
        }
        list
    }
}

impl<X: Sync, A: StatAlgorithm<X>> StatAlgorithm<X> for Amplified<A> {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        (self.t + 1) * self.base.sample_size()
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> A::Output {
        let n = self.base.sample_size();
        assert!(sample.len() >= self.sample_size(), "sample too small for amplification");
        let list = self.heavy_list(sample, coins);
        let key = coins.derive(2).draw_uint(64);
        match list.into_iter().min_by_key(|y| keyed_hash(key, y)) {
            Some(y) => y,
            None => self.base.run(&sample[self.t * n..(self.t + 1) * n], &coins.derive(3)),
        }
    }

    fn output_space(&self) -> Option<Vec<A::Output>> {
        self.base.output_space()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListHHConstants {
    pub c_t1: f64,
    pub c_t2: f64,
    /// `tau <= c_tau * rho * eta / ln|D|`.
    pub c_tau: f64,
}

impl Default for ListHHConstants {
    fn default() -> Self {
        ListHHConstants {
            c_t1: 1.0,
            c_t2: 1.0 / 16.0,
            c_tau: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListHHParams {
    pub eta: f64,
    pub rho: f64,
    pub beta: f64,
    /// Largest subset the sampler can emit.
    pub max_size: usize,
    pub t1: usize,
    pub t2: usize,
    /// Number of thresholds; `tau = eta / (8 levels)`.
    pub levels: usize,
    pub tau: f64,
    pub constants: ListHHConstants,
}

impl ListHHParams {
    pub fn new(eta: f64, rho: f64, beta: f64, max_size: usize, constants: ListHHConstants) -> Result<Self, LearnError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(param("eta", eta, "must lie in (0, 1]"));
        }
        check_unit("rho", rho)?;
        check_unit("beta", beta)?;
        if max_size == 0 {
            return Err(param("max_size", 0.0, "must be positive"));
        }
        let d = max_size.max(2) as f64;
        let lrb = (1.0 / (rho * beta)).ln();
        let t1 = constants.c_t1 * (d / (rho * beta)).ln() / eta;
        let inner = (d * lrb / eta).ln();
        let t2 = constants.c_t2 * (inner * inner * (1.0 / rho).ln() + (1.0 / beta).ln()) / (eta * eta * rho.powi(4));
        let levels = (d.ln() / (8.0 * constants.c_tau * rho)).ceil().max(1.0) as usize;
        Ok(ListHHParams {
            eta,
            rho,
            beta,
            max_size,
            t1: (t1.ceil() as usize).max(1),
            t2: (t2.ceil() as usize).max(1),
            levels,
            tau: eta / (8.0 * levels as f64),
            constants,
        })
    }

    /// `eta/4 + 2tau, eta/4 + 6tau, ..., 3eta/4 - 2tau`.
    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|i| self.eta / 4.0 + 2.0 * self.tau + 4.0 * self.tau * i as f64)
            .collect()
    }
}

/// List heavy-hitters as an algorithm over a sample of subsets: the first
/// `t1` subsets give the candidates, the next `t2` the frequency estimates.
#[derive(Clone, Debug)]
pub struct ListHeavyHitter {
    params: ListHHParams,
    universe_size: usize,
}

impl ListHeavyHitter {
    pub fn new(params: ListHHParams, universe_size: usize) -> Self {
        ListHeavyHitter { params, universe_size }
    }

    pub fn params(&self) -> &ListHHParams {
        &self.params
    }
}

impl StatAlgorithm<Vec<usize>> for ListHeavyHitter {
    type Output = Option<usize>;

    fn sample_size(&self) -> usize {
        self.params.t1 + self.params.t2
    }

    fn run(&self, sample: &[Vec<usize>], coins: &RandomTape) -> Option<usize> {
        let (t1, t2) = (self.params.t1, self.params.t2);
        let mut candidate = vec![false; self.universe_size];
        for e in sample[..t1].iter().flatten() {
            candidate[*e] = true;
        }
        let mut hits = vec![0usize; self.universe_size];
        for e in sample[t1..t1 + t2].iter().flatten() {
            hits[*e] += 1;
        }
        let grid = self.params.thresholds();
        let v = grid[coins.derive(0).draw_below(grid.len() as u64) as usize];
        let order = coins.derive(1).permutation(self.universe_size);
        order
            .into_iter()
            .find(|&e| candidate[e] && hits[e] as f64 >= v * t2 as f64)
    }

    fn output_space(&self) -> Option<Vec<Option<usize>>> {
        Some(std::iter::once(None).chain((0..self.universe_size).map(Some)).collect())
    }
}

/// Draws `t1 + t2` subsets from `sampler` with `samples` and runs
/// [`ListHeavyHitter`] with `coins`. `None` means no candidate cleared
/// the threshold.
pub fn list_heavy_hitter(
    sampler: &impl SubsetSampler,
    params: ListHHParams,
    coins: &RandomTape,
    samples: &mut RandomTape,
) -> Option<usize> {
    let hh = ListHeavyHitter::new(params, sampler.universe_size());
    let subsets: Vec<Vec<usize>> = (0..hh.sample_size()).map(|_| sampler.draw(samples)).collect();
    hh.run(&subsets, coins)
}

/// Runs `learner` under each coin string on every distinct labeling of
/// `unlabeled` by a class member, then keeps the outputs whose risk on
/// `labeled` is within `alpha/2` of the best output.
pub fn list_distribution_generator(
    learner: &RFiniteLearner,
    strings: &[RandomTape],
    unlabeled: &[u32],
    labeled: &[LabeledPoint],
    alpha: f64,
) -> Vec<usize> {
    let class = learner.class();
    let mut hist = vec![0u64; class.domain_size()];
    for &x in unlabeled {
        hist[x as usize] += 1;
    }
    let support: Vec<usize> = (0..hist.len()).filter(|&x| hist[x] > 0).collect();
    let mut labelings = BTreeSet::new();
    let mut outputs = BTreeSet::new();
    for h in 0..class.len() {
        let pattern: Vec<bool> = support.iter().map(|&x| class.hypothesis(h)[x]).collect();
        if !labelings.insert(pattern) {
            continue;
        }
        let counts = LabelCounts::labeled_by(class, h, &hist);
        for r in strings {
            outputs.insert(learner.learn_counts(&counts, r));
        }
    }
    let lc = LabelCounts::from_points(class.domain_size(), labeled);
    let mistakes = class.mistakes(&lc);
    let best = outputs.iter().map(|&h| mistakes[h]).min().unwrap_or(0);
    let slack = alpha / 2.0 * labeled.len() as f64;
    outputs
        .into_iter()
        .filter(|&h| mistakes[h] as f64 <= best as f64 + slack)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgnosticConstants {
    /// `ceil(c_strings ln(1/beta))` coin strings for the generator.
    pub c_strings: f64,
    /// Pruning sample `ceil(c_labeled (ln|H| + ln(1/beta)) / alpha^2)`.
    pub c_labeled: f64,
    pub learner: LearnerConstants,
    pub hh: ListHHConstants,
}

impl Default for AgnosticConstants {
    fn default() -> Self {
        AgnosticConstants {
            c_strings: 1.0,
            c_labeled: 1.0,
            learner: LearnerConstants::default(),
            hh: ListHHConstants::default(),
        }
    }
}

/// The lists produced by [`list_distribution_generator`] on fresh data,
/// viewed as a distribution over subsets of hypothesis indices.
pub struct AgnosticListSampler<'a, D> {
    learner: RFiniteLearner,
    strings: Vec<RandomTape>,
    data: &'a D,
    labeled: usize,
    alpha: f64,
}

impl<'a, D: SampleSource<LabeledPoint>> AgnosticListSampler<'a, D> {
    pub fn learner(&self) -> &RFiniteLearner {
        &self.learner
    }

    pub fn labeled_size(&self) -> usize {
        self.labeled
    }
}

impl<D: SampleSource<LabeledPoint>> SubsetSampler for AgnosticListSampler<'_, D> {
    fn universe_size(&self) -> usize {
        self.learner.class().len()
    }

    fn max_size(&self) -> usize {
        self.learner.class().len()
    }

    fn draw(&self, tape: &mut RandomTape) -> Vec<usize> {
        let xs: Vec<u32> = (0..self.learner.sample_size()).map(|_| self.data.draw(tape).0).collect();
        let ls = self.data.draw_n(self.labeled, tape);
        list_distribution_generator(&self.learner, &self.strings, &xs, &ls, self.alpha)
    }
}

/// The agnostic learner built from the realizable one: lists from
/// [`AgnosticListSampler`] fed to list heavy-hitters at `eta = 1/2`.
pub struct AgnosticLearner<'a, D> {
    sampler: AgnosticListSampler<'a, D>,
    hh: ListHHParams,
}

impl<'a, D: SampleSource<LabeledPoint>> AgnosticLearner<'a, D> {
    /// `coins.derive(0)` seeds the generator strings, `coins.derive(1)`
    /// the heavy-hitter step.
    pub fn new(
        class: Arc<FiniteClass>,
        data: &'a D,
        rho: f64,
        alpha: f64,
        beta: f64,
        constants: AgnosticConstants,
        coins: &RandomTape,
    ) -> Result<Self, LearnError> {
        check_unit("rho", rho)?;
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        let h = class.len();
        let lp = LearnerParams::new(h, 0.25, alpha / 4.0, beta / 4.0, true, constants.learner)?;
        let learner = RFiniteLearner::new(class, lp)?;
        let k = ((constants.c_strings * (1.0 / beta).ln()).ceil() as usize).max(1);
        let strings = (0..k).map(|i| coins.derive(0).derive(i as u64)).collect();
        let labeled = (constants.c_labeled * (ln_class(h) + (1.0 / beta).ln()) / (alpha * alpha)).ceil() as usize;
        let sampler = AgnosticListSampler {
            learner,
            strings,
            data,
            labeled: labeled.max(1),
            alpha,
        };
        let hh = ListHHParams::new(0.5, rho, beta, sampler.max_size(), constants.hh)?;
        Ok(AgnosticLearner { sampler, hh })
    }

    pub fn sampler(&self) -> &AgnosticListSampler<'a, D> {
        &self.sampler
    }

    pub fn hh_params(&self) -> &ListHHParams {
        &self.hh
    }

    pub fn learn(&self, coins: &RandomTape, samples: &mut RandomTape) -> Option<usize> {
        list_heavy_hitter(&self.sampler, self.hh, &coins.derive(1), samples)
    }
}

pub fn agnostic_learn(
    class: Arc<FiniteClass>,
    data: &impl SampleSource<LabeledPoint>,
    rho: f64,
    alpha: f64,
    beta: f64,
    constants: AgnosticConstants,
    coins: &RandomTape,
    samples: &mut RandomTape,
) -> Result<Option<usize>, LearnError> {
    Ok(AgnosticLearner::new(class, data, rho, alpha, beta, constants, coins)?.learn(coins, samples))
}

/// Exact `Pr[first elements of h1 and h2 differ]` under a uniformly random
/// ordering, by enumerating all orderings of `h1 ∪ h2`.
pub fn first_element_disagreement(h1: &BTreeSet<usize>, h2: &BTreeSet<usize>) -> Ratio<u64> {
    let union: Vec<usize> = h1.union(h2).copied().collect();
    if union.is_empty() {
        return Ratio::from_integer(0);
    }
    let mut perm = union.clone();
    let (mut differ, mut total) = (0u64, 0u64);
    permute(&mut perm, 0, &mut |p| {
        total += 1;
        let f1 = p.iter().find(|e| h1.contains(e));
        let f2 = p.iter().find(|e| h2.contains(e));
        if f1 != f2 {
            differ += 1;
        }
    });
    Ratio::new(differ, total)
}

fn permute(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

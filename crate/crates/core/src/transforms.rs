//! Transformations between replicability, differential privacy and
//! perfect generalization.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algo::StatAlgorithm;
use crate::corrsamp::{consistent_sample, CorrSampError};
use crate::dist::{DistError, EmpiricalDistribution, FiniteDistribution};
use crate::learners::{FiniteClass, LabelCounts, LabeledPoint};
use crate::tape::RandomTape;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("empty candidate list")]
    NoCandidates,
    #[error("candidates and scores differ in length ({candidates} vs {scores})")]
    ScoreLength { candidates: usize, scores: usize },
    #[error("{name} = {value} out of range: {why}")]
    Param {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
    #[error("sample has {got} records, need {need}")]
    SampleTooSmall { got: usize, need: usize },
    #[error("algorithm exposes no exact output distribution and the fallback is disabled")]
    NoExactDistribution,
    #[error("algorithm exposes no output space")]
    NoOutputSpace,
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    CorrSamp(#[from] CorrSampError),
}

fn param(name: &'static str, value: f64, why: &'static str) -> TransformError {
    TransformError::Param { name, value, why }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DPParams {
    pub eps: f64,
    pub delta: f64,
}

impl DPParams {
    pub fn new(eps: f64, delta: f64) -> Result<Self, TransformError> {
        if !(eps > 0.0 && eps <= 4.0) {
            return Err(param("eps", eps, "must lie in (0, 4]"));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(param("delta", delta, "must lie in (0, 1/2)"));
        }
        Ok(DPParams { eps, delta })
    }
}

/// Selection probabilities `∝ exp(eps * score / (2 * sensitivity))`,
/// normalized in log space.
pub fn exp_mech_probs(scores: &[f64], sensitivity: f64, eps: f64) -> Result<Vec<f64>, TransformError> {
    if scores.is_empty() {
        return Err(TransformError::NoCandidates);
    }
    if !(sensitivity > 0.0) {
        return Err(param("sensitivity", sensitivity, "must be positive"));
    }
    if !(eps > 0.0) {
        return Err(param("eps", eps, "must be positive"));
    }
    let logits: Vec<f64> = scores.iter().map(|s| eps * s / (2.0 * sensitivity)).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

fn pick(probs: &[f64], tape: &mut RandomTape) -> usize {
    let u = tape.draw_f64();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Index chosen by the exponential mechanism.
pub fn exp_mech_index(scores: &[f64], sensitivity: f64, eps: f64, tape: &mut RandomTape) -> Result<usize, TransformError> {
    Ok(pick(&exp_mech_probs(scores, sensitivity, eps)?, tape))
}

pub fn exp_mech<T: Clone>(
    candidates: &[T],
    scores: &[f64],
    sensitivity: f64,
    eps: f64,
    tape: &mut RandomTape,
) -> Result<T, TransformError> {
    if candidates.len() != scores.len() {
        return Err(TransformError::ScoreLength {
            candidates: candidates.len(),
            scores: scores.len(),
        });
    }
    Ok(candidates[exp_mech_index(scores, sensitivity, eps, tape)?].clone())
}

/// Two-sided geometric noise `Pr[z] ∝ exp(-eps |z| / 2)` on `[-b, b]`.
#[derive(Clone, Debug)]
pub struct TruncatedGeometric {
    b: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl TruncatedGeometric {
    pub fn new(eps: f64, b: i64) -> Self {
        let r = (-eps / 2.0).exp();
        let w: Vec<f64> = (-b..=b).map(|z| r.powi(z.unsigned_abs() as i32)).collect();
        let total: f64 = w.iter().sum();
        let pmf: Vec<f64> = w.into_iter().map(|x| x / total).collect();
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        TruncatedGeometric { b, pmf, cdf }
    }

    pub fn bound(&self) -> i64 {
        self.b
    }

    pub fn pmf(&self, z: i64) -> f64 {
        if z.abs() > self.b {
            0.0
        } else {
            self.pmf[(z + self.b) as usize]
        }
    }

    /// `Pr[Z <= z]`.
    pub fn cdf(&self, z: i64) -> f64 {
        if z < -self.b {
            0.0
        } else if z >= self.b {
            1.0
        } else {
            self.cdf[(z + self.b) as usize]
        }
    }

    pub fn sample(&self, tape: &mut RandomTape) -> i64 {
        pick(&self.pmf, tape) as i64 - self.b
    }
}

/// Noisy-argmax selection with a stability threshold.
///
/// Each observed element gets its count plus independent
/// [`TruncatedGeometric`] noise with `b = ceil(T)`, `T = 2 ln(2/delta)/eps`;
/// ties go to the smaller element. The winner is reported only if its noisy
/// count reaches `T`, otherwise `None`.
#[derive(Clone, Debug)]
pub struct DpSelection {
    params: DPParams,
    threshold: f64,
    noise: TruncatedGeometric,
}

impl DpSelection {
    pub fn new(params: DPParams) -> Self {
        let threshold = 2.0 * (2.0 / params.delta).ln() / params.eps;
        DpSelection {
            params,
            threshold,
            noise: TruncatedGeometric::new(params.eps, threshold.ceil() as i64),
        }
    }

    pub fn params(&self) -> DPParams {
        self.params
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Largest gap between the mode's count and the count of any reported
    /// element.
    pub fn max_gap(&self) -> i64 {
        2 * self.noise.bound()
    }

    pub fn select<T: Ord + Clone>(&self, counts: &BTreeMap<T, u64>, tape: &mut RandomTape) -> Option<T> {
        let mut best: Option<(&T, i64)> = None;
        for (item, &c) in counts {
            let v = c as i64 + self.noise.sample(tape);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((item, v));
            }
        }
        best.filter(|&(_, v)| v as f64 >= self.threshold).map(|(t, _)| t.clone())
    }

    /// Exact output distribution; `None` is the abstaining outcome.
    pub fn distribution<T: Ord + Clone>(&self, counts: &BTreeMap<T, u64>) -> FiniteDistribution<Option<T>> {
        let items: Vec<(&T, i64)> = counts.iter().map(|(t, &c)| (t, c as i64)).collect();
        let b = self.noise.bound();
        let lo = self.threshold.ceil() as i64;
        let mut outcomes = Vec::with_capacity(items.len() + 1);
        let mut probs = Vec::with_capacity(items.len() + 1);
        let mut mass = 0.0;
        for (i, &(item, ci)) in items.iter().enumerate() {
            let mut p = 0.0;
            for v in lo.max(ci - b)..=ci + b {
                let mut term = self.noise.pmf(v - ci);
                for (j, &(_, cj)) in items.iter().enumerate() {
                    if j < i {
                        term *= self.noise.cdf(v - 1 - cj);
                    } else if j > i {
                        term *= self.noise.cdf(v - cj);
                    }
                }
                p += term;
            }
            mass += p;
            outcomes.push(Some(item.clone()));
            probs.push(p);
        }
        outcomes.push(None);
        probs.push((1.0 - mass).max(0.0));
        FiniteDistribution::new(outcomes, probs).expect("selection probabilities sum to one")
    }
}

pub fn dp_selection<T: Ord + Clone>(items: &[T], params: DPParams, tape: &mut RandomTape) -> Option<T> {
    let counts: EmpiricalDistribution<T> = items.iter().cloned().collect();
    DpSelection::new(params).select(counts.counts(), tape)
}

/// Base algorithms whose coins are a uniform index in `0..coin_count()`,
/// so output distributions can be enumerated.
pub trait FiniteCoinAlgorithm<X>: Sync {
    type Output: Clone + Ord + std::hash::Hash + std::fmt::Debug + Send + Sync;

    fn sample_size(&self) -> usize;
    fn coin_count(&self) -> u64;
    fn run_with_coin(&self, sample: &[X], coin: u64) -> Self::Output;
}

/// A [`FiniteCoinAlgorithm`] run as a [`StatAlgorithm`]: the coin is
/// `draw_below(coin_count)` on the tape.
#[derive(Clone, Debug)]
pub struct FiniteCoins<A>(pub A);

impl<X, A: FiniteCoinAlgorithm<X>> StatAlgorithm<X> for FiniteCoins<A> {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        self.0.sample_size()
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> A::Output {
        self.0.run_with_coin(sample, coins.clone().draw_below(self.0.coin_count()))
    }

    fn exact_output_distribution(&self, sample: &[X]) -> Option<FiniteDistribution<A::Output>> {
        let n = self.0.coin_count();
        let mut w: BTreeMap<A::Output, f64> = BTreeMap::new();
        for c in 0..n {
            *w.entry(self.0.run_with_coin(sample, c)).or_default() += 1.0 / n as f64;
        }
        let (o, p) = w.into_iter().unzip();
        FiniteDistribution::new(o, p).ok()
    }
}

/// Constants for the seed and partition counts of the replicable-to-private
/// reduction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepToDpConstants {
    /// `k1 = ceil(c_k1 ln(1/beta))`.
    pub c_k1: f64,
    /// Partitions per seed `ceil(c_k2 (ln(1/delta)/eps + ln(1/beta)))`.
    pub c_k2: f64,
}

impl Default for RepToDpConstants {
    fn default() -> Self {
        RepToDpConstants { c_k1: 1.0, c_k2: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepToDpParams {
    pub dp: DPParams,
    pub beta: f64,
    /// Number of coin strings.
    pub k1: usize,
    /// Total number of sample partitions, a multiple of `k1`.
    pub k2: usize,
}

impl RepToDpParams {
    pub fn new(dp: DPParams, beta: f64, constants: RepToDpConstants) -> Result<Self, TransformError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(param("beta", beta, "must lie in (0, 1)"));
        }
        let k1 = ((constants.c_k1 * (1.0 / beta).ln()).ceil() as usize).max(1);
        let per = (constants.c_k2 * ((1.0 / dp.delta).ln() / dp.eps + (1.0 / beta).ln())).ceil() as usize;
        Self::explicit(dp, beta, k1, per.max(1) * k1)
    }

    pub fn explicit(dp: DPParams, beta: f64, k1: usize, k2: usize) -> Result<Self, TransformError> {
        if k1 == 0 || k2 == 0 || k2 % k1 != 0 {
            return Err(param("k2", k2 as f64, "must be a positive multiple of k1"));
        }
        Ok(RepToDpParams { dp, beta, k1, k2 })
    }
}

/// Private algorithm from a replicable one.
///
/// The pooled sample is `k2` consecutive base-sized parts; part `p` is run
/// with coin string `p / (k2/k1)`, string `j` being `coins.derive(0).derive(j)`.
/// Selection noise comes from `coins.derive(1)`.
#[derive(Clone, Debug)]
pub struct RepToDp<A> {
    base: A,
    params: RepToDpParams,
    selection: DpSelection,
}

impl<A> RepToDp<A> {
    pub fn new(base: A, params: RepToDpParams) -> Self {
        RepToDp {
            base,
            selection: DpSelection::new(params.dp),
            params,
        }
    }

    pub fn params(&self) -> &RepToDpParams {
        &self.params
    }

    pub fn selection(&self) -> &DpSelection {
        &self.selection
    }

    fn string_of(&self, part: usize) -> usize {
        part / (self.params.k2 / self.params.k1)
    }
}

impl<A> RepToDp<A> {
    /// The base outputs `y_{i,j}` on every part.
    pub fn base_outputs<X>(&self, sample: &[X], coins: &RandomTape) -> Vec<A::Output>
    where
        A: StatAlgorithm<X>,
    {
        let n = self.base.sample_size();
        (0..self.params.k2)
            .map(|p| {
                let r = coins.derive(0).derive(self.string_of(p) as u64);
                self.base.run(&sample[p * n..(p + 1) * n], &r)
            })
            .collect()
    }
}

impl<X: Sync, A: StatAlgorithm<X>> StatAlgorithm<X> for RepToDp<A> {
    type Output = Option<A::Output>;

    fn sample_size(&self) -> usize {
        self.params.k2 * self.base.sample_size()
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> Option<A::Output> {
        let ys: EmpiricalDistribution<A::Output> = self.base_outputs(sample, coins).into_iter().collect();
        self.selection.select(ys.counts(), &mut coins.derive(1))
    }
}

impl<A> RepToDp<FiniteCoins<A>> {
    /// Exact output distribution on a fixed pooled sample, by enumerating
    /// every coin assignment of the `k1` strings and the selection noise.
    pub fn exact_distribution<X>(&self, sample: &[X]) -> FiniteDistribution<Option<A::Output>>
    where
        A: FiniteCoinAlgorithm<X>,
    {
        let base = &self.base.0;
        let (n, k1, per) = (base.sample_size(), self.params.k1, self.params.k2 / self.params.k1);
        let q = base.coin_count();
        // per string: distribution of the multiset contribution
        let table: Vec<Vec<Vec<A::Output>>> = (0..k1)
            .map(|j| {
                (0..q)
                    .map(|c| {
                        (0..per)
                            .map(|i| {
                                let p = j * per + i;
                                base.run_with_coin(&sample[p * n..(p + 1) * n], c)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let total = (q as f64).powi(k1 as i32);
        let mut acc: BTreeMap<Option<A::Output>, f64> = BTreeMap::new();
        let mut choice = vec![0u64; k1];
        loop {
            let mut counts: BTreeMap<A::Output, u64> = BTreeMap::new();
            for (j, &c) in choice.iter().enumerate() {
                for y in &table[j][c as usize] {
                    *counts.entry(y.clone()).or_default() += 1;
                }
            }
            for (o, p) in self.selection.distribution(&counts).iter() {
                *acc.entry(o.clone()).or_default() += p / total;
            }
            // odometer over coin tuples
            let mut j = 0;
            while j < k1 {
                choice[j] += 1;
                if choice[j] < q {
                    break;
                }
                choice[j] = 0;
                j += 1;
            }
            if j == k1 {
                break;
            }
        }
        let (o, p) = acc.into_iter().unzip();
        FiniteDistribution::new(o, p).expect("mixture of distributions")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepToPgConstants {
    /// `k = ceil(c_k ln(1/delta))`.
    pub c_k: f64,
    /// `t = ceil(c_t ln^4(1/beta) max(1, ln(1/eps)) / eps^2)`.
    pub c_t: f64,
}

impl Default for RepToPgConstants {
    fn default() -> Self {
        RepToPgConstants { c_k: 2.0, c_t: 1.0 / 16.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepToPgParams {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub k: usize,
    pub t: usize,
}

impl RepToPgParams {
    pub fn new(eps: f64, delta: f64, beta: f64, constants: RepToPgConstants) -> Result<Self, TransformError> {
        check_open("delta", delta)?;
        check_open("beta", beta)?;
        if !(eps > 0.0) {
            return Err(param("eps", eps, "must be positive"));
        }
        let k = ((constants.c_k * (1.0 / delta).ln()).ceil() as usize).max(1);
        let t = constants.c_t * (1.0 / beta).ln().powi(4) * (1.0 / eps).ln().max(1.0) / (eps * eps);
        Self::explicit(eps, delta, beta, k, (t.ceil() as usize).max(1))
    }

    pub fn explicit(eps: f64, delta: f64, beta: f64, k: usize, t: usize) -> Result<Self, TransformError> {
        check_open("delta", delta)?;
        check_open("beta", beta)?;
        if !(eps > 0.0) {
            return Err(param("eps", eps, "must be positive"));
        }
        if k == 0 || t == 0 {
            return Err(param("k", k.min(t) as f64, "k and t must be positive"));
        }
        Ok(RepToPgParams { eps, delta, beta, k, t })
    }

    /// `4 sqrt(t ln(8kt/beta))`.
    pub fn sensitivity(&self) -> f64 {
        4.0 * (self.t as f64 * (8.0 * self.k as f64 * self.t as f64 / self.beta).ln()).sqrt()
    }
}

fn check_open(name: &'static str, v: f64) -> Result<(), TransformError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(param(name, v, "must lie in (0, 1)"))
    }
}

/// Perfectly generalizing algorithm from a replicable one.
///
/// The sample is `k * t` base-sized parts; coin string `j`
/// (`coins.derive(0).derive(j)`) runs on parts `j*t .. (j+1)*t`. The
/// plurality output of each string (least output on ties) is scored by its
/// count and one is chosen by the exponential mechanism on `coins.derive(1)`.
#[derive(Clone, Debug)]
pub struct RepToPg<A> {
    base: A,
    params: RepToPgParams,
}

impl<A> RepToPg<A> {
    pub fn new(base: A, params: RepToPgParams) -> Self {
        RepToPg { base, params }
    }

    pub fn params(&self) -> &RepToPgParams {
        &self.params
    }
}

impl<A> RepToPg<A> {
    /// `(c_j, score_j)` for every coin string.
    pub fn pluralities<X>(&self, sample: &[X], coins: &RandomTape) -> Vec<(A::Output, u64)>
    where
        A: StatAlgorithm<X>,
    {
        let n = self.base.sample_size();
        let t = self.params.t;
        (0..self.params.k)
            .map(|j| {
                let r = coins.derive(0).derive(j as u64);
                let mut freq: BTreeMap<A::Output, u64> = BTreeMap::new();
                for i in 0..t {
                    let p = j * t + i;
                    *freq.entry(self.base.run(&sample[p * n..(p + 1) * n], &r)).or_default() += 1;
                }
                let top = *freq.values().max().expect("t > 0");
                freq.into_iter().find(|&(_, c)| c == top).expect("maximum exists")
            })
            .collect()
    }
}

impl<X: Sync, A: StatAlgorithm<X>> StatAlgorithm<X> for RepToPg<A> {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        self.params.k * self.params.t * self.base.sample_size()
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> A::Output {
        let plur = self.pluralities(sample, coins);
        let scores: Vec<f64> = plur.iter().map(|&(_, c)| c as f64).collect();
        let j = exp_mech_index(&scores, self.params.sensitivity(), self.params.eps, &mut coins.derive(1))
            .expect("k > 0 and positive parameters");
        plur[j].0.clone()
    }

    fn output_space(&self) -> Option<Vec<A::Output>> {
        self.base.output_space()
    }
}

/// Replicable algorithm from a (one-way) perfectly generalizing one:
/// correlated sampling from its output distribution on the given sample.
#[derive(Clone, Debug)]
pub struct DpToRep<A> {
    alg: A,
    fallback_runs: Option<usize>,
}

impl<A> DpToRep<A> {
    pub fn new(alg: A) -> Self {
        DpToRep { alg, fallback_runs: None }
    }

    /// Without an exact distribution, estimate it from `runs` executions on
    /// `coins.derive(1)`. The result is then only approximately
    /// marginal-preserving.
    pub fn with_fallback(alg: A, runs: usize) -> Self {
        DpToRep {
            alg,
            fallback_runs: Some(runs),
        }
    }
}

impl<A> DpToRep<A> {
    /// True when outputs come from an estimated distribution.
    pub fn approximate<X>(&self, sample: &[X]) -> bool
    where
        A: StatAlgorithm<X>,
    {
        self.alg.exact_output_distribution(sample).is_none()
    }

    /// `Q_S` aligned to the algorithm's output space.
    pub fn target<X>(&self, sample: &[X], coins: &RandomTape) -> Result<FiniteDistribution<A::Output>, TransformError>
    where
        A: StatAlgorithm<X>,
    {
        let space = self.alg.output_space().ok_or(TransformError::NoOutputSpace)?;
        let q = match (self.alg.exact_output_distribution(sample), self.fallback_runs) {
            (Some(q), _) => q,
            (None, Some(runs)) => {
                let e: EmpiricalDistribution<A::Output> = (0..runs)
                    .map(|i| self.alg.run(sample, &coins.derive(1).derive(i as u64)))
                    .collect();
                e.normalize()?
            }
            (None, None) => return Err(TransformError::NoExactDistribution),
        };
        Ok(q.aligned(&space)?)
    }

    pub fn try_run<X>(&self, sample: &[X], coins: &RandomTape) -> Result<A::Output, TransformError>
    where
        A: StatAlgorithm<X>,
    {
        let q = self.target(sample, coins)?;
        Ok(consistent_sample(&q, &mut coins.derive(0))?)
    }
}

impl<X: Sync, A: StatAlgorithm<X>> StatAlgorithm<X> for DpToRep<A> {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        self.alg.sample_size()
    }

    /// Panics where [`DpToRep::try_run`] would return an error.
    fn run(&self, sample: &[X], coins: &RandomTape) -> A::Output {
        self.try_run(sample, coins).expect("dp_to_rep")
    }

    fn output_space(&self) -> Option<Vec<A::Output>> {
        self.alg.output_space()
    }

    fn exact_output_distribution(&self, sample: &[X]) -> Option<FiniteDistribution<A::Output>> {
        if self.fallback_runs.is_some() && self.approximate(sample) {
            return None;
        }
        self.alg.exact_output_distribution(sample)
    }
}

/// `((n/m)(e^eps - 1), (n/m) delta)`.
pub fn subsample_privacy(eps: f64, delta: f64, n: usize, m: usize) -> (f64, f64) {
    let f = n as f64 / m as f64;
    (f * eps.exp_m1(), f * delta)
}

/// Runs `alg` on `n` records drawn without replacement from a sample of
/// `m`. Indices come from `coins.derive(0)`; the wrapped algorithm gets
/// `coins.derive(1)`.
#[derive(Clone, Debug)]
pub struct Subsampled<A> {
    alg: A,
    m: usize,
}

pub fn subsample_amplify<X, A: StatAlgorithm<X>>(alg: A, m: usize) -> Result<Subsampled<A>, TransformError> {
    if m < alg.sample_size() {
        return Err(TransformError::SampleTooSmall {
            got: m,
            need: alg.sample_size(),
        });
    }
    Ok(Subsampled { alg, m })
}

impl<A> Subsampled<A> {
    pub fn privacy<X>(&self, eps: f64, delta: f64) -> (f64, f64)
    where
        A: StatAlgorithm<X>,
    {
        subsample_privacy(eps, delta, self.alg.sample_size(), self.m)
    }
}

impl<X: Clone + Sync, A: StatAlgorithm<X>> StatAlgorithm<X> for Subsampled<A> {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        self.m
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> A::Output {
        let n = self.alg.sample_size();
        if n == self.m {
            return self.alg.run(&sample[..n], &coins.derive(1));
        }
        let mut idx: Vec<usize> = (0..self.m).collect();
        let mut t = coins.derive(0);
        for i in 0..n {
            let j = i + t.draw_below((self.m - i) as u64) as usize;
            idx.swap(i, j);
        }
        let sub: Vec<X> = idx[..n].iter().map(|&i| sample[i].clone()).collect();
        self.alg.run(&sub, &coins.derive(1))
    }

    fn output_space(&self) -> Option<Vec<A::Output>> {
        self.alg.output_space()
    }
}

/// `(eps, 0)`-private learner: the exponential mechanism over the class
/// with score `-(mistakes on the sample)`, sensitivity 1.
#[derive(Clone, Debug)]
pub struct DpExpMechLearner {
    class: Arc<FiniteClass>,
    eps: f64,
    n: usize,
}

impl DpExpMechLearner {
    pub fn new(class: Arc<FiniteClass>, eps: f64, n: usize) -> Result<Self, TransformError> {
        if !(eps > 0.0) {
            return Err(param("eps", eps, "must be positive"));
        }
        if n == 0 {
            return Err(param("n", 0.0, "sample must be non-empty"));
        }
        Ok(DpExpMechLearner { class, eps, n })
    }

    /// `rho / sqrt(8 m ln(1/rho))`, the privacy level that makes the
    /// correlated-sampling wrapper about `rho`-replicable.
    pub fn replicable_eps(rho: f64, m: usize) -> f64 {
        rho / (8.0 * m as f64 * (1.0 / rho).ln()).sqrt()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn class(&self) -> &FiniteClass {
        &self.class
    }

    pub fn probs(&self, sample: &[LabeledPoint]) -> Vec<f64> {
        let counts = LabelCounts::from_points(self.class.domain_size(), sample);
        let scores: Vec<f64> = self.class.mistakes(&counts).into_iter().map(|m| -(m as f64)).collect();
        exp_mech_probs(&scores, 1.0, self.eps).expect("non-empty class")
    }
}

impl StatAlgorithm<LabeledPoint> for DpExpMechLearner {
    type Output = usize;

    fn sample_size(&self) -> usize {
        self.n
    }

    fn run(&self, sample: &[LabeledPoint], coins: &RandomTape) -> usize {
        pick(&self.probs(sample), &mut coins.clone())
    }

    fn output_space(&self) -> Option<Vec<usize>> {
        Some((0..self.class.len()).collect())
    }

    fn exact_output_distribution(&self, sample: &[LabeledPoint]) -> Option<FiniteDistribution<usize>> {
        FiniteDistribution::new((0..self.class.len()).collect(), self.probs(sample)).ok()
    }
}

pub fn dp_exp_mech_learner(
    class: Arc<FiniteClass>,
    eps: f64,
    sample: &[LabeledPoint],
    tape: &RandomTape,
) -> Result<usize, TransformError> {
    let l = DpExpMechLearner::new(class.clone(), eps, sample.len())?;
    if class.check_points(sample).is_err() {
        return Err(param("sample", 0.0, "point outside the domain"));
    }
    Ok(l.run(sample, tape))
}

//! Finite distributions, distances between them, and Monte Carlo estimators.
//!
//! Probabilities are `f64`. Several mechanisms here have irrational output
//! probabilities (softmax weights, geometric noise), so exact rational
//! bookkeeping is not available in general; comparisons instead carry the
//! fixed slack [`PROB_TOL`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::parallel::par_map;
use crate::tape::RandomTape;

/// Slack used when comparing probabilities: 2^-40.
pub const PROB_TOL: f64 = 1.0 / (1u64 << 40) as f64;

/// Two-sided 95% normal quantile used for Wald intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Minimum trial count accepted by the replicability estimator.
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("empty empirical distribution")]
    EmptyEmpirical,
    #[error("distribution has no outcomes")]
    NoOutcomes,
    #[error("outcome and probability lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid probability {0} at index {1}")]
    BadProbability(f64, usize),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(f64),
    #[error("duplicate outcome at index {0}")]
    Duplicate(usize),
    #[error("outcome with positive mass missing from the universe")]
    NotInUniverse,
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(usize),
    #[error("malformed distribution json: {0}")]
    Json(String),
}

/// A probability distribution over an explicit, ordered outcome list.
///
/// Zero-probability outcomes are allowed and kept; the order of the list is
/// meaningful to samplers that walk a shared universe.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution<T> {
    outcomes: Vec<T>,
    probs: Vec<f64>,
}

impl<T: Ord + Clone> FiniteDistribution<T> {
    pub fn new(outcomes: Vec<T>, probs: Vec<f64>) -> Result<Self, DistError> {
        if outcomes.len() != probs.len() {
            return Err(DistError::LengthMismatch(outcomes.len(), probs.len()));
        }
        if outcomes.is_empty() {
            return Err(DistError::NoOutcomes);
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(DistError::BadProbability(p, i));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(DistError::BadSum(sum));
        }
        let mut seen = BTreeSet::new();
        for (i, o) in outcomes.iter().enumerate() {
            if !seen.insert(o) {
                return Err(DistError::Duplicate(i));
            }
        }
        Ok(FiniteDistribution { outcomes, probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(outcomes: Vec<T>, weights: Vec<f64>) -> Result<Self, DistError> {
        if outcomes.len() != weights.len() {
            return Err(DistError::LengthMismatch(outcomes.len(), weights.len()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(DistError::BadProbability(w, i));
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistError::BadSum(total));
        }
        Self::new(outcomes, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(outcomes: Vec<T>) -> Result<Self, DistError> {
        let n = outcomes.len();
        Self::from_weights(outcomes, vec![1.0; n])
    }

    pub fn point(outcome: T) -> Self {
        FiniteDistribution {
            outcomes: vec![outcome],
            probs: vec![1.0],
        }
    }

    pub fn outcomes(&self) -> &[T] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.outcomes.iter().zip(self.probs.iter().copied())
    }

    pub fn prob(&self, outcome: &T) -> f64 {
        self.outcomes
            .iter()
            .position(|o| o == outcome)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Outcomes with positive mass.
    pub fn support(&self) -> Vec<&T> {
        self.iter().filter(|(_, p)| *p > 0.0).map(|(o, _)| o).collect()
    }

    pub fn to_map(&self) -> BTreeMap<T, f64> {
        let mut m = BTreeMap::new();
        for (o, p) in self.iter() {
            *m.entry(o.clone()).or_insert(0.0) += p;
        }
        m
    }

    /// Pushforward under `f`, merging outcomes that collide. The result is
    /// listed in sorted order.
    pub fn map<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> FiniteDistribution<U> {
        let mut m: BTreeMap<U, f64> = BTreeMap::new();
        for (o, p) in self.iter() {
            *m.entry(f(o)).or_insert(0.0) += p;
        }
        let (outcomes, probs) = m.into_iter().unzip();
        FiniteDistribution { outcomes, probs }
    }

    /// The same distribution listed over `universe` (zeros filled in).
    pub fn aligned(&self, universe: &[T]) -> Result<Self, DistError> {
        let m = self.to_map();
        let mut covered = 0.0;
        let mut probs = Vec::with_capacity(universe.len());
        let mut seen = BTreeSet::new();
        for (i, u) in universe.iter().enumerate() {
            if !seen.insert(u) {
                return Err(DistError::Duplicate(i));
            }
            let p = m.get(u).copied().unwrap_or(0.0);
            covered += p;
            probs.push(p);
        }
        if (covered - 1.0).abs() > PROB_TOL {
            return Err(DistError::NotInUniverse);
        }
        Ok(FiniteDistribution {
            outcomes: universe.to_vec(),
            probs,
        })
    }

    /// One draw by inversion of the cumulative distribution.
    pub fn sample(&self, tape: &mut RandomTape) -> T {
        let u = tape.draw_f64();
        let mut acc = 0.0;
        for (o, p) in self.iter() {
            acc += p;
            if u < acc {
                return o.clone();
            }
        }
        // rounding left u above the last partial sum
        self.iter()
            .filter(|(_, p)| *p > 0.0)
            .last()
            .map(|(o, _)| o.clone())
            .expect("distribution has positive mass")
    }

    pub fn sample_n(&self, n: usize, tape: &mut RandomTape) -> Vec<T> {
        (0..n).map(|_| self.sample(tape)).collect()
    }
}

/// Total variation distance over the union of the two supports.
pub fn tv_distance<T: Ord + Clone>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> f64 {
    let mut diff: BTreeMap<&T, f64> = BTreeMap::new();
    for (o, w) in p.iter() {
        *diff.entry(o).or_insert(0.0) += w;
    }
    for (o, w) in q.iter() {
        *diff.entry(o).or_insert(0.0) -= w;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

/// `max_O P(O) - e^eps Q(O)`, attained at `O = {y : p(y) > e^eps q(y)}`.
pub fn hockey_stick<T: Ord + Clone>(
    p: &FiniteDistribution<T>,
    q: &FiniteDistribution<T>,
    eps: f64,
) -> f64 {
    let qm = q.to_map();
    let scale = eps.exp();
    p.to_map()
        .iter()
        .map(|(o, &pw)| (pw - scale * qm.get(o).copied().unwrap_or(0.0)).max(0.0))
        .sum()
}

/// Whether `p` and `q` are (eps, delta)-indistinguishable on every event,
/// in both directions.
pub fn indistinguishable<T: Ord + Clone>(
    p: &FiniteDistribution<T>,
    q: &FiniteDistribution<T>,
    eps: f64,
    delta: f64,
) -> bool {
    hockey_stick(p, q, eps) <= delta + PROB_TOL && hockey_stick(q, p, eps) <= delta + PROB_TOL
}

/// Counts of observed outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalDistribution<T: Ord> {
    counts: BTreeMap<T, u64>,
    total: u64,
}

impl<T: Ord + Clone> Default for EmpiricalDistribution<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord + Clone> EmpiricalDistribution<T> {
    pub fn new() -> Self {
        EmpiricalDistribution {
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, outcome: T) {
        *self.counts.entry(outcome).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, outcome: &T) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<T, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn frequency(&self, outcome: &T) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(outcome) as f64 / self.total as f64
        }
    }

    /// Outcomes in sorted order with their relative frequencies.
    pub fn normalize(&self) -> Result<FiniteDistribution<T>, DistError> {
        if self.total == 0 {
            return Err(DistError::EmptyEmpirical);
        }
        let outcomes: Vec<T> = self.counts.keys().cloned().collect();
        let probs = self
            .counts
            .values()
            .map(|&c| c as f64 / self.total as f64)
            .collect();
        FiniteDistribution::new(outcomes, probs)
    }
}

impl<T: Ord + Clone> FromIterator<T> for EmpiricalDistribution<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut e = EmpiricalDistribution::new();
        for x in iter {
            e.add(x);
        }
        e
    }
}

pub fn empirical<T: Ord + Clone>(samples: &[T]) -> EmpiricalDistribution<T> {
    samples.iter().cloned().collect()
}

/// A Bernoulli rate with its Wald 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub rate: f64,
    pub half_width: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Estimate {
            rate,
            half_width: wald_half_width(rate, trials),
            trials,
        }
    }
}

pub fn wald_half_width(rate: f64, trials: usize) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    Z95 * (rate * (1.0 - rate) / trials as f64).sqrt()
}

/// Runs `trial` on `tape.derive(i)` for `i in 0..trials` and reports the
/// success rate.
pub fn estimate_rate<F>(trials: usize, tape: &RandomTape, trial: F) -> Estimate
where
    F: Fn(&RandomTape) -> bool + Sync + Send,
{
    let hits = par_map(trials, |i| trial(&tape.derive(i as u64)));
    Estimate::from_counts(hits.iter().filter(|&&h| h).count(), trials)
}

/// Probability that two runs sharing internal randomness but drawing
/// independent samples of size `n` agree.
///
/// Trial `i` uses `tape.derive(i)`: stream 0 supplies the shared coins and
/// streams 1 and 2 the two samples.
pub fn estimate_replicability<X, Y, A>(
    alg: A,
    data: &FiniteDistribution<X>,
    n: usize,
    trials: usize,
    tape: &RandomTape,
) -> Result<Estimate, DistError>
where
    X: Ord + Clone + Sync + Send,
    Y: PartialEq,
    A: Fn(&[X], &RandomTape) -> Y + Sync + Send,
{
    if trials < MIN_TRIALS {
        return Err(DistError::TooFewTrials(trials));
    }
    Ok(estimate_rate(trials, tape, |t| {
        let coins = t.derive(0);
        let s1 = data.sample_n(n, &mut t.derive(1));
        let s2 = data.sample_n(n, &mut t.derive(2));
        alg(&s1, &coins) == alg(&s2, &coins)
    }))
}

/// Like [`estimate_replicability`] for arbitrary data access: trial `i`
/// calls `run(coins, data)` twice with `coins = tape.derive(i).derive(0)`
/// and data tapes `derive(1)`, `derive(2)`.
pub fn estimate_paired<Y, F>(trials: usize, tape: &RandomTape, run: F) -> Result<Estimate, DistError>
where
    Y: PartialEq,
    F: Fn(&RandomTape, RandomTape) -> Y + Sync + Send,
{
    if trials < MIN_TRIALS {
        return Err(DistError::TooFewTrials(trials));
    }
    Ok(estimate_rate(trials, tape, |t| {
        let coins = t.derive(0);
        run(&coins, t.derive(1)) == run(&coins, t.derive(2))
    }))
}

/// Pearson goodness-of-fit result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `observed` counts against `expected`
/// probabilities. Cells with expected count below 5 are pooled into one.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected) {
        let e = p * nf;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map(|d| d.sf(statistic))
            .unwrap_or(0.0)
    };
    ChiSquare {
        statistic,
        dof,
        p_value,
    }
}

/// Byte-string outcomes, serialized as hex.
pub type Outcome = Vec<u8>;

impl FiniteDistribution<Outcome> {
    /// `[[hex, prob], ...]` in list order.
    pub fn to_json(&self) -> String {
        let pairs: Vec<(String, f64)> = self.iter().map(|(o, p)| (hex::encode(o), p)).collect();
        serde_json::to_string(&pairs).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, DistError> {
        let pairs: Vec<(String, f64)> =
            serde_json::from_str(s).map_err(|e| DistError::Json(e.to_string()))?;
        let mut outcomes = Vec::with_capacity(pairs.len());
        let mut probs = Vec::with_capacity(pairs.len());
        for (h, p) in pairs {
            outcomes.push(hex::decode(&h).map_err(|e| DistError::Json(format!("{h}: {e}")))?);
            probs.push(p);
        }
        Self::new(outcomes, probs)
    }
}

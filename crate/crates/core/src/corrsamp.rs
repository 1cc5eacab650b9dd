//! Correlated sampling: an explicit consistent sampler, and `CorrSamp`,
//! which samples from the output distribution of a truth-table circuit using
//! only an inversion oracle for hashed compositions of the circuit.
//!
//! Randomness layout for `CorrSamp`: round `t` reads `tape.derive(t)`, and
//! within it stream 0 is `beta`, 1 is the level, 2 is `h1`, 3 is `u`, 4 feeds
//! the inner `HashCheck` trials, and 5 is the acceptance coin. Inner trial
//! `i` reads the `i`-th fixed-width block of stream 4: the rows of `h2`, its
//! offset, then `v`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::circuit::{compose_f, CircuitError, InverterOracle, TruthTableCircuit};
use crate::dist::FiniteDistribution;
use crate::hashing::{sample_hash, Bits, HashError};
use crate::tape::{extract_bits, RandomTape};

/// Round cap of [`consistent_sample`].
pub const MAX_CONSISTENT_ROUNDS: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrSampError {
    #[error("consistent sampler exhausted")]
    Exhausted,
    #[error("nu must lie in (0, 1/2), got {0}")]
    BadNu(f64),
    #[error("parameter bound violated: {0}")]
    Params(String),
    #[error("circuit must have at least one input bit")]
    NoInputs,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Hash(#[from] HashError),
}

/// Rejection-based consistent sampler over the outcome list of `p`.
///
/// Round `i` draws an index uniformly from the list and a uniform threshold
/// `h`, and stops when `h < p(y)`. Two distributions listed over the same
/// universe and sampled with the same tape disagree with probability at most
/// `2 d / (1 + d)` where `d` is their total variation distance.
pub fn consistent_sample<T: Ord + Clone>(
    p: &FiniteDistribution<T>,
    tape: &mut RandomTape,
) -> Result<T, CorrSampError> {
    let n = p.len() as u64;
    let probs = p.probs();
    for _ in 0..MAX_CONSISTENT_ROUNDS {
        let i = tape.draw_below(n) as usize;
        let h = tape.draw_f64();
        if h < probs[i] {
            return Ok(p.outcomes()[i].clone());
        }
    }
    Err(CorrSampError::Exhausted)
}

/// Scale constants for the `Theta(.)` parameter choices.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrSampConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for CorrSampConstants {
    fn default() -> Self {
        CorrSampConstants {
            c0: 0.5,
            c1: 1.0,
            c2: 0.03125,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrSampParams {
    pub nu: f64,
    /// Hash slack.
    pub k: u32,
    /// Round cap of the outer loop.
    pub t1: u64,
    /// Inner `HashCheck` trials per round.
    pub t2: u64,
    pub constants: CorrSampConstants,
}

fn required_k(m: u32, nu: f64, c: &CorrSampConstants) -> u32 {
    let lg = f64::from(m.max(1)).log2() + (1.0 / nu).log2();
    ((c.c0 * lg).ceil() as u32).max(1)
}

fn required_t1(m: u32, k: u32, nu: f64, c: &CorrSampConstants) -> u64 {
    let v = c.c1 * f64::from(m.max(1)) * f64::from(k) * 2f64.powi(k as i32) * (1.0 / nu).ln();
    (v.ceil() as u64).max(1)
}

fn required_t2(k: u32, t1: u64, nu: f64, c: &CorrSampConstants) -> u64 {
    let v = c.c2 * 2f64.powi(k as i32) / (nu * nu) * (t1 as f64 / nu).ln();
    (v.ceil() as u64).max(1)
}

impl CorrSampParams {
    /// Smallest parameters meeting the bounds for input width `m`.
    pub fn for_width(m: u32, nu: f64, constants: CorrSampConstants) -> Result<Self, CorrSampError> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(CorrSampError::BadNu(nu));
        }
        let k = required_k(m, nu, &constants);
        let t1 = required_t1(m, k, nu, &constants);
        let t2 = required_t2(k, t1, nu, &constants);
        Ok(CorrSampParams {
            nu,
            k,
            t1,
            t2,
            constants,
        })
    }

    pub fn validate(&self, m: u32) -> Result<(), CorrSampError> {
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(CorrSampError::BadNu(self.nu));
        }
        let c = &self.constants;
        let k = required_k(m, self.nu, c);
        if self.k < k {
            return Err(CorrSampError::Params(format!("k = {} below {k}", self.k)));
        }
        if m + 2 * self.k > 64 {
            return Err(CorrSampError::Params(format!(
                "m + 2k = {} exceeds 64",
                m + 2 * self.k
            )));
        }
        let t1 = required_t1(m, self.k, self.nu, c);
        if self.t1 < t1 {
            return Err(CorrSampError::Params(format!("T1 = {} below {t1}", self.t1)));
        }
        let t2 = required_t2(self.k, self.t1, self.nu, c);
        if self.t2 < t2 {
            return Err(CorrSampError::Params(format!("T2 = {} below {t2}", self.t2)));
        }
        Ok(())
    }
}

/// One `HashCheck` call: invert `F = h1(C(.)) || h2(.)` at `u || v` and map
/// the preimage through `C`.
#[allow(clippy::too_many_arguments)]
pub fn hash_check(
    c: &TruthTableCircuit,
    ell: u32,
    h1: &crate::hashing::Gf2AffineHash,
    u: Bits,
    h2: &crate::hashing::Gf2AffineHash,
    v: Bits,
    oracle: &InverterOracle,
    tape: &RandomTape,
) -> Result<Option<u64>, CorrSampError> {
    let f = compose_f(c, h1, h2, ell)?;
    let y = u.concat(v).map_err(|e| CorrSampError::Params(e.to_string()))?;
    Ok(oracle.invert(&f, y, tape)?.map(|x| c.eval(x.value())))
}

/// Result of one outer round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub ell: u32,
    /// Distinct circuit outputs hashing to `u`.
    pub candidates: usize,
    /// At most one output hashing to `u` has density in
    /// `[2^(-ell-4), 2^(-ell+4)]`.
    pub ideal: bool,
    pub beta: Option<f64>,
    pub found: Option<(u64, f64)>,
    pub returned: Option<u64>,
}

/// Output of a full `CorrSamp` run; `value` is `None` for the bottom symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrSampOutcome {
    pub value: Option<u64>,
    pub rounds: u64,
}

/// `CorrSamp` bound to one circuit, parameter set and oracle.
#[derive(Clone, Debug)]
pub struct CorrSampler {
    circuit: TruthTableCircuit,
    params: CorrSampParams,
    oracle: InverterOracle,
    literal: bool,
    outputs: Vec<(u64, Vec<u32>)>,
    density: BTreeMap<u64, f64>,
    /// `parity[a]` has bit `r` set iff `a & r` has odd weight (inputs < 64).
    parity: Vec<u64>,
}

struct Level {
    ell: u32,
    h1: crate::hashing::Gf2AffineHash,
    u: u64,
}

impl CorrSampler {
    pub fn new(
        circuit: TruthTableCircuit,
        params: CorrSampParams,
        oracle: InverterOracle,
    ) -> Result<Self, CorrSampError> {
        if circuit.in_bits() == 0 {
            return Err(CorrSampError::NoInputs);
        }
        params.validate(circuit.in_bits())?;
        let outputs: Vec<(u64, Vec<u32>)> = circuit.preimages().into_iter().collect();
        let total = f64::from(1u32 << circuit.in_bits());
        let density = outputs
            .iter()
            .map(|(y, rs)| (*y, rs.len() as f64 / total))
            .collect();
        let literal = !matches!(oracle, InverterOracle::BruteForce);
        let parity = (0..64u64)
            .map(|a| (0..64u64).fold(0, |acc, r| acc | (u64::from((a & r).count_ones() & 1) << r)))
            .collect();
        Ok(CorrSampler {
            circuit,
            params,
            oracle,
            literal,
            outputs,
            density,
            parity,
        })
    }

    /// Default constants, exact inverter.
    pub fn with_defaults(circuit: TruthTableCircuit, nu: f64) -> Result<Self, CorrSampError> {
        let params = CorrSampParams::for_width(circuit.in_bits(), nu, CorrSampConstants::default())?;
        Self::new(circuit, params, InverterOracle::BruteForce)
    }

    /// Forces every `HashCheck` through `compose_f` and the oracle, even for
    /// the exact inverter.
    pub fn literal(mut self, on: bool) -> Self {
        self.literal = on || !matches!(self.oracle, InverterOracle::BruteForce);
        self
    }

    pub fn params(&self) -> &CorrSampParams {
        &self.params
    }

    pub fn circuit(&self) -> &TruthTableCircuit {
        &self.circuit
    }

    fn level(&self, round: &RandomTape) -> Result<Level, CorrSampError> {
        let m = self.circuit.in_bits();
        let ell = round.derive(1).draw_below(u64::from(m) + 1) as u32;
        let h1 = sample_hash(self.circuit.out_bits(), ell + self.params.k, &mut round.derive(2))?;
        let u = round.derive(3).draw_uint(ell + self.params.k);
        Ok(Level { ell, h1, u })
    }

    /// `ElemFind`: the unique output whose hit frequency over `T2` trials
    /// lies in `((beta/2) 2^-k, beta 2^-k]`, with that frequency.
    pub fn elem_find(
        &self,
        ell: u32,
        beta: f64,
        h1: &crate::hashing::Gf2AffineHash,
        u: u64,
        inner: &RandomTape,
    ) -> Result<Option<(u64, f64)>, CorrSampError> {
        if self.literal {
            self.elem_find_literal(ell, beta, h1, u, inner)
        } else {
            Ok(self.elem_find_fast(ell, beta, h1, u, inner))
        }
    }

    fn bounds(&self, beta: f64) -> (f64, f64) {
        let s = 2f64.powi(-(self.params.k as i32));
        (beta / 2.0 * s, beta * s)
    }

    fn select(&self, tally: &[(u64, u64)], beta: f64) -> Option<(u64, f64)> {
        let (lo, hi) = self.bounds(beta);
        let t2 = self.params.t2 as f64;
        let mut hit = None;
        for &(x, count) in tally {
            let q = count as f64 / t2;
            if q > lo && q <= hi {
                if hit.is_some() {
                    return None;
                }
                hit = Some((x, q));
            }
        }
        hit
    }

    fn elem_find_literal(
        &self,
        ell: u32,
        beta: f64,
        h1: &crate::hashing::Gf2AffineHash,
        u: u64,
        inner: &RandomTape,
    ) -> Result<Option<(u64, f64)>, CorrSampError> {
        let m = self.circuit.in_bits();
        let k = self.params.k;
        let w = m - ell + k;
        let ub = Bits::new(u, ell + k).map_err(|e| CorrSampError::Params(e.to_string()))?;
        let mut stream = inner.clone();
        let mut tally: BTreeMap<u64, u64> = BTreeMap::new();
        for _ in 0..self.params.t2 {
            let h2 = sample_hash(m, w, &mut stream)?;
            let v = Bits::new(stream.draw_uint(w), w).expect("draw fits");
            if let Some(x) = hash_check(&self.circuit, ell, h1, ub, &h2, v, &self.oracle, inner)? {
                *tally.entry(x).or_insert(0) += 1;
            }
        }
        let tally: Vec<(u64, u64)> = tally.into_iter().collect();
        Ok(self.select(&tally, beta))
    }

    /// Same result as the literal path for the exact inverter. Only inputs
    /// in `h1(C(.))^-1(u)` can be returned by the oracle, so each trial looks
    /// for the least of those with `h2(r) = v`. The loop stops once no output
    /// can still finish inside the interval.
    fn elem_find_fast(
        &self,
        ell: u32,
        beta: f64,
        h1: &crate::hashing::Gf2AffineHash,
        u: u64,
        inner: &RandomTape,
    ) -> Option<(u64, f64)> {
        let mut pre: Vec<(u32, usize)> = Vec::new();
        let mut cands: Vec<(u64, u64)> = Vec::new();
        for (y, rs) in &self.outputs {
            if h1.eval(*y) == u {
                let idx = cands.len();
                cands.push((*y, 0));
                pre.extend(rs.iter().map(|&r| (r, idx)));
            }
        }
        if pre.is_empty() {
            return None;
        }
        pre.sort_unstable();
        let m = self.circuit.in_bits();
        let w = (m - ell + self.params.k) as usize;
        let block = w * m as usize + 2 * w;
        let t2 = self.params.t2;
        let (lo, hi) = self.bounds(beta);
        let t2f = t2 as f64;
        let mut stream = inner.clone();
        let mut words = Vec::with_capacity(block.div_ceil(64));
        let row_at = |words: &[u64], j: usize| extract_bits(words, j * m as usize, m);
        let b_off = w * m as usize;
        let v_off = b_off + w;
        // m <= 6: one bit per input, one AND per hash row
        let small = m <= 6;
        let mut owner = [usize::MAX; 64];
        let mut live = 0u64;
        if small {
            for &(r, idx) in &pre {
                owner[r as usize] = idx;
                live |= 1 << r;
            }
        }
        for trial in 0..t2 {
            stream.draw_words(block, &mut words);
            let target = extract_bits(&words, b_off, w as u32) ^ extract_bits(&words, v_off, w as u32);
            if small {
                let mut mask = live;
                for j in 0..w {
                    let par = self.parity[row_at(&words, j) as usize];
                    mask &= if (target >> j) & 1 == 1 { par } else { !par };
                    if mask == 0 {
                        break;
                    }
                }
                if mask != 0 {
                    cands[owner[mask.trailing_zeros() as usize]].1 += 1;
                }
            } else {
                for &(r, idx) in &pre {
                    let r = u64::from(r);
                    let ok = (0..w).all(|j| {
                        ((row_at(&words, j) & r).count_ones() as u64 & 1) == (target >> j) & 1
                    });
                    if ok {
                        cands[idx].1 += 1;
                        break;
                    }
                }
            }
            if trial % 64 == 63 {
                let left = t2 - trial - 1;
                let viable = cands.iter().any(|&(_, c)| {
                    c as f64 / t2f <= hi && (c + left) as f64 / t2f > lo
                });
                if !viable {
                    return None;
                }
            }
        }
        self.select(&cands, beta)
    }

    /// One outer round on its own tape.
    pub fn round(&self, round: &RandomTape) -> Result<RoundTrace, CorrSampError> {
        let Level { ell, h1, u } = self.level(round)?;
        let mut candidates = 0;
        let mut in_window = 0;
        let (wlo, whi) = (2f64.powi(-(ell as i32) - 4), 2f64.powi(4 - ell as i32));
        for (y, _) in &self.outputs {
            if h1.eval(*y) == u {
                candidates += 1;
                let p = self.density[y];
                if p >= wlo && p <= whi {
                    in_window += 1;
                }
            }
        }
        let mut trace = RoundTrace {
            ell,
            candidates,
            ideal: in_window <= 1,
            beta: None,
            found: None,
            returned: None,
        };
        if candidates == 0 && !self.literal {
            return Ok(trace);
        }
        let beta = 1.0 + round.derive(0).draw_f64();
        trace.beta = Some(beta);
        trace.found = self.elem_find(ell, beta, &h1, u, &round.derive(4))?;
        if let Some((x, q)) = trace.found {
            let coin = round.derive(5).draw_f64();
            if coin < q * 2f64.powi(self.params.k as i32) / beta {
                trace.returned = Some(x);
            }
        }
        Ok(trace)
    }

    pub fn sample(&self, tape: &RandomTape) -> Result<CorrSampOutcome, CorrSampError> {
        self.sample_traced(tape, |_| {})
    }

    /// Runs up to `T1` rounds, reporting each to `observe`.
    pub fn sample_traced(
        &self,
        tape: &RandomTape,
        mut observe: impl FnMut(&RoundTrace),
    ) -> Result<CorrSampOutcome, CorrSampError> {
        for t in 0..self.params.t1 {
            let trace = self.round(&tape.derive(t))?;
            observe(&trace);
            if let Some(x) = trace.returned {
                return Ok(CorrSampOutcome {
                    value: Some(x),
                    rounds: t + 1,
                });
            }
        }
        Ok(CorrSampOutcome {
            value: None,
            rounds: self.params.t1,
        })
    }
}

/// `CorrSamp` with default constants and the exact inverter.
pub fn corr_samp(
    c: &TruthTableCircuit,
    nu: f64,
    tape: &RandomTape,
) -> Result<CorrSampOutcome, CorrSampError> {
    CorrSampler::with_defaults(c.clone(), nu)?.sample(tape)
}

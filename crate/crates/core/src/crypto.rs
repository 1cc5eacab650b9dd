//! Goldwasser-Micali encryption, a private algorithm for identifying
//! encryptions of a common bit, and the distinguisher built from any
//! replicable algorithm for that task.
//!
//! Keys are desk scale (primes of at most 64 bits). Nothing here is meant
//! to be secure.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algo::StatAlgorithm;
use crate::dist::{Estimate, FiniteDistribution};
use crate::parallel::par_map;
use crate::tape::RandomTape;

pub type Ciphertext = BigUint;

/// Moduli up to this size can have `Z*_N` enumerated.
pub const ENUM_LIMIT: u64 = 1 << 20;

const PRIME_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error("prime_bits = {0} out of range: must lie in [4, 64]")]
    PrimeBits(u32),
    #[error("no prime found after {0} candidates")]
    PrimeSearchExhausted(usize),
    #[error("{0} is not an odd prime")]
    NotPrime(u64),
    #[error("the two primes must differ")]
    EqualPrimes,
    #[error("N = {0} is too large to enumerate Z*_N")]
    NotEnumerable(BigUint),
    #[error("{name} = {value} out of range: {why}")]
    Param {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub n: BigUint,
    /// Non-residue modulo both prime factors.
    pub x: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub p: u64,
    pub q: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmKeys {
    pub public: PublicKey,
    pub secret: SecretKey,
}

fn is_odd_prime(p: u64) -> bool {
    p > 2 && primal_check::miller_rabin(p)
}

/// Euler's criterion: whether `c` is a nonzero square modulo the odd prime `p`.
fn is_residue_mod(c: &BigUint, p: u64) -> bool {
    let r = (c % p).to_u64().expect("reduced mod a u64");
    if r == 0 {
        return false;
    }
    let e = BigUint::from((p - 1) / 2);
    BigUint::from(r).modpow(&e, &BigUint::from(p)).is_one()
}

fn random_prime(bits: u32, tape: &mut RandomTape) -> Result<u64, CryptoError> {
    for _ in 0..PRIME_ATTEMPTS {
        let p = tape.draw_uint(bits) | (1 << (bits - 1)) | 1;
        if is_odd_prime(p) {
            return Ok(p);
        }
    }
    Err(CryptoError::PrimeSearchExhausted(PRIME_ATTEMPTS))
}

/// Key generation with `prime_bits`-bit primes. The non-residue `x` is
/// found by rejection using the factorization.
pub fn keygen(prime_bits: u32, tape: &RandomTape) -> Result<GmKeys, CryptoError> {
    if !(4..=64).contains(&prime_bits) {
        return Err(CryptoError::PrimeBits(prime_bits));
    }
    let mut t = tape.derive(0);
    let p = random_prime(prime_bits, &mut t)?;
    let mut q = p;
    for _ in 0..PRIME_ATTEMPTS {
        if q != p {
            break;
        }
        q = random_prime(prime_bits, &mut t)?;
    }
    if q == p {
        return Err(CryptoError::PrimeSearchExhausted(PRIME_ATTEMPTS));
    }
    GmKeys::from_primes(p, q, &tape.derive(1))
}

impl GmKeys {
    pub fn from_primes(p: u64, q: u64, tape: &RandomTape) -> Result<Self, CryptoError> {
        for v in [p, q] {
            if !is_odd_prime(v) {
                return Err(CryptoError::NotPrime(v));
            }
        }
        if p == q {
            return Err(CryptoError::EqualPrimes);
        }
        let n = BigUint::from(p) * BigUint::from(q);
        let mut t = tape.clone();
        loop {
            let x = uniform_below(&n, &mut t);
            if !is_residue_mod(&x, p) && !is_residue_mod(&x, q) && (&x % p) != BigUint::zero() && (&x % q) != BigUint::zero() {
                return Ok(GmKeys {
                    public: PublicKey { n, x },
                    secret: SecretKey { p, q },
                });
            }
        }
    }

    /// `None` when `gcd(c, N) != 1`, else whether `c` is a non-residue.
    pub fn dec(&self, c: &Ciphertext) -> Option<bool> {
        self.secret.dec(&self.public, c)
    }
}

impl SecretKey {
    pub fn dec(&self, pk: &PublicKey, c: &Ciphertext) -> Option<bool> {
        if !pk.verify(c) {
            return None;
        }
        Some(!(is_residue_mod(c, self.p) && is_residue_mod(c, self.q)))
    }
}

/// Jacobi symbol `(a/n)` for odd `n`.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    assert!(n.is_odd(), "jacobi symbol needs an odd modulus");
    let mut a = a % n;
    let mut n = n.clone();
    let mut s = 1i8;
    while !a.is_zero() {
        while a.is_even() {
            a >>= 1;
            let r = (&n % 8u32).to_u32().expect("small");
            if r == 3 || r == 5 {
                s = -s;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32).to_u32() == Some(3) && (&n % 4u32).to_u32() == Some(3) {
            s = -s;
        }
        a %= &n;
    }
    if n.is_one() {
        s
    } else {
        0
    }
}

/// Uniform in `0..n` by rejection on `bits(n)`-bit draws.
fn uniform_below(n: &BigUint, tape: &mut RandomTape) -> BigUint {
    let bits = n.bits() as usize;
    let mut words = Vec::new();
    loop {
        tape.draw_words(bits, &mut words);
        let digits: Vec<u32> = words.iter().flat_map(|&w| [w as u32, (w >> 32) as u32]).collect();
        let v = BigUint::from_slice(&digits);
        if &v < n {
            return v;
        }
    }
}

impl PublicKey {
    /// `gcd(c, N) == 1`.
    pub fn verify(&self, c: &Ciphertext) -> bool {
        c.gcd(&self.n).is_one()
    }

    pub fn random_unit(&self, tape: &mut RandomTape) -> BigUint {
        loop {
            let u = uniform_below(&self.n, tape);
            if self.verify(&u) {
                return u;
            }
        }
    }

    /// Units with Jacobi symbol 1, the ciphertexts `enc` can produce up to
    /// residuosity. Checkable from the public key alone.
    pub fn well_formed(&self, c: &Ciphertext) -> bool {
        self.verify(c) && jacobi(c, &self.n) == 1
    }

    /// `u^2 x^b mod N` for a uniform unit `u`.
    pub fn enc(&self, b: bool, tape: &mut RandomTape) -> Ciphertext {
        let u = self.random_unit(tape);
        let c = &u * &u % &self.n;
        if b {
            c * &self.x % &self.n
        } else {
            c
        }
    }

    /// `u^2 c mod N` for a uniform unit `u`.
    pub fn rerandomize(&self, c: &Ciphertext, tape: &mut RandomTape) -> Ciphertext {
        let u = self.random_unit(tape);
        &u * &u % &self.n * c % &self.n
    }

    fn small_n(&self) -> Result<u64, CryptoError> {
        match self.n.to_u64() {
            Some(n) if n <= ENUM_LIMIT => Ok(n),
            _ => Err(CryptoError::NotEnumerable(self.n.clone())),
        }
    }

    /// Every element of `Z*_N`, ascending.
    pub fn units(&self) -> Result<Vec<BigUint>, CryptoError> {
        let n = self.small_n()?;
        Ok((1..n).filter(|&u| u.gcd(&n) == 1).map(BigUint::from).collect())
    }

    /// Multiset of `u^2 mod N` over `u` in `Z*_N`.
    fn square_counts(&self) -> Result<BTreeMap<u64, u64>, CryptoError> {
        let n = self.small_n()?;
        let mut m = BTreeMap::new();
        for u in (1..n).filter(|&u| u.gcd(&n) == 1) {
            *m.entry(u * u % n).or_insert(0) += 1;
        }
        Ok(m)
    }

    /// Exact distribution of `rerandomize(c)` by enumerating every unit.
    pub fn rerandomize_distribution(&self, c: &Ciphertext) -> Result<FiniteDistribution<Ciphertext>, CryptoError> {
        let n = self.small_n()?;
        let c = (c % n).to_u64().expect("reduced");
        let sq = self.square_counts()?;
        let total: u64 = sq.values().sum();
        let mut out: BTreeMap<u64, u64> = BTreeMap::new();
        for (&s, &k) in &sq {
            *out.entry(s * c % n).or_insert(0) += k;
        }
        let (o, w): (Vec<_>, Vec<_>) = out.into_iter().map(|(v, k)| (BigUint::from(v), k as f64 / total as f64)).unzip();
        Ok(FiniteDistribution::new(o, w).expect("normalized counts"))
    }
}

/// Private selection of an encryption of the sample's bit: drop
/// ciphertexts that are not [`PublicKey::well_formed`], pad with `k` encryptions of each bit, pick one uniformly
/// and rerandomize it.
///
/// Coins: `derive(0)` picks the index, `derive(1).derive(i)` encrypts pad
/// `i`, `derive(2)` rerandomizes.
#[derive(Clone, Debug)]
pub struct DpRandEnc {
    pk: PublicKey,
    k: usize,
    m: usize,
}

impl DpRandEnc {
    /// `k = ceil(1/eps)`; requires `m >= k/beta`.
    pub fn new(pk: PublicKey, eps: f64, beta: f64, m: usize) -> Result<Self, CryptoError> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(CryptoError::Param {
                name: "eps",
                value: eps,
                why: "must lie in (0, 1]",
            });
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(CryptoError::Param {
                name: "beta",
                value: beta,
                why: "must lie in (0, 1)",
            });
        }
        let k = (1.0 / eps - 1e-9).ceil() as usize;
        if (m as f64) < k as f64 / beta {
            return Err(CryptoError::Param {
                name: "m",
                value: m as f64,
                why: "must be at least k/beta",
            });
        }
        Ok(DpRandEnc { pk, k, m })
    }

    pub fn with_k(pk: PublicKey, k: usize, m: usize) -> Self {
        DpRandEnc { pk, k: k.max(1), m }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    fn pool(&self, sample: &[Ciphertext]) -> Vec<Ciphertext> {
        sample.iter().filter(|c| self.pk.well_formed(c)).cloned().collect()
    }

    /// Selection probability of each plaintext, computed from counts.
    pub fn plaintext_probs(&self, sk: &SecretKey, sample: &[Ciphertext]) -> [Ratio<u64>; 2] {
        let valid = self.pool(sample);
        let ones = valid.iter().filter(|c| sk.dec(&self.pk, c) == Some(true)).count() as u64;
        let total = valid.len() as u64 + 2 * self.k as u64;
        let k = self.k as u64;
        [
            Ratio::new(valid.len() as u64 - ones + k, total),
            Ratio::new(ones + k, total),
        ]
    }
}

pub fn dp_rand_enc(pk: &PublicKey, sample: &[Ciphertext], eps: f64, beta: f64, tape: &RandomTape) -> Result<Ciphertext, CryptoError> {
    Ok(DpRandEnc::new(pk.clone(), eps, beta, sample.len())?.run(sample, tape))
}

impl StatAlgorithm<Ciphertext> for DpRandEnc {
    type Output = Ciphertext;

    fn sample_size(&self) -> usize {
        self.m
    }

    fn run(&self, sample: &[Ciphertext], coins: &RandomTape) -> Ciphertext {
        let valid = self.pool(sample);
        let i = coins.derive(0).draw_below((valid.len() + 2 * self.k) as u64) as usize;
        let c = match i.checked_sub(valid.len()) {
            None => valid[i].clone(),
            Some(pad) => self.pk.enc(pad >= self.k, &mut coins.derive(1).derive(pad as u64)),
        };
        self.pk.rerandomize(&c, &mut coins.derive(2))
    }

    fn output_space(&self) -> Option<Vec<Ciphertext>> {
        self.pk.units().ok()
    }

    fn exact_output_distribution(&self, sample: &[Ciphertext]) -> Option<FiniteDistribution<Ciphertext>> {
        let valid = self.pool(sample);
        let w = 1.0 / (valid.len() + 2 * self.k) as f64;
        let one = BigUint::one();
        let mut acc: BTreeMap<Ciphertext, f64> = BTreeMap::new();
        let mut add = |c: &Ciphertext, weight: f64| -> Option<()> {
            for (o, p) in self.pk.rerandomize_distribution(c).ok()?.iter() {
                *acc.entry(o.clone()).or_default() += weight * p;
            }
            Some(())
        };
        for c in &valid {
            add(c, w)?;
        }
        add(&one, w * self.k as f64)?;
        add(&self.pk.x.clone(), w * self.k as f64)?;
        let (o, p) = acc.into_iter().unzip();
        FiniteDistribution::new(o, p).ok()
    }
}

/// A procedure `(pk, sample, coins) -> ciphertext`.
pub trait Solver: Sync {
    fn solve(&self, pk: &PublicKey, sample: &[Ciphertext], coins: &RandomTape) -> Ciphertext;
}

impl<F: Fn(&PublicKey, &[Ciphertext], &RandomTape) -> Ciphertext + Sync> Solver for F {
    fn solve(&self, pk: &PublicKey, sample: &[Ciphertext], coins: &RandomTape) -> Ciphertext {
        self(pk, sample, coins)
    }
}

/// Test-only solver that decrypts with the secret key and returns a
/// canonical encryption of the majority bit derived from its coins.
/// Always correct and perfectly replicable.
#[derive(Clone, Debug)]
pub struct CheatSolver {
    pub keys: GmKeys,
}

impl Solver for CheatSolver {
    fn solve(&self, pk: &PublicKey, sample: &[Ciphertext], coins: &RandomTape) -> Ciphertext {
        let (mut zeros, mut ones) = (0usize, 0usize);
        for c in sample {
            match self.keys.secret.dec(pk, c) {
                Some(true) => ones += 1,
                Some(false) => zeros += 1,
                None => {}
            }
        }
        let b = ones > zeros;
        pk.enc(b, &mut coins.derive(b as u64))
    }
}

/// Runs `alg` as a solver, ignoring the public key argument.
pub struct AlgorithmSolver<A>(pub A);

impl<A: StatAlgorithm<Ciphertext, Output = Ciphertext>> Solver for AlgorithmSolver<A> {
    fn solve(&self, _pk: &PublicKey, sample: &[Ciphertext], coins: &RandomTape) -> Ciphertext {
        self.0.run(sample, coins)
    }
}

/// Guesses the bit under `challenge`: `false` iff the solver gives the same
/// answer on rerandomizations of a fresh encryption of 0 and on
/// rerandomizations of the challenge, with shared coins `tape.derive(0)`.
pub fn adversary(pk: &PublicKey, challenge: &Ciphertext, solver: &impl Solver, m: usize, tape: &RandomTape) -> bool {
    let r = tape.derive(0);
    let c0 = pk.enc(false, &mut tape.derive(1));
    let s0: Vec<Ciphertext> = (0..m).map(|i| pk.rerandomize(&c0, &mut tape.derive(2).derive(i as u64))).collect();
    let y0 = solver.solve(pk, &s0, &r);
    let s: Vec<Ciphertext> = (0..m).map(|i| pk.rerandomize(challenge, &mut tape.derive(3).derive(i as u64))).collect();
    let y = solver.solve(pk, &s, &r);
    y0 != y
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    /// `Pr[guess 1 | challenge encrypts 1]`.
    pub hit: Estimate,
    /// `Pr[guess 1 | challenge encrypts 0]`.
    pub false_alarm: Estimate,
}

impl Advantage {
    pub fn value(&self) -> f64 {
        self.hit.rate - self.false_alarm.rate
    }

    pub fn half_width(&self) -> f64 {
        self.hit.half_width + self.false_alarm.half_width
    }
}

/// Adversary success rates over `trials` challenges of each bit. Trial `i`
/// for bit `b` encrypts with `tape.derive(b).derive(i).derive(0)` and runs
/// the adversary on `.derive(1)`.
pub fn measure_advantage(pk: &PublicKey, solver: &impl Solver, m: usize, trials: usize, tape: &RandomTape) -> Advantage {
    let rate = |b: bool| {
        let hits = par_map(trials, |i| {
            let t = tape.derive(b as u64).derive(i as u64);
            let c = pk.enc(b, &mut t.derive(0));
            adversary(pk, &c, solver, m, &t.derive(1))
        })
        .into_iter()
        .filter(|&g| g)
        .count();
        Estimate::from_counts(hits, trials)
    };
    Advantage {
        hit: rate(true),
        false_alarm: rate(false),
    }
}

/// Largest ratio `Pr[plaintext b | S] / Pr[plaintext b | S']` over
/// samples of size `m` and their replace-one neighbors. Samples are
/// summarized by (encryptions of 0, encryptions of 1, invalid), which
/// determines the selection probabilities.
pub fn max_selection_ratio(k: usize, m: usize) -> Ratio<u64> {
    let (k, m) = (k as u64, m as u64);
    let probs = |z: u64, o: u64| {
        let total = z + o + 2 * k;
        [Ratio::new(z + k, total), Ratio::new(o + k, total)]
    };
    let mut states = BTreeSet::new();
    for z in 0..=m {
        for o in 0..=m - z {
            states.insert((z, o, m - z - o));
        }
    }
    let mut worst = Ratio::from_integer(1);
    for &(z, o, bad) in &states {
        let here = probs(z, o);
        let c = [z, o, bad];
        for from in 0..3 {
            for to in 0..3 {
                if from == to || c[from] == 0 {
                    continue;
                }
                let mut d = c;
                d[from] -= 1;
                d[to] += 1;
                let there = probs(d[0], d[1]);
                for b in 0..2 {
                    worst = worst.max(here[b] / there[b]);
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys77() -> GmKeys {
        GmKeys::from_primes(7, 11, &RandomTape::from_u128(0)).unwrap()
    }

    #[test]
    fn four_bit_keys_use_eleven_and_thirteen() {
        let k = keygen(4, &RandomTape::from_u128(3)).unwrap();
        assert_eq!(k.public.n, BigUint::from(143u32));
        let mut ps = [k.secret.p, k.secret.q];
        ps.sort();
        assert_eq!(ps, [11, 13]);
        assert_eq!(k.dec(&k.public.x), Some(true));
        assert_eq!(keygen(3, &RandomTape::from_u128(0)), Err(CryptoError::PrimeBits(3)));
        assert_eq!(keygen(65, &RandomTape::from_u128(0)), Err(CryptoError::PrimeBits(65)));
    }

    #[test]
    fn round_trip_and_gcd_case() {
        let k = keygen(16, &RandomTape::from_u128(9)).unwrap();
        let mut t = RandomTape::from_u128(1);
        for i in 0..100 {
            let b = i % 3 == 0;
            let c = k.public.enc(b, &mut t);
            assert_eq!(k.dec(&c), Some(b));
            assert_eq!(k.dec(&k.public.rerandomize(&c, &mut t)), Some(b));
        }
        let p = BigUint::from(k.secret.p);
        assert!(!k.public.verify(&p));
        assert_eq!(k.dec(&p), None);
    }

    #[test]
    fn keygen_is_deterministic() {
        let t = RandomTape::from_u128(44);
        assert_eq!(keygen(32, &t).unwrap(), keygen(32, &t).unwrap());
    }

    #[test]
    fn jacobi_matches_legendre_product() {
        for n in [15u64, 21, 77, 143] {
            let f: Vec<u64> = (3..n).filter(|p| n % p == 0 && is_odd_prime(*p)).collect();
            for a in 0..n {
                let leg = |p: u64| -> i8 {
                    if a % p == 0 {
                        0
                    } else if is_residue_mod(&BigUint::from(a), p) {
                        1
                    } else {
                        -1
                    }
                };
                assert_eq!(jacobi(&BigUint::from(a), &BigUint::from(n)), leg(f[0]) * leg(f[1]), "{a}/{n}");
            }
        }
    }

    #[test]
    fn jacobi_minus_one_units_are_dropped() {
        let k = keys77();
        let odd = (1..77u32).map(BigUint::from).find(|c| k.public.verify(c) && jacobi(c, &k.public.n) == -1).unwrap();
        let alg = DpRandEnc::with_k(k.public.clone(), 2, 1);
        let with = alg.exact_output_distribution(std::slice::from_ref(&odd)).unwrap();
        let without = alg.exact_output_distribution(&[BigUint::from(7u32)]).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn selection_ratio_at_k2_m6() {
        assert_eq!(max_selection_ratio(2, 6), Ratio::new(3, 2));
        assert_eq!(max_selection_ratio(1, 1), Ratio::new(2, 1));
    }

    #[test]
    fn all_invalid_sample_uses_pads() {
        let k = keys77();
        let alg = DpRandEnc::with_k(k.public.clone(), 2, 3);
        let bad = vec![BigUint::from(7u32), BigUint::from(11u32), BigUint::from(14u32)];
        let d = alg.exact_output_distribution(&bad).unwrap();
        let ones: f64 = d.iter().filter(|(c, _)| k.dec(c) == Some(true)).map(|(_, p)| p).sum();
        assert!((ones - 0.5).abs() < 1e-12);
        assert_eq!(alg.plaintext_probs(&k.secret, &bad), [Ratio::new(1, 2), Ratio::new(1, 2)]);
    }

    #[test]
    fn params_checked() {
        let pk = keys77().public;
        assert!(DpRandEnc::new(pk.clone(), 0.5, 0.34, 6).is_ok());
        assert!(matches!(DpRandEnc::new(pk.clone(), 0.5, 0.2, 6), Err(CryptoError::Param { name: "m", .. })));
        assert!(matches!(DpRandEnc::new(pk, 0.0, 0.2, 6), Err(CryptoError::Param { name: "eps", .. })));
    }
}

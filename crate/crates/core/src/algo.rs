//! Interfaces shared by the learners and the transforms.
//!
//! Algorithms separate their internal coins (a `RandomTape` passed to
//! `run`) from the data they consume, so two runs can share coins while
//! seeing independent samples.

use std::fmt::Debug;
use std::hash::{Hash, Hasher};

use crate::dist::FiniteDistribution;
use crate::tape::RandomTape;

/// Sample access to a data distribution. All randomness comes from `tape`.
pub trait SampleSource<X>: Sync {
    fn draw(&self, tape: &mut RandomTape) -> X;

    fn draw_n(&self, n: usize, tape: &mut RandomTape) -> Vec<X> {
        (0..n).map(|_| self.draw(tape)).collect()
    }
}

impl<T: Ord + Clone + Sync> SampleSource<T> for FiniteDistribution<T> {
    fn draw(&self, tape: &mut RandomTape) -> T {
        self.sample(tape)
    }
}

/// A randomized algorithm over i.i.d. samples of a fixed size.
pub trait StatAlgorithm<X>: Sync {
    type Output: Clone + Ord + Hash + Debug + Send + Sync;

    fn sample_size(&self) -> usize;

    /// Deterministic in `(sample, coins)`.
    fn run(&self, sample: &[X], coins: &RandomTape) -> Self::Output;

    /// Finite set containing every possible output, if known.
    fn output_space(&self) -> Option<Vec<Self::Output>> {
        None
    }

    /// Exact distribution of `run(sample, ·)` over uniformly random coins.
    fn exact_output_distribution(&self, _sample: &[X]) -> Option<FiniteDistribution<Self::Output>> {
        None
    }
}

impl<X, A: StatAlgorithm<X> + ?Sized> StatAlgorithm<X> for &A {
    type Output = A::Output;

    fn sample_size(&self) -> usize {
        (**self).sample_size()
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> Self::Output {
        (**self).run(sample, coins)
    }

    fn output_space(&self) -> Option<Vec<Self::Output>> {
        (**self).output_space()
    }

    fn exact_output_distribution(&self, sample: &[X]) -> Option<FiniteDistribution<Self::Output>> {
        (**self).exact_output_distribution(sample)
    }
}

/// Adapts a closure into a `StatAlgorithm`.
#[derive(Clone)]
pub struct FnAlgorithm<F> {
    n: usize,
    f: F,
}

impl<F> FnAlgorithm<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnAlgorithm { n, f }
    }
}

impl<X, Y, F> StatAlgorithm<X> for FnAlgorithm<F>
where
    Y: Clone + Ord + Hash + Debug + Send + Sync,
    F: Fn(&[X], &RandomTape) -> Y + Sync,
{
    type Output = Y;

    fn sample_size(&self) -> usize {
        self.n
    }

    fn run(&self, sample: &[X], coins: &RandomTape) -> Y {
        (self.f)(sample, coins)
    }
}

/// Draws one sample for `alg` from `data` and runs it.
pub fn run_on<X, A: StatAlgorithm<X>>(
    alg: &A,
    data: &impl SampleSource<X>,
    coins: &RandomTape,
    samples: &mut RandomTape,
) -> A::Output {
    let s = data.draw_n(alg.sample_size(), samples);
    alg.run(&s, coins)
}

/// A distribution over finite subsets of the universe `0..universe_size`.
pub trait SubsetSampler: Sync {
    fn universe_size(&self) -> usize;

    /// Upper bound on the size of any drawn subset.
    fn max_size(&self) -> usize;

    /// Sorted, duplicate-free subset.
    fn draw(&self, tape: &mut RandomTape) -> Vec<usize>;
}

/// `splitmix64` finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct KeyedHasher(u64);

impl Hasher for KeyedHasher {
    fn finish(&self) -> u64 {
        mix64(self.0)
    }

    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            self.0 = mix64(self.0 ^ u64::from_le_bytes(w)).wrapping_add(chunk.len() as u64);
        }
    }
}

/// A hash of `v` keyed by `key`. Used to pick from a set in an order that
/// depends only on the key, not on how the set was assembled.
pub fn keyed_hash<T: Hash + ?Sized>(key: u64, v: &T) -> u64 {
    let mut h = KeyedHasher(mix64(key));
    v.hash(&mut h);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fn_algorithm_and_sources() {
        let d = FiniteDistribution::uniform(vec![1u8, 2, 3]).unwrap();
        let alg = FnAlgorithm::new(4, |s: &[u8], _: &RandomTape| s.iter().map(|&x| u32::from(x)).sum::<u32>());
        let coins = RandomTape::from_u128(0);
        let a = run_on(&alg, &d, &coins, &mut RandomTape::from_u128(1));
        let b = run_on(&alg, &d, &coins, &mut RandomTape::from_u128(1));
        assert_eq!(a, b);
        assert!((4..=12).contains(&a));
    }

    #[test]
    fn keyed_hash_depends_on_key() {
        assert_eq!(keyed_hash(1, &5u32), keyed_hash(1, &5u32));
        assert_ne!(keyed_hash(1, &5u32), keyed_hash(2, &5u32));
        assert_ne!(keyed_hash(1, &5u32), keyed_hash(1, &6u32));
    }
}

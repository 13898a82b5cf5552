//! Seeded random number generation.
//!
//! The generator is xoshiro256** seeded through SplitMix64, so a given
//! 64-bit seed produces the same sequence on every platform. Normal
//! deviates use the Box–Muller transform; Poisson deviates come from
//! `rand_distr` driven by the same stream.

use std::convert::Infallible;

use rand_distr::{Distribution, Poisson};
use rand_xoshiro::rand_core::{SeedableRng, TryRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};

/// Name of the algorithm, recorded in manifests.
pub const RNG_ALGORITHM: &str = "splitmix64+xoshiro256**";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    /// Derivation key: the seed at the root, then one mix per `derive`.
    key: u64,
    inner: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream: 0,
            key: seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent generator for sub-stream `stream` of this generator's seed.
    ///
    /// Derived streams depend only on the derivation path from the root
    /// seed, never on how many draws the parent has made.
    pub fn derive(&self, stream: u64) -> Rng {
        let mixed = splitmix(self.key ^ splitmix(stream.wrapping_add(0xA076_1D64_78BD_642F)));
        Rng {
            seed: self.seed,
            stream,
            key: mixed,
            inner: Xoshiro256StarStar::seed_from_u64(mixed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        match self.inner.try_next_u64() {
            Ok(v) => v,
        }
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's widening multiply with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal deviate via Box–Muller; the second value of each pair
    /// is kept for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        let (a, b) = self.normal_pair();
        self.spare_normal = Some(b);
        a
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phase = 2.0 * std::f64::consts::PI * u2;
        (r * phase.cos(), r * phase.sin())
    }

    pub fn poisson(&mut self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let dist = Poisson::new(lambda)
            .map_err(|e| Error::InvalidArgument(format!("poisson rate {lambda}: {e}")))?;
        Ok(dist.sample(self))
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl TryRng for Rng {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> std::result::Result<u32, Infallible> {
        self.inner.try_next_u32()
    }

    fn try_next_u64(&mut self) -> std::result::Result<u64, Infallible> {
        self.inner.try_next_u64()
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> std::result::Result<(), Infallible> {
        self.inner.try_fill_bytes(dst)
    }
}

/// `n` i.i.d. zero-mean normal samples with standard deviation `sigma`.
pub fn gaussian(rng: &mut Rng, n: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok((0..n).map(|_| sigma * rng.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zeros() {
        let mut rng = Rng::new(1);
        assert_eq!(gaussian(&mut rng, 5, 0.0).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = Rng::new(1);
        assert!(gaussian(&mut rng, 5, -1.0).is_err());
        assert!(gaussian(&mut rng, 5, f64::NAN).is_err());
    }

    #[test]
    fn equal_seeds_agree_on_long_sequences() {
        let mut a = Rng::new(0xDEAD_BEEF);
        let mut b = Rng::new(0xDEAD_BEEF);
        for _ in 0..100_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let ga = gaussian(&mut a, 1000, 1.0).unwrap();
        let gb = gaussian(&mut b, 1000, 1.0).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn matches_reference_xoshiro256starstar() {
        // Independent transcription of SplitMix64 seeding + xoshiro256**.
        let mut sm = 12345u64;
        let mut next_sm = || {
            sm = sm.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let mut s = [next_sm(), next_sm(), next_sm(), next_sm()];
        let mut rng = Rng::new(12345);
        for _ in 0..1000 {
            let expected = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
            let t = s[1] << 17;
            s[2] ^= s[0];
            s[3] ^= s[1];
            s[1] ^= s[2];
            s[0] ^= s[3];
            s[2] ^= t;
            s[3] = s[3].rotate_left(45);
            assert_eq!(rng.next_u64(), expected);
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let mut rng = Rng::new(42);
        let n = 1_000_000;
        let samples = gaussian(&mut rng, n, 1.0).unwrap();
        let mean = samples.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let mut parent = Rng::new(7);
        let a = parent.derive(3).next_u64();
        parent.next_u64();
        assert_eq!(a, parent.derive(3).next_u64());
        assert_ne!(a, parent.derive(4).next_u64());
    }

    #[test]
    fn nested_streams_differ_from_top_level_ones() {
        let root = Rng::new(7);
        let nested = root.derive(100).derive(3).next_u64();
        assert_ne!(nested, root.derive(3).next_u64());
        assert_ne!(nested, root.derive(101).derive(3).next_u64());
        assert_eq!(nested, Rng::new(7).derive(100).derive(3).next_u64());
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Rng::new(9);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[rng.below(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn poisson_mean() {
        let mut rng = Rng::new(5);
        let n = 20_000;
        let mean = (0..n).map(|_| rng.poisson(50.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 4.0 * (50.0f64 / n as f64).sqrt());
    }
}

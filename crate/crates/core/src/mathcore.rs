//! Numeric primitives shared by every other module.
//!
//! Angles are radians everywhere; decibels only appear at reporting edges.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};

pub type Complex = num_complex::Complex64;

/// `10·log10(power_ratio)`.
pub fn db(power_ratio: f64) -> Result<f64> {
    if !(power_ratio > 0.0) {
        return Err(domain(format!("db() needs a positive ratio, got {power_ratio}")));
    }
    Ok(10.0 * power_ratio.log10())
}

/// Inverse of [`db`].
pub fn undb(value_db: f64) -> f64 {
    10f64.powf(value_db / 10.0)
}

/// Power of a complex coefficient in dB; `-inf` for an exact zero.
pub fn power_db(value: Complex) -> f64 {
    let p = value.norm_sqr();
    if p > 0.0 {
        10.0 * p.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut p = phase.rem_euclid(two_pi);
    if p > std::f64::consts::PI {
        p -= two_pi;
    }
    p
}

/// Mean resultant length `R̄ = |mean e^{jθ}|`.
pub fn mean_resultant_length(phases: &[f64]) -> Result<f64> {
    if phases.is_empty() {
        return Err(domain("mean resultant length of an empty phase list"));
    }
    let sum: Complex = phases.iter().map(|&p| Complex::from_polar(1.0, p)).sum();
    Ok(sum.norm() / phases.len() as f64)
}

/// Circular standard deviation `sqrt(-2 ln R̄)` (Mardia).
///
/// Returns `+inf` when the phasors cancel exactly.
pub fn circular_std(phases: &[f64]) -> Result<f64> {
    let r = mean_resultant_length(phases)?;
    // Rounding can push R̄ a hair above 1 for identical phases.
    let r = r.min(1.0);
    if r <= 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok((-2.0 * r.ln()).max(0.0).sqrt())
}

/// A reproducible, splittable random source.
///
/// Backed by ChaCha8, which is counter based: the pair `(seed, stream_id)`
/// fully determines the sequence, so every sweep point can be replayed in
/// isolation and in any order.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `(seed, stream_id, child)`.
    ///
    /// Independent of how many samples the parent has consumed.
    pub fn fork(&self, child: u64) -> RandomStream {
        let derived = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5EED)));
        RandomStream::new(derived, child)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire-style rejection keeps the draw unbiased.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Geometric sample on `{1, 2, ...}` with the given mean (clamped to ≥ 1).
    pub fn geometric(&mut self, mean: f64) -> usize {
        if mean <= 1.0 {
            return 1;
        }
        let p = 1.0 / mean;
        let u = 1.0 - self.uniform();
        (u.ln() / (1.0 - p).ln()).floor() as usize + 1
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Circularly-symmetric complex Gaussian `CN(0, variance)`.
pub fn sample_complex_gaussian(stream: &mut RandomStream, variance: f64) -> Result<Complex> {
    if !(variance >= 0.0) {
        return Err(domain(format!("negative variance {variance}")));
    }
    if variance == 0.0 {
        return Ok(Complex::new(0.0, 0.0));
    }
    let s = (variance / 2.0).sqrt();
    Ok(Complex::new(
        s * stream.standard_normal(),
        s * stream.standard_normal(),
    ))
}

/// Unit-variance `CN(0, 1)`, infallible shorthand used in hot loops.
pub(crate) fn cn1(stream: &mut RandomStream) -> Complex {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(s * stream.standard_normal(), s * stream.standard_normal())
}

#[cfg(test)]
mod tests {
    use super::{
        circular_std, db, sample_complex_gaussian, undb, wrap_phase, Complex, RandomStream, RngCore,
    };
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn db_examples() {
        assert_eq!(db(1.0).unwrap(), 0.0);
        assert!((db(100.0).unwrap() - 20.0).abs() < 1e-12);
        assert!((db(0.25).unwrap() - (-6.0206)).abs() < 1e-4);
        assert!(db(0.0).is_err());
        assert!(db(-1.0).is_err());
        assert!(db(f64::NAN).is_err());
    }

    #[test]
    fn circular_std_examples() {
        assert_eq!(circular_std(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert!(circular_std(&[0.0, PI / 2.0, PI, 1.5 * PI]).unwrap().is_infinite());
        let expected = (-2.0 * (0.1f64).cos().ln()).sqrt();
        assert!((circular_std(&[0.0, 0.2]).unwrap() - expected).abs() < 1e-12);
        assert!(circular_std(&[]).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn complex_gaussian_variance() {
        let mut s = RandomStream::new(11, 0);
        assert_eq!(sample_complex_gaussian(&mut s, 0.0).unwrap(), Complex::new(0.0, 0.0));
        assert!(sample_complex_gaussian(&mut s, -1.0).is_err());
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_complex_gaussian(&mut s, 1.0).unwrap().norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean |z|^2 = {mean}");
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let mut a = RandomStream::new(42, 7);
        let mut b = RandomStream::new(42, 7);
        assert_eq!(
            sample_complex_gaussian(&mut a, 1.0).unwrap(),
            sample_complex_gaussian(&mut b, 1.0).unwrap()
        );

        let mut x = RandomStream::new(42, 1);
        let mut y = RandomStream::new(42, 2);
        let n = 100_000;
        let mut acc = Complex::new(0.0, 0.0);
        for _ in 0..n {
            let u = sample_complex_gaussian(&mut x, 1.0).unwrap();
            let v = sample_complex_gaussian(&mut y, 1.0).unwrap();
            acc += u * v.conj();
        }
        let corr = acc.norm() / n as f64;
        assert!(corr < 0.01, "cross-correlation {corr}");
    }

    #[test]
    fn fork_ignores_parent_position() {
        let parent = RandomStream::new(3, 4);
        let mut advanced = parent.clone();
        for _ in 0..10 {
            advanced.next_u64();
        }
        assert_eq!(parent.fork(9).next_u64(), advanced.fork(9).next_u64());
        assert_ne!(parent.fork(9).next_u64(), parent.fork(10).next_u64());
    }

    #[test]
    fn geometric_mean() {
        let mut s = RandomStream::new(5, 5);
        let n = 200_000;
        let m = (0..n).map(|_| s.geometric(8.0)).sum::<usize>() as f64 / n as f64;
        assert!((m - 8.0).abs() < 0.1, "geometric mean {m}");
        assert_eq!(s.geometric(0.5), 1);
    }

    proptest! {
        #[test]
        fn db_round_trip(exp in -9.0f64..9.0) {
            let x = 10f64.powf(exp);
            let back = undb(db(x).unwrap());
            prop_assert!(((back - x) / x).abs() < 1e-12);
        }

        #[test]
        fn circular_std_offset_invariant(
            phases in prop::collection::vec(-3.0f64..3.0, 1..20),
            offset in -10.0f64..10.0,
        ) {
            let base = circular_std(&phases).unwrap();
            let shifted: Vec<f64> = phases.iter().map(|p| p + offset).collect();
            let moved = circular_std(&shifted).unwrap();
            // near R̄ = 1 the square root turns 1e-16 rounding into ~1e-8
            if base.is_finite() && base < 5.0 {
                prop_assert!((base - moved).abs() < 1e-7);
            }
        }
    }
}

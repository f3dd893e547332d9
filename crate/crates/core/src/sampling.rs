//! Seedable random streams and the orthogonal mirrored-direction sampler.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::linalg::{gram_schmidt, RealVector};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A deterministic random stream keyed by a 64-bit seed.
///
/// Backed by ChaCha20, which is counter-based and gives identical output on
/// every platform for the same seed. Gaussians use the Marsaglia polar method
/// and cache the second variate of each accepted pair.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, deterministic in `(seed, index)`.
    /// Does not advance `self`.
    pub fn split(&self, index: u64) -> Self {
        Self::new(splitmix64(splitmix64(self.seed) ^ splitmix64(index.wrapping_add(1) << 1)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }
}

pub fn standard_normal_vector(rng: &mut RngStream, d: usize) -> RealVector {
    RealVector::from_vec_unchecked((0..d).map(|_| rng.standard_normal()).collect())
}

/// `d` mutually orthogonal vectors whose norms are those of `d` independent
/// Gaussian draws.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalSampleBlock {
    directions: Vec<RealVector>,
    units: Vec<RealVector>,
    norms: Vec<f64>,
}

impl OrthogonalSampleBlock {
    /// Builds a block from already-orthonormal unit vectors and their lengths.
    pub fn from_units(units: Vec<RealVector>, norms: Vec<f64>) -> Self {
        assert_eq!(units.len(), norms.len());
        let directions = units.iter().zip(&norms).map(|(u, n)| u.scaled(*n)).collect();
        Self {
            directions,
            units,
            norms,
        }
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// The scaled vectors `b_i`.
    pub fn directions(&self) -> &[RealVector] {
        &self.directions
    }

    /// The unit vectors `b_i / |b_i|`.
    pub fn units(&self) -> &[RealVector] {
        &self.units
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

pub fn sample_orthogonal(rng: &mut RngStream, d: usize) -> OrthogonalSampleBlock {
    assert!(d >= 1, "dimension must be positive");
    loop {
        let raw: Vec<RealVector> = (0..d).map(|_| standard_normal_vector(rng, d)).collect();
        let norms: Vec<f64> = raw.iter().map(|z| z.norm()).collect();
        // A degenerate draw has probability zero; take the next block.
        if let Ok(units) = gram_schmidt(&raw) {
            return OrthogonalSampleBlock::from_units(units, norms);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn identical_seeds_give_identical_streams() {
        let a = standard_normal_vector(&mut RngStream::new(42), 4);
        let b = standard_normal_vector(&mut RngStream::new(42), 4);
        assert_eq!(a, b);
        let c = standard_normal_vector(&mut RngStream::new(43), 4);
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_deterministic_and_distinct() {
        let root = RngStream::new(7);
        let mut a = root.split(3);
        let mut b = root.split(3);
        let mut c = root.split(4);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_ne!(x, RngStream::new(7).next_u64());
    }

    #[test]
    fn vector_has_requested_finite_entries() {
        let v = standard_normal_vector(&mut RngStream::new(1), 3);
        assert_eq!(v.dim(), 3);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    #[test]
    fn one_dimensional_block_is_the_raw_draw() {
        let block = sample_orthogonal(&mut RngStream::new(9), 1);
        let raw = standard_normal_vector(&mut RngStream::new(9), 1);
        assert!((block.directions()[0][0] - raw[0]).abs() < 1e-15);
    }

    #[test]
    fn block_is_orthogonal_with_restored_norms() {
        for seed in 0..50 {
            let mut rng = RngStream::new(seed);
            let block = sample_orthogonal(&mut rng, 5);
            let b = block.directions();
            for i in 0..5 {
                assert!((b[i].norm() - block.norms()[i]).abs() < 1e-10);
                for j in 0..i {
                    assert!(b[i].dot(&b[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn block_consumes_exactly_d_gaussian_vectors() {
        let mut a = RngStream::new(77);
        let mut b = RngStream::new(77);
        sample_orthogonal(&mut a, 6);
        for _ in 0..6 {
            standard_normal_vector(&mut b, 6);
        }
        assert_eq!(a.standard_normal(), b.standard_normal());
    }

    #[test]
    fn squared_norms_have_chi_square_mean() {
        let mut rng = RngStream::new(5);
        let d = 10;
        let blocks = 10_000;
        let mut sums = vec![0.0; d];
        for _ in 0..blocks {
            let block = sample_orthogonal(&mut rng, d);
            for (s, n) in sums.iter_mut().zip(block.norms()) {
                *s += n * n;
            }
        }
        for s in sums {
            let mean = s / blocks as f64;
            assert!((mean - 10.0).abs() < 0.3, "mean {mean}");
        }
    }

    #[test]
    fn norms_follow_chi_distribution() {
        // Kolmogorov-Smirnov against chi(d) via P(|z| <= r) = F_chi2(r^2).
        let d = 4;
        let n = 10_000;
        let chi2 = ChiSquared::new(d as f64).unwrap();
        let mut rng = RngStream::new(31);
        for index in [0, d - 1] {
            let mut r: Vec<f64> = (0..n)
                .map(|_| sample_orthogonal(&mut rng, d).norms()[index])
                .collect();
            r.sort_by(f64::total_cmp);
            let ks = r
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let f = chi2.cdf(x * x);
                    (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            // Critical value at alpha = 0.01.
            let critical = 1.628 / (n as f64).sqrt();
            assert!(ks < critical, "KS statistic {ks} for index {index}");
        }
    }

    #[test]
    fn first_direction_is_isotropic() {
        let d = 3;
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let block = sample_orthogonal(&mut rng, d);
            for (m, u) in mean.iter_mut().zip(block.units()[0].iter()) {
                *m += u / n as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.02), "{mean:?}");
    }
}

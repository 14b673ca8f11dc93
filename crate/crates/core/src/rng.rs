//! Seeded random number generation.
//!
//! The bit source is ChaCha20 keyed from the 64-bit seed, which is specified
//! independently of platform and word size. Uniform doubles take the top 53
//! bits of a `u64`. Gaussian variates use the Marsaglia polar method: pairs of
//! uniforms in the unit disc are rejection-sampled and transformed, and the
//! second variate of each pair is cached for the next call. The cache is part
//! of the generator state, so a given seed always yields the same sequence.
//!
//! This generator is for reproducible experiments, not for production privacy:
//! a seeded stream is predictable by anyone who knows the seed.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent generator for a named sub-stream.
    ///
    /// Used so that, e.g., data generation and noise draws do not consume
    /// from each other's sequences.
    pub fn fork(&self, stream: u64) -> Rng {
        let mixed = splitmix64(self.seed ^ splitmix64(stream.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Rng::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`, unbiased (rejection on the top zone).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// One standard normal variate (Marsaglia polar method).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }

    /// Index drawn from a discrete distribution given by `probs` (need not be normalised).
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &p) in probs.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        // Rounding can leave u marginally above the last bucket.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. zero-mean Gaussian samples with standard deviation `std`.
pub fn gaussian<T: Scalar>(rng: &mut Rng, std: f64, shape: &[usize]) -> Result<Tensor<T>> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::arg(format!("standard deviation must be finite and >= 0, got {std}")));
    }
    let n: usize = shape.iter().product();
    if std == 0.0 {
        return Ok(Tensor::zeros(shape));
    }
    let data = (0..n)
        .map(|_| T::from_f64_lossy(std * rng.standard_normal()))
        .collect();
    Tensor::from_vec(shape, data)
}

//! Counter-based random streams built on the SplitMix64 finalizer.
//!
//! A stream is keyed by `(seed, stream_id)`:
//!
//! ```text
//! key    = mix64(seed ^ mix64(stream_id ^ 0x6A09E667F3BCC909))
//! out[i] = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//! mix64(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!           z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!           z ^ (z >> 31)
//! ```
//!
//! All arithmetic is wrapping `u64`, so sequences are identical on every
//! platform. Child streams are derived with [`RngStream::split`] rather than
//! by sharing state.

use crate::error::{Error, Result};
use crate::numerics::Vector;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0x6A09_E667_F3BC_C909;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            key: mix64(seed ^ mix64(stream ^ STREAM_SALT)),
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent child stream; does not advance `self`.
    pub fn split(&self, id: u64) -> RngStream {
        RngStream::new(self.key, id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; bias is < n / 2^64.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Element `i` is 1 with probability `p[i]`, else 0.
pub fn bernoulli_vector(rng: &mut RngStream, p: &[f64]) -> Result<Vector> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(
            "probability",
            format!("p[{i}] = {v} is outside [0, 1]"),
        ));
    }
    Ok(p.iter()
        .map(|&pi| if rng.bernoulli(pi) { 1.0 } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sequence_is_pinned() {
        // Frozen outputs; any change to the mixing constants breaks reproducibility.
        let mut rng = RngStream::new(42, 0);
        let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        let mut again = RngStream::new(42, 0);
        let second: Vec<u64> = (0..3).map(|_| again.next_u64()).collect();
        assert_eq!(first, second);
        assert_eq!(first, PINNED.to_vec());
    }

    // Computed with an independent Python transcription of the mixing function.
    const PINNED: [u64; 3] = [0x737e_3392_d1dc_ad82, 0xc3d8_92a4_232e_b20d, 0x4ae6_8a86_25c9_c767];

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let same = (0..1000).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
        // Pearson correlation of uniforms across streams stays near zero.
        let (mut a, mut b) = (RngStream::new(9, 3), RngStream::new(9, 4));
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.uniform() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!((cov / (1.0 / 12.0)).abs() < 0.02);
    }

    #[test]
    fn bernoulli_degenerate_probabilities() {
        let mut rng = RngStream::new(3, 0);
        let ones = bernoulli_vector(&mut rng, &[1.0; 100]).unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));
        let zeros = bernoulli_vector(&mut rng, &[0.0; 100]).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bernoulli_half_mean() {
        let mut rng = RngStream::new(2024, 11);
        let mask = bernoulli_vector(&mut rng, &vec![0.5; 1_000_000]).unwrap();
        let mean = mask.iter().sum::<f64>() / mask.len() as f64;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
    }

    #[test]
    fn bernoulli_rejects_bad_probability() {
        let mut rng = RngStream::new(0, 0);
        assert!(bernoulli_vector(&mut rng, &[0.5, 1.5]).is_err());
        assert!(bernoulli_vector(&mut rng, &[-0.1]).is_err());
        assert!(bernoulli_vector(&mut rng, &[f64::NAN]).is_err());
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(5, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut rng = RngStream::new(8, 0);
        let mut v: Vec<usize> = (0..100).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Counter-based generator; `substream(k)` gives reproducible independent streams.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha12Rng,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Circular complex Gaussian with `E|z|^2 = var`.
    pub fn complex_gaussian(&mut self, var: f64) -> C64 {
        let s = (var / 2.0).sqrt();
        let re: f64 = self.inner.sample(StandardNormal);
        let im: f64 = self.inner.sample(StandardNormal);
        C64::new(re * s, im * s)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn index(&mut self, m: usize) -> usize {
        self.inner.gen_range(0..m)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::substream(9, 3);
        let mut b = SeededRng::substream(9, 3);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_differ() {
        let mut a = SeededRng::substream(9, 0);
        let mut b = SeededRng::substream(9, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn gaussian_variance() {
        let mut r = SeededRng::new(1);
        let n = 200_000;
        let v: f64 = (0..n).map(|_| r.complex_gaussian(0.3).norm_sqr()).sum::<f64>() / n as f64;
        assert!((v - 0.3).abs() < 0.005);
    }
}

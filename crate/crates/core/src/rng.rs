//! Seeded random streams.
//!
//! `RngStream` wraps ChaCha8 (a counter-based generator with a 64-bit stream
//! selector), so `(seed, stream)` yields the same sequence on every
//! platform. Parallel work never shares a stream; it derives children.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent stream for sub-task `id`. Depends only on this stream's
    /// identity, not on how many values were drawn from it.
    pub fn child(&self, id: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream ^ splitmix64(id.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Box–Muller: two uniforms per draw, cosine branch only.
    pub fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        let u1 = 1.0 - self.uniform01(); // (0, 1]
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        mu + sigma * r * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.gen_range(0..n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    /// Fisher–Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.below(i + 1);
            v.swap(i, j);
        }
    }
}

/// The distributions `rng_draw` can produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Draw {
    Uniform01(usize),
    Normal { mu: f64, sigma: f64, n: usize },
    Permutation(usize),
}

pub fn rng_draw(stream: &mut RngStream, dist: Draw) -> Vec<f64> {
    match dist {
        Draw::Uniform01(n) => (0..n).map(|_| stream.uniform01()).collect(),
        Draw::Normal { mu, sigma, n } => (0..n).map(|_| stream.normal(mu, sigma)).collect(),
        Draw::Permutation(n) => stream.permutation(n).into_iter().map(|i| i as f64).collect(),
    }
}

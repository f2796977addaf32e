//! Seeded PRNG used everywhere randomness is needed.
//!
//! SplitMix64: a 64-bit counter advanced by the golden-ratio increment and
//! passed through a finalizing mix (Steele, Lea & Flood 2014). Chosen over an
//! external generator so that every experiment is reproducible bit-for-bit
//! from the seeds recorded in run reports, independent of library versions or
//! language. Normal variates come from the Box–Muller transform.
//!
//! Independent streams are derived from a master seed and a stream tag so
//! that, for example, changing the epoch count never perturbs parameter
//! initialization.

use crate::scalar::Scalar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known stream tags; see [`Rng::stream`].
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const NOISE: u64 = 4;
    /// Reconstruction-time noise, kept apart from the training stream.
    pub const EVAL_NOISE: u64 = 5;
}

#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    /// Spare Box–Muller variate; the transform produces pairs.
    cached_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed,
            cached_normal: None,
        }
    }

    /// Derive the substream `tag` of `master`. Substreams with distinct tags
    /// are statistically independent of each other and of `Rng::new(master)`.
    pub fn stream(master: u64, tag: u64) -> Self {
        Rng::new(mix64(master ^ tag.wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on [0, 1), 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1], safe as a log argument.
    #[inline]
    fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [low, high).
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Standard normal via Box–Muller; pairs are generated and the second
    /// value is cached for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn standard_normal_scalar<S: Scalar>(&mut self) -> S {
        S::from_f64(self.standard_normal())
    }

    /// Index in [0, n). Modulo bias is below 2^-53 for the n used here.
    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Sample an index from a categorical distribution. `weights` must sum
    /// to 1 (validated where mixture tables are built).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

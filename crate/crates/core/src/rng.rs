//! Seedable random number generation.
//!
//! Every random draw in this crate flows through [`SeededRng`] so that a
//! fixed seed replays an experiment bit for bit. The generator is pinned by
//! algorithm, not by library: a splitmix64 stream expands the seed into the
//! 256-bit state of a xoshiro256** generator. Any port that implements the
//! same two algorithms reproduces the sequences exactly.

use crate::error::{Error, Result};

const DOUBLE_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator: splitmix64-seeded xoshiro256**.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
    draw_count: u64,
    gaussian_spare: Option<f64>,
}

impl SeededRng {
    /// Builds a generator whose entire future output is a pure function of
    /// `seed`.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        SeededRng {
            state,
            seed,
            draw_count: 0,
            gaussian_spare: None,
        }
    }

    /// The seed this generator was constructed with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of scalar draws emitted so far.
    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }

    /// Next raw 64-bit value (xoshiro256** step).
    pub fn next_u64(&mut self) -> u64 {
        let result = self.state[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.state[1] << 17;
        self.state[2] ^= self.state[0];
        self.state[3] ^= self.state[1];
        self.state[1] ^= self.state[2];
        self.state[0] ^= self.state[3];
        self.state[2] ^= t;
        self.state[3] = self.state[3].rotate_left(45);
        self.draw_count += 1;
        result
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * DOUBLE_SCALE
    }

    /// Uniform draw in [low, high).
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Uniform index in 0..n. Panics if n is 0.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        (self.next_u64() % n as u64) as usize
    }

    /// Gaussian draw via the paired Box-Muller transform. Both outputs of a
    /// pair are consumed in order (cosine first, sine second) so the draw
    /// sequence is unambiguous. `std == 0` returns `mean` exactly without
    /// consuming state.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        if std < 0.0 || !std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian std must be finite and >= 0, got {std}"
            )));
        }
        if std == 0.0 {
            return Ok(mean);
        }
        let z = match self.gaussian_spare.take() {
            Some(z) => z,
            None => {
                // u1 in (0, 1] keeps the log finite.
                let u1 = 1.0 - self.next_f64();
                let u2 = self.next_f64();
                let r = (-2.0 * u1.ln()).sqrt();
                let angle = 2.0 * std::f64::consts::PI * u2;
                self.gaussian_spare = Some(r * angle.sin());
                r * angle.cos()
            }
        };
        Ok(mean + std * z)
    }

    /// Fisher-Yates permutation of 0..n driven solely by this generator.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        self.shuffle(&mut perm);
        perm
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// A subset of `k` distinct indices from 0..n via partial Fisher-Yates.
    pub fn subset(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "subset size {k} exceeds pool size {n}"
            )));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

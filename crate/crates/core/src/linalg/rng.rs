//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, counter)`, so a stream can be
//! persisted as two integers and resumed bit-identically. Independent
//! consumers obtain their own stream through [`RngStream::split`].

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    /// Output at an arbitrary position without touching the stream.
    #[inline]
    pub fn value_at(seed: u64, counter: u64) -> u64 {
        mix64(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = Self::value_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Two independent standard normals (Box–Muller).
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Derives a child stream; the parent advances by one draw.
    pub fn split(&mut self) -> RngStream {
        RngStream::new(mix64(self.next_u64() ^ 0xD1B5_4A32_D192_ED03))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

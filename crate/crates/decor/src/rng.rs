//! Deterministic counter-based random streams.
//!
//! Every random quantity in this crate is a pure function of a 64-bit stream
//! key and a counter, so simulations are reproducible regardless of
//! evaluation order and safe to generate from multiple threads.
//!
//! The mixing function `H` used for key derivation is the splitmix64
//! finalizer applied to a chained Weyl sequence:
//!
//! ```text
//! H(key, p_1, ..., p_k) = s_k   where  s_0 = mix64(key ^ GOLDEN)
//!                                      s_i = mix64(s_{i-1}.wrapping_add(GOLDEN) ^ p_i)
//! mix64(z) = splitmix64 finalizer (xor-shift-multiply, constants below)
//! GOLDEN  = 0x9e3779b97f4a7c15
//! ```
//!
//! A stream keyed by `k` yields `u64` number `i` as
//! `mix64(k + (i + 1) * GOLDEN)`, i.e. the splitmix64 sequence seeded at `k`.
//! Gaussians come from the Box-Muller transform applied to consecutive
//! counter pairs, so coordinate `j` of a Gaussian vector depends only on the
//! key and the block index `j / 2`.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream key from a parent key and a sequence of parts (the
/// mixing function `H` from the module docs).
pub fn derive_key(key: u64, parts: &[u64]) -> u64 {
    let mut s = mix64(key ^ GOLDEN);
    for &p in parts {
        s = mix64(s.wrapping_add(GOLDEN) ^ p);
    }
    s
}

/// `i`-th raw output of the stream keyed by `key`.
#[inline]
pub fn stream_u64(key: u64, i: u64) -> u64 {
    mix64(key.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform f64 in `[0, 1)` from the top 53 bits of a stream output.
#[inline]
pub fn stream_uniform(key: u64, i: u64) -> f64 {
    (stream_u64(key, i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One Box-Muller pair of independent standard Gaussians for `block`.
///
/// The first uniform is shifted into `(0, 1]` so the logarithm is finite.
#[inline]
pub fn gaussian_pair(key: u64, block: u64) -> (f64, f64) {
    let a = stream_u64(key, 2 * block);
    let b = stream_u64(key, 2 * block + 1);
    let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

/// `d` i.i.d. Gaussians with standard deviation `sigma`.
pub fn gaussian_vector(key: u64, d: usize, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    let mut block = 0u64;
    while out.len() < d {
        let (z0, z1) = gaussian_pair(key, block);
        out.push(sigma * z0);
        if out.len() < d {
            out.push(sigma * z1);
        }
        block += 1;
    }
    out
}

/// Unbiased-enough index in `[0, m)` via 128-bit widening multiply.
#[inline]
pub fn stream_index(key: u64, i: u64, m: usize) -> usize {
    debug_assert!(m > 0);
    ((stream_u64(key, i) as u128 * m as u128) >> 64) as usize
}

/// Small stateful view over a stream, for shuffles and ad-hoc sampling.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    key: u64,
    counter: u64,
}

impl KeyedRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = stream_u64(self.key, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        let v = stream_uniform(self.key, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_index(&mut self, m: usize) -> usize {
        let v = stream_index(self.key, self.counter, m);
        self.counter += 1;
        v
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_index(i + 1);
            slice.swap(i, j);
        }
    }
}

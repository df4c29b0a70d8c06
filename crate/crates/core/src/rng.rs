//! Counter-based normal variates.
//!
//! Every variate is a pure function of `(seed, stream, path, step)`, so the
//! value drawn for a given path and step never depends on how paths are
//! partitioned across threads or how many paths are in the batch.
//!
//! Uniforms come from a SplitMix64-style avalanche over the packed key; the
//! normal transform is the inverse CDF (`-sqrt(2) * erfc_inv(2u)`), which is
//! monotone and easy to reproduce in other languages.

use statrs::function::erf::erfc_inv;

/// Stream tag for Brownian increments.
pub const STREAM_INCREMENTS: u64 = 0;
/// Stream tag for the bridge normals that refine a path between grid nodes.
pub const STREAM_BRIDGE: u64 = 1;
/// Stream tag for the residual normals of exact Ornstein-Uhlenbeck steps.
pub const STREAM_OU_RESIDUAL: u64 = 2;
/// Stream tag for sampled actions (policy evaluation in sampled mode).
pub const STREAM_ACTIONS: u64 = 3;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for a single variate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterKey {
    pub seed: u64,
    pub stream: u64,
    pub path: u64,
    pub step: u64,
}

impl CounterKey {
    pub fn new(seed: u64, stream: u64, path: u64, step: u64) -> Self {
        Self { seed, stream, path, step }
    }

    /// 64 well-mixed bits for this key.
    pub fn bits(&self) -> u64 {
        const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
        let mut h = mix64(self.seed ^ GOLDEN);
        h = mix64(h ^ self.stream.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019));
        h = mix64(h ^ self.path.wrapping_mul(0xd6e8_feb8_6659_fd93));
        mix64(h ^ self.step.wrapping_add(GOLDEN))
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&self) -> f64 {
        ((self.bits() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the inverse CDF.
    pub fn normal(&self) -> f64 {
        standard_normal_quantile(self.uniform())
    }
}

/// Quantile of the standard normal distribution for `u` in (0, 1).
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Sequential view over one `(seed, stream, path)` triple.
#[derive(Debug, Clone)]
pub struct NormalStream {
    seed: u64,
    stream: u64,
    path: u64,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64, path: u64) -> Self {
        Self { seed, stream, path }
    }

    pub fn at(&self, step: u64) -> f64 {
        CounterKey::new(self.seed, self.stream, self.path, step).normal()
    }
}

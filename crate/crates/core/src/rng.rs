//! Counter-based Gaussian noise streams.
//!
//! Each agent and replicate owns an independent stream keyed by
//! `(master_seed, agent, replicate)`. The `i`-th raw word of a stream is
//! `splitmix64(key + i·γ)`, so any draw can be produced without touching
//! other streams and results do not depend on evaluation order.

/// Weyl increment of SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream key for `(master_seed, agent, replicate)`.
pub fn stream_key(master_seed: u64, agent: u64, replicate: u64) -> u64 {
    let a = splitmix64(master_seed.wrapping_add(GOLDEN_GAMMA));
    let b = splitmix64(a ^ agent.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1));
    splitmix64(b ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(2))
}

/// Standard normal stream; normals come in Box–Muller pairs.
#[derive(Debug, Clone)]
pub struct NormalStream {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(master_seed: u64, agent: u64, replicate: u64) -> Self {
        Self::from_key(stream_key(master_seed, agent, replicate))
    }

    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0, spare: None }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_normal();
        }
    }
}

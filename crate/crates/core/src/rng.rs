//! Counter-keyed pseudo-random streams.
//!
//! Every consumer of randomness in this crate draws from a *stream* addressed
//! by `(master_seed, path_id, stream_id)`. The k-th word of a stream is a
//! pure function of the address and `k`, so any value can be regenerated
//! bit-identically regardless of evaluation order or thread count. This is
//! what makes coupled-path comparisons and byte-identical re-runs possible.
//!
//! Layout of stream ids per `(master_seed, path_id)`:
//!
//! * `0 ..= u32::MAX` — Brownian increment channels of [`crate::wiener`];
//! * [`FLASH_STREAM`] — collapse-event draws (categorical index + jitter);
//! * [`RESAMPLE_STREAM`] — bootstrap / resampling draws in ensemble studies.
//!
//! Normal variates use the Box-Muller transform (cosine branch, two words per
//! draw); this choice is fixed so that committed seeds stay meaningful.

/// Weyl increment of SplitMix64.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream id reserved for collapse-event sampling.
pub const FLASH_STREAM: u64 = 1 << 32;

/// Stream id reserved for bootstrap resampling.
pub const RESAMPLE_STREAM: u64 = (1 << 32) + 1;

/// SplitMix64 finalizer: avalanching 64-bit mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the key of the stream addressed by `(master_seed, path_id, stream_id)`.
#[inline]
pub fn stream_key(master_seed: u64, path_id: u64, stream_id: u64) -> u64 {
    let mut key = mix64(master_seed.wrapping_add(GAMMA));
    key = mix64(key ^ path_id.wrapping_add(GAMMA.wrapping_mul(2)));
    mix64(key ^ stream_id.wrapping_add(GAMMA.wrapping_mul(3)))
}

/// The k-th raw word of a stream: SplitMix64 seeded by the stream key.
#[inline]
pub fn word_at(key: u64, k: u64) -> u64 {
    mix64(key.wrapping_add(k.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// The k-th uniform in the half-open interval (0, 1).
#[inline]
pub fn uniform_at(key: u64, k: u64) -> f64 {
    // 53 high bits, offset by one half ulp: never exactly 0 or 1.
    ((word_at(key, k) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// The k-th standard normal draw of a stream.
///
/// Box-Muller, cosine branch: consumes words `2k` and `2k + 1`. The radial
/// uniform lives in (0, 1] so the logarithm is always finite.
#[inline]
pub fn normal_at(key: u64, k: u64) -> f64 {
    let u = ((word_at(key, 2 * k) >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let v = ((word_at(key, 2 * k + 1) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Stateful cursor over a single stream, for consumers that draw a variable
/// number of values (collapse sampling, bootstrap resampling).
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    uniform_pos: u64,
    normal_pos: u64,
}

impl CounterRng {
    pub fn new(master_seed: u64, path_id: u64, stream_id: u64) -> Self {
        CounterRng {
            key: stream_key(master_seed, path_id, stream_id),
            uniform_pos: 0,
            normal_pos: 0,
        }
    }

    /// Next uniform in (0, 1). Uniform and normal cursors are independent
    /// halves of the word space so interleaved draws stay reproducible.
    pub fn next_uniform(&mut self) -> f64 {
        let k = self.uniform_pos;
        self.uniform_pos += 1;
        uniform_at(self.key, 2 * k + 1) // odd words
    }

    /// Next standard normal draw.
    pub fn next_normal(&mut self) -> f64 {
        let k = self.normal_pos;
        self.normal_pos += 1;
        // Even words, disjoint from the uniform cursor's odd words.
        let u = ((word_at(self.key, 4 * k) >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let v = ((word_at(self.key, 4 * k + 2) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

//! Counter-based random number generation.
//!
//! Every stream is a pair `(key, counter)`. The `n`-th 64-bit output is a pure
//! function of the key and `n`:
//!
//! ```text
//! mix64(z):
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9     (wrapping)
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB     (wrapping)
//!     return z ^ (z >> 31)
//!
//! key(seed, stream_id) = mix64(seed ^ mix64(stream_id + 0x9E3779B97F4A7C15))
//! output(key, n)       = mix64(key ^ mix64(n))
//! child key(key, id)   = mix64(key ^ mix64(id + 0xD1B54A32D192ED03))
//! ```
//!
//! `mix64` is a bijection on `u64`, so a single stream never repeats within
//! 2^64 draws. Derived values:
//!
//! - uniform `f64` in `[0, 1)`: `(output >> 11) * 2^-53`
//! - uniform integer in `[0, n)`: `(output * n) >> 64` computed in 128 bits
//!   (bias at most `n / 2^64`)
//! - standard normal: Box-Muller on two consecutive uniforms `u1, u2`, with
//!   `r = sqrt(-2 ln(1 - u1))`; the cosine branch `r cos(2π u2)` is returned
//!   first and the sine branch `r sin(2π u2)` is cached for the next call.
//!
//! Named sub-streams use the 64-bit FNV-1a hash of the name as `stream_id`.

use crate::error::{Error, Result};
use crate::numerics::LatentVector;

const STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const CHILD_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn sub-stream names into stream ids.
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic, single-owner random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream {
            key: mix64(seed ^ mix64(stream.wrapping_add(STREAM_SALT))),
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        RngStream::new(seed, 0)
    }

    pub fn named(seed: u64, name: &str) -> Self {
        RngStream::new(seed, stream_id(name))
    }

    /// Independent child stream. Depends only on this stream's key, not on how
    /// far it has been advanced.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream {
            key: mix64(self.key ^ mix64(id.wrapping_add(CHILD_SALT))),
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn named_substream(&self, name: &str) -> RngStream {
        self.substream(stream_id(name))
    }

    /// Number of 64-bit outputs consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key ^ mix64(self.counter));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }
}

/// `n` i.i.d. standard normal draws.
pub fn sample_standard_normal(n: usize, rng: &mut RngStream) -> Result<LatentVector> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample_standard_normal: n must be >= 1".into(),
        ));
    }
    let mut data = vec![0.0; n];
    rng.fill_normal(&mut data);
    Ok(LatentVector::from_vec_unchecked(data))
}

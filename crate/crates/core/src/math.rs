//! Scalar kernels shared by every module: the two ℓ∞ nonlinearities,
//! standard-normal density and tail, and deterministic Gaussian sampling.
//!
//! `soft_threshold(x, ε)` is the symmetric ReLU `sign(x)·max(0, |x| − ε)`.
//! `clamp_complement(x, ε) = x − soft_threshold(x, ε)` is the projection of
//! `x` onto `[−ε, ε]`. Both are computed so that their sum reproduces `x`
//! bit-for-bit and the complement never leaves `[−ε, ε]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1/√(2π)
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Symmetric (double-sided) ReLU `g_ε(x)`.
///
/// `eps` must be non-negative; callers validate budgets when instances and
/// attacks are constructed.
#[inline]
pub fn soft_threshold(x: f64, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0, "negative threshold {eps}");
    let abs = x.abs();
    let mut mag = abs - eps;
    if mag <= 0.0 {
        return 0.0;
    }
    // `abs - mag` is exact here, so this detects a round-down of `mag` that
    // would push the complement past ε.
    if abs - mag > eps {
        mag = mag.next_up();
    }
    mag.copysign(x)
}

/// Complement `f_ε(x) = x − g_ε(x)`, i.e. `x` clamped to `[−ε, ε]`.
#[inline]
pub fn clamp_complement(x: f64, eps: f64) -> f64 {
    x - soft_threshold(x, eps)
}

/// Standard-normal upper tail `Q(x) = P(Z > x)`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard-normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Descriptor of one independent Gaussian stream.
///
/// A `(master_seed, stream_index)` pair always yields the same sequence, no
/// matter which worker consumes it or in what order streams are opened. The
/// pair keys a ChaCha8 generator: the seed selects the key and the index
/// selects the 64-bit stream (nonce), so the construction is counter based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Fill `out` with independent `N(0, σ²)` draws.
#[inline]
pub(crate) fn fill_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, sigma: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sigma * z;
    }
}

/// `d` independent `N(0, σ²)` draws from `stream`.
pub fn sample_gaussian_vector(stream: RandomStream, d: usize, sigma: f64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("must be positive and finite, got {sigma}"),
        ));
    }
    let mut out = vec![0.0; d];
    fill_gaussian(&mut stream.rng(), sigma, &mut out);
    Ok(out)
}

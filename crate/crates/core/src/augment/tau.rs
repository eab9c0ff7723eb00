//! The τ-noise density `P(x) = e^{e^{−x²}} / (e^{e^{x²}} + e^{e^{−x²}})` and
//! a rejection sampler for it.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use crate::rng::StreamRng;

use crate::error::{Error, Result};

/// Default truncation of the support to `[−3, 3]`.
pub const DEFAULT_BOUND: f64 = 3.0;

/// Height of the uniform rejection envelope, the density's maximum at 0.
const ENVELOPE: f64 = 0.5;

/// Unnormalized τ-noise density.
///
/// Dividing through by the numerator gives `1 / (exp(e^{x²} − e^{−x²}) + 1)`,
/// which never forms the overflowing `e^{e^{x²}}` term and underflows cleanly
/// to zero in the tails.
pub fn tau_pdf(x: f64) -> f64 {
    let x2 = x * x;
    let gap = x2.exp() - (-x2).exp();
    1.0 / (gap.exp() + 1.0)
}

/// Composite Simpson estimate of `∫_{−bound}^{bound} tau_pdf`.
pub fn tau_normalizer(bound: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = 2.0 * bound / n as f64;
    let mut acc = tau_pdf(-bound) + tau_pdf(bound);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * tau_pdf(-bound + i as f64 * h);
    }
    acc * h / 3.0
}

/// Beyond this |x| the density is below 2⁻⁵⁴, the smallest positive
/// envelope height a proposal can draw, so only `u = 0` could be accepted.
const NEGLIGIBLE_TAIL: f64 = 1.91;

const SQUEEZE_BINS: usize = 256;

/// `tau_pdf` at the edges of equal bins over `[0, NEGLIGIBLE_TAIL]`, shrunk
/// and grown by a relative margin that covers rounding in `tau_pdf`. The
/// density decreases in |x|, so bin `k` is bracketed by
/// `(edges[k + 1].0, edges[k].1)`.
fn squeeze_table() -> &'static [(f64, f64); SQUEEZE_BINS + 1] {
    static TABLE: OnceLock<[(f64, f64); SQUEEZE_BINS + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|k| {
            let p = tau_pdf(NEGLIGIBLE_TAIL * k as f64 / SQUEEZE_BINS as f64);
            (p * (1.0 - 1e-9), p * (1.0 + 1e-9))
        })
    })
}

/// One τ-noise draw on `[−bound, bound]` by rejection under a uniform
/// envelope of height 0.5.
pub fn sample_tau_with<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    let table = squeeze_table();
    loop {
        let x = bound * (2.0 * rng.random::<f64>() - 1.0);
        let u = rng.random::<f64>() * ENVELOPE;
        let a = x.abs();
        if a > NEGLIGIBLE_TAIL {
            if u == 0.0 && tau_pdf(x) > 0.0 {
                return x;
            }
            continue;
        }
        let k = ((a / NEGLIGIBLE_TAIL * SQUEEZE_BINS as f64) as usize).min(SQUEEZE_BINS - 1);
        if u < table[k + 1].0 {
            return x;
        }
        if u >= table[k].1 {
            continue;
        }
        if u < tau_pdf(x) {
            return x;
        }
    }
}

/// Seeded stream of τ-noise draws.
#[derive(Clone, Debug)]
pub struct TauNoiseSampler {
    bound: f64,
    normalizer: f64,
    rng: StreamRng,
}

impl TauNoiseSampler {
    pub fn new(bound: f64, seed: u64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::invalid(format!("τ-noise bound must be positive, got {bound}")));
        }
        Ok(Self {
            bound,
            normalizer: tau_normalizer(bound, 4096),
            rng: StreamRng::seed_from_u64(seed),
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Integral of the unnormalized density over the support.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Normalized density on the truncated support.
    pub fn density(&self, x: f64) -> f64 {
        if x.abs() > self.bound {
            0.0
        } else {
            tau_pdf(x) / self.normalizer
        }
    }

    /// Expected fraction of envelope proposals that are accepted.
    pub fn acceptance_rate(&self) -> f64 {
        self.normalizer / (ENVELOPE * 2.0 * self.bound)
    }

    pub fn sample(&mut self) -> f64 {
        sample_tau_with(&mut self.rng, self.bound)
    }
}

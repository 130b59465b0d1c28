//! One-sided α-stable laws and subordinator paths.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_core::RngCore;

use crate::rng::{domain, exponential, uniform_open, zigzag, StreamFamily};
use crate::{Error, Result};

/// Law of a positive α-stable variable `S` with `E[exp(-λS)] = exp(-c0 λ^α)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StableLaw {
    alpha: f64,
    c0: f64,
}

impl StableLaw {
    pub fn new(alpha: f64, c0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidScale(c0));
        }
        Ok(Self { alpha, c0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `exp(-c0 λ^α)`.
    pub fn laplace(&self, lambda: f64) -> f64 {
        libm::exp(-self.c0 * libm::pow(lambda, self.alpha))
    }

    /// Multiplier taking a standard (`c0 = 1`) draw to this law: `c0^{1/α}`.
    pub fn scale(&self) -> f64 {
        libm::pow(self.c0, 1.0 / self.alpha)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_one_sided_stable(self, rng)
    }
}

/// Kanter's representation of the standard positive stable law
/// (`E[exp(-λS)] = exp(-λ^α)`), evaluated in log space. Consumes exactly two
/// 64-bit words from `rng`.
pub fn standard_one_sided_stable<R: RngCore + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * uniform_open(rng);
    let e = exponential(rng);
    let log_s = libm::log(libm::sin(alpha * u)) - libm::log(libm::sin(u)) / alpha
        + (1.0 - alpha) / alpha * (libm::log(libm::sin((1.0 - alpha) * u)) - libm::log(e));
    // Clamping only matters for α close to 0, where draws can leave the f64 range.
    libm::exp(log_s).clamp(f64::MIN_POSITIVE, f64::MAX)
}

/// Draw from `law`, realized as `c0^{1/α}` times a standard draw so that a
/// fixed stream state gives outputs exactly proportional in `c0^{1/α}`.
pub fn sample_one_sided_stable<R: RngCore + ?Sized>(law: &StableLaw, rng: &mut R) -> f64 {
    law.scale() * standard_one_sided_stable(law.alpha, rng)
}

/// Increments of a subordinator with Laplace exponent `c0 λ^α` on the grid
/// `k/M`, `lo <= k < hi`. Cell `k` covers `[k/M, (k+1)/M)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubordinatorPath {
    pub law: StableLaw,
    pub resolution: u64,
    pub lo: i64,
    pub hi: i64,
    pub increments: Vec<f64>,
    pub seed: u64,
}

impl SubordinatorPath {
    /// Increment of cell `k` (absolute grid index).
    pub fn increment(&self, k: i64) -> f64 {
        self.increments[(k - self.lo) as usize]
    }

    /// `W(k/M)` for `lo <= k <= hi`, anchored so that `W(0) = 0` when the
    /// origin is on the grid and `W(lo/M) = 0` otherwise.
    pub fn cumulative(&self) -> Vec<f64> {
        let anchor = if self.lo <= 0 && 0 <= self.hi { 0 } else { self.lo };
        let a = (anchor - self.lo) as usize;
        let mut w = alloc::vec![0.0; self.increments.len() + 1];
        for i in a..self.increments.len() {
            w[i + 1] = w[i] + self.increments[i];
        }
        for i in (0..a).rev() {
            w[i] = w[i + 1] - self.increments[i];
        }
        w
    }
}

/// Samples cell increments independently, each from the stable law with scale
/// parameter `c0 / M`. Cell `k` draws from its own stream keyed by
/// `(seed, k)`, so overlapping ranges share their common cells exactly.
pub fn sample_subordinator_path(
    law: StableLaw,
    resolution: u64,
    lo: i64,
    hi: i64,
    seed: u64,
) -> Result<SubordinatorPath> {
    if resolution == 0 {
        return Err(Error::InvalidResolution);
    }
    if lo >= hi {
        return Err(Error::InvalidRange { lo, hi });
    }
    let family = StreamFamily::new(seed).derive(domain::SUBORDINATOR);
    let cell_scale = libm::pow(law.c0 / resolution as f64, 1.0 / law.alpha);
    let increments = (lo..hi)
        .map(|k| {
            let mut stream = family.stream(zigzag(k));
            cell_scale * standard_one_sided_stable(law.alpha, &mut stream)
        })
        .collect();
    Ok(SubordinatorPath {
        law,
        resolution,
        lo,
        hi,
        increments,
        seed,
    })
}

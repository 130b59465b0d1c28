//! Conductance environments on a finite lattice window.
//!
//! An [`Environment`] at scaling level `N` carries, for each bond `{x, x+1}`
//! of the window, the inverse conductance `γ_x = N^{1/α} (W((x+1)/N) - W(x/N))`
//! and the conductance `c_x = 1/γ_x`, together with the samples `W(x/N)` at
//! the sites. Environments for different `N` built from the same
//! [`SubordinatorPath`] are coupled: they are aggregations of one fine path.

use alloc::format;
use alloc::vec::Vec;

use crate::stable::{StableLaw, SubordinatorPath};
use crate::{Error, Result};

/// Inclusive integer interval of lattice sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn sites(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn bonds(&self) -> usize {
        (self.hi - self.lo) as usize
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Array offset of site `x`.
    pub fn index(&self, x: i64) -> Result<usize> {
        if self.contains(x) {
            Ok((x - self.lo) as usize)
        } else {
            Err(Error::SiteOutsideWindow {
                site: x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn site(&self, index: usize) -> i64 {
        self.lo + index as i64
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Where an environment's subordinator samples came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub resolution: u64,
    pub path_lo: i64,
    pub path_hi: i64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    law: StableLaw,
    n: u64,
    window: Window,
    gamma: Vec<f64>,
    c: Vec<f64>,
    cum_w: Vec<f64>,
    provenance: Option<Provenance>,
}

impl Environment {
    /// Assembles an environment from inverse conductances and site samples of
    /// `W`, checking positivity, finiteness and strict monotonicity.
    pub fn from_parts(
        law: StableLaw,
        n: u64,
        window: Window,
        gamma: Vec<f64>,
        cum_w: Vec<f64>,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidResolution);
        }
        if window.bonds() < 2 {
            return Err(Error::WindowTooSmall {
                needed: 2,
                got: window.bonds(),
            });
        }
        if gamma.len() != window.bonds() || cum_w.len() != window.sites() {
            return Err(Error::DegenerateEnvironment(format!(
                "expected {} bonds and {} sites, got {} and {}",
                window.bonds(),
                window.sites(),
                gamma.len(),
                cum_w.len()
            )));
        }
        if let Some(i) = gamma.iter().position(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::DegenerateEnvironment(format!(
                "gamma at bond {} is {}",
                window.site(i),
                gamma[i]
            )));
        }
        if let Some(i) = cum_w.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::DegenerateEnvironment(format!(
                "W is not strictly increasing across bond {}",
                window.site(i)
            )));
        }
        let c = gamma.iter().map(|g| 1.0 / g).collect();
        Ok(Self {
            law,
            n,
            window,
            gamma,
            c,
            cum_w,
            provenance,
        })
    }

    /// The environment of a deterministic linear `W(u) = κu`: every
    /// `γ_x = κ N^{1/α - 1}`, so the sped-up generator is `κ^{-1} N^2 Δ`.
    pub fn homogeneous(law: StableLaw, n: u64, window: Window, kappa: f64) -> Result<Self> {
        let nf = n as f64;
        let g = kappa * libm::pow(nf, 1.0 / law.alpha() - 1.0);
        let gamma = alloc::vec![g; window.bonds()];
        let cum_w = window.iter().map(|x| kappa * x as f64 / nf).collect();
        Self::from_parts(law, n, window, gamma, cum_w, None)
    }

    /// All conductances equal to one (`W(x/N) = x N^{-1/α}`).
    pub fn unit_conductances(law: StableLaw, n: u64, window: Window) -> Result<Self> {
        let scale = libm::pow(n as f64, -1.0 / law.alpha());
        let gamma = alloc::vec![1.0; window.bonds()];
        let cum_w = window.iter().map(|x| x as f64 * scale).collect();
        Self::from_parts(law, n, window, gamma, cum_w, None)
    }

    /// Environment from explicit inverse conductances; `W` is anchored at the
    /// origin when it lies in the window, at the left edge otherwise.
    pub fn from_gamma(law: StableLaw, n: u64, window: Window, gamma: Vec<f64>) -> Result<Self> {
        let scale = libm::pow(n as f64, -1.0 / law.alpha());
        let cum_w = prefix_anchored(window, gamma.iter().map(|g| g * scale));
        Self::from_parts(law, n, window, gamma, cum_w, None)
    }

    /// Copy with conductance of `bond` multiplied by `factor` (and `W`
    /// recomputed accordingly).
    pub fn with_scaled_conductance(&self, bond: i64, factor: f64) -> Result<Self> {
        let i = self.window.index(bond)?;
        if i >= self.window.bonds() {
            return Err(Error::SiteOutsideWindow {
                site: bond,
                lo: self.window.lo,
                hi: self.window.hi - 1,
            });
        }
        let mut gamma = self.gamma.clone();
        gamma[i] /= factor;
        Self::from_gamma(self.law, self.n, self.window, gamma)
    }

    pub fn law(&self) -> StableLaw {
        self.law
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Inverse conductances, indexed by bond offset.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Conductances, indexed by bond offset.
    pub fn conductances(&self) -> &[f64] {
        &self.c
    }

    /// `W(x/N)` for every site of the window.
    pub fn cum_w(&self) -> &[f64] {
        &self.cum_w
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    /// `N^{1/α}`.
    pub fn w_scale(&self) -> f64 {
        libm::pow(self.n as f64, 1.0 / self.law.alpha())
    }

    /// Speed-up factor `N^{1 + 1/α}`.
    pub fn speed(&self) -> f64 {
        self.n as f64 * self.w_scale()
    }

    /// Largest total exit rate of the sped-up walk over the window.
    pub fn max_exit_rate(&self) -> f64 {
        let c = &self.c;
        let mut m = c[0].max(c[c.len() - 1]);
        for w in c.windows(2) {
            m = m.max(w[0] + w[1]);
        }
        m * self.speed()
    }

    pub fn min_conductance(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_conductance(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }
}

fn prefix_anchored(window: Window, gaps: impl Iterator<Item = f64>) -> Vec<f64> {
    let gaps: Vec<f64> = gaps.collect();
    let anchor = if window.contains(0) { (-window.lo) as usize } else { 0 };
    let mut w = alloc::vec![0.0; window.sites()];
    for i in anchor..gaps.len() {
        w[i + 1] = w[i] + gaps[i];
    }
    for i in (0..anchor).rev() {
        w[i] = w[i + 1] - gaps[i];
    }
    w
}

/// Aggregates a fine subordinator path into the environment at level `N`.
///
/// `N` must divide the path resolution `M`. The window consists of the sites
/// `x` with `x/N` inside the path range. `γ_x` is `N^{1/α}` times the sum of
/// the `M/N` fine increments of `[x/N, (x+1)/N)` and `W(x/N)` is read off the
/// fine prefix sums, so any two levels agree bit-for-bit at common points.
pub fn coarse_grain(path: &SubordinatorPath, n: u64) -> Result<Environment> {
    if n == 0 || !path.resolution.is_multiple_of(n) {
        return Err(Error::ResolutionMismatch {
            n,
            resolution: path.resolution,
        });
    }
    let ratio = (path.resolution / n) as i64;
    let x_lo = path.lo.div_euclid(ratio) + i64::from(path.lo.rem_euclid(ratio) != 0);
    let x_hi = path.hi.div_euclid(ratio);
    let bonds = (x_hi - x_lo).max(0) as usize;
    if bonds < 2 {
        return Err(Error::WindowTooSmall {
            needed: 2,
            got: bonds,
        });
    }
    let window = Window::new(x_lo, x_hi)?;
    let fine = path.cumulative();
    let scale = libm::pow(n as f64, 1.0 / path.law.alpha());
    let gamma = (x_lo..x_hi)
        .map(|x| {
            let start = (x * ratio - path.lo) as usize;
            let sum: f64 = path.increments[start..start + ratio as usize].iter().sum();
            scale * sum
        })
        .collect();
    let cum_w = window
        .iter()
        .map(|x| fine[(x * ratio - path.lo) as usize])
        .collect();
    Environment::from_parts(
        path.law,
        n,
        window,
        gamma,
        cum_w,
        Some(Provenance {
            resolution: path.resolution,
            path_lo: path.lo,
            path_hi: path.hi,
            seed: path.seed,
        }),
    )
}

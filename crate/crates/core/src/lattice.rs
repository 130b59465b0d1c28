//! Real functions sampled on the sites of a lattice window.

use alloc::vec::Vec;

use crate::env::{Environment, Window};
use crate::{Error, Result};

/// Values `f(x)` for every site `x` of `window`, read as `f(x/N)` at scaling
/// level `N`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatticeFunction {
    pub window: Window,
    pub n: u64,
    pub values: Vec<f64>,
}

impl LatticeFunction {
    pub fn new(window: Window, n: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.sites() {
            return Err(Error::WindowMismatch);
        }
        Ok(Self { window, n, values })
    }

    pub fn zeros(window: Window, n: u64) -> Self {
        Self {
            window,
            n,
            values: alloc::vec![0.0; window.sites()],
        }
    }

    pub fn constant(window: Window, n: u64, value: f64) -> Self {
        Self {
            window,
            n,
            values: alloc::vec![value; window.sites()],
        }
    }

    /// Samples `f` at the macroscopic points `x/N`.
    pub fn from_fn(window: Window, n: u64, f: impl Fn(f64) -> f64) -> Self {
        let nf = n as f64;
        Self {
            window,
            n,
            values: window.iter().map(|x| f(x as f64 / nf)).collect(),
        }
    }

    pub fn indicator(window: Window, n: u64, site: i64) -> Result<Self> {
        let mut f = Self::zeros(window, n);
        let i = window.index(site)?;
        f.values[i] = 1.0;
        Ok(f)
    }

    /// Same window and scaling level as the environment.
    pub fn compatible_with(&self, env: &Environment) -> Result<()> {
        if self.window != env.window() || self.n != env.n() || self.values.len() != self.window.sites() {
            return Err(Error::WindowMismatch);
        }
        Ok(())
    }

    pub fn at(&self, site: i64) -> Result<f64> {
        Ok(self.values[self.window.index(site)?])
    }

    pub fn site_sum(&self) -> f64 {
        pairwise_sum(&self.values)
    }

    /// `(1/N) Σ_x |f(x/N)|`.
    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        pairwise_sum(&abs) / self.n as f64
    }

    /// `(1/N) Σ_x f(x/N)`.
    pub fn integral(&self) -> f64 {
        self.site_sum() / self.n as f64
    }

    /// `(1/N) Σ_x f(x/N) g(x/N)`.
    pub fn inner(&self, other: &Self) -> f64 {
        let prods: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        pairwise_sum(&prods) / self.n as f64
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

//! Brownian motion time changed by an atomic speed measure.
//!
//! For `μ = Σ_k w_k δ_{x_k}` the time-changed process only visits the atoms
//! and is a birth–death chain: at `x_k` it waits an exponential time with
//! mean `w_k g_k g_{k-1} / (g_k + g_{k-1})`, where `g_k = x_{k+1} - x_k`, then
//! moves to `x_{k-1}` with probability `g_k / (g_{k-1} + g_k)` and to
//! `x_{k+1}` otherwise. With `ν_N = (1/N) Σ_x δ_{W(x/N)}` this is exactly the
//! sped-up lattice walk, read through `W`.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::env::Environment;
use crate::exec::Executor;
use crate::particles::{simulate_walk, WalkPath};
use crate::rng::{domain, exponential, uniform_open, StreamFamily};
use crate::stats::{ks_two_sample, KsResult};
use crate::{Error, Result};

/// Finitely many atoms with positive weights. Gaps are stored separately so
/// that measures built from an environment keep them exactly (`γ_x N^{-1/α}`)
/// instead of recovering them by subtracting large atom positions.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomicMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    gaps: Vec<f64>,
    /// First window site and `N` when built by [`build_nu_n`].
    lattice: Option<(i64, u64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() < 3 {
            return Err(Error::InvalidMeasure("need at least 3 atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure("atoms and weights differ in length".into()));
        }
        if atoms.iter().any(|a| !a.is_finite()) || atoms.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMeasure("atoms must be finite and strictly increasing".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        let gaps = atoms.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            atoms,
            weights,
            gaps,
            lattice: None,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `x_{k+1} - x_k`.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Mean holding time at atom `k`; at the extreme atoms the chain reflects
    /// and the mean is `w_k` times the single adjacent gap.
    pub fn holding_mean(&self, k: usize) -> f64 {
        let g = &self.gaps;
        let w = self.weights[k];
        if k == 0 {
            w * g[0]
        } else if k + 1 == self.atoms.len() {
            w * g[k - 1]
        } else {
            w * g[k] * g[k - 1] / (g[k] + g[k - 1])
        }
    }

    /// Probability that the next move from atom `k` goes right.
    pub fn right_probability(&self, k: usize) -> f64 {
        let g = &self.gaps;
        if k == 0 {
            1.0
        } else if k + 1 == self.atoms.len() {
            0.0
        } else {
            g[k - 1] / (g[k - 1] + g[k])
        }
    }
}

/// `ν_N`: an atom of weight `1/N` at `W(x/N)` for each window site.
pub fn build_nu_n(env: &Environment) -> AtomicMeasure {
    let n = env.n();
    let scale = 1.0 / env.w_scale();
    AtomicMeasure {
        atoms: env.cum_w().to_vec(),
        weights: alloc::vec![1.0 / n as f64; env.window().sites()],
        gaps: env.gamma().iter().map(|g| g * scale).collect(),
        lattice: Some((env.window().lo, n)),
    }
}

/// Trajectory over atom indices, with the same conventions as [`WalkPath`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapPath {
    pub times: Vec<f64>,
    pub atoms: Vec<usize>,
    pub t_max: f64,
}

/// Exact simulation of the birth–death chain from atom `k0`. Each step uses
/// one exponential and one uniform draw.
pub fn simulate_gap_walk<R: RngCore + ?Sized>(mu: &AtomicMeasure, k0: usize, t_max: f64, rng: &mut R) -> Result<GapPath> {
    if k0 >= mu.len() {
        return Err(Error::InvalidMeasure("start atom out of range".into()));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidTimes);
    }
    let mut k = k0;
    let mut t = 0.0;
    let mut times = alloc::vec![0.0];
    let mut atoms = alloc::vec![k0];
    loop {
        t += mu.holding_mean(k) * exponential(rng);
        if t > t_max {
            break;
        }
        if uniform_open(rng) < mu.right_probability(k) {
            k += 1;
        } else {
            k -= 1;
        }
        times.push(t);
        atoms.push(k);
    }
    Ok(GapPath { times, atoms, t_max })
}

/// Atom `k` of `ν_N` is `W(x/N)` for the `k`-th window site `x`; the lattice
/// path is returned in sites (divide by `N` for macroscopic positions).
pub fn map_to_lattice(path: &GapPath, mu: &AtomicMeasure, env: &Environment) -> Result<WalkPath> {
    let w = env.window();
    match mu.lattice {
        Some((lo, n)) if lo == w.lo && n == env.n() && mu.atoms == env.cum_w() => {}
        _ => return Err(Error::ForeignMeasure),
    }
    Ok(WalkPath {
        times: path.times.clone(),
        positions: path.atoms.iter().map(|&k| w.site(k)).collect(),
        t_max: path.t_max,
    })
}

/// One side of an equivalence comparison.
#[derive(Clone, Copy, Debug)]
pub enum Sampler<'a> {
    /// [`simulate_walk`] on the environment.
    Walk(&'a Environment),
    /// [`simulate_gap_walk`] on `ν_N` of the environment, mapped back.
    GapWalk(&'a Environment),
}

impl Sampler<'_> {
    fn env(&self) -> &Environment {
        match self {
            Sampler::Walk(e) | Sampler::GapWalk(e) => e,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceReport {
    pub x0: i64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub level: f64,
    pub ks: KsResult,
    pub passed: bool,
}

/// Smallest replica count accepted by the equivalence tests.
pub const MIN_REPLICAS: usize = 1000;

/// End positions at time `t` of `replicas` independent runs of `sampler`.
/// Replica `i` uses stream `i` of a family derived from `(seed, side)`.
pub fn end_positions<E: Executor>(
    sampler: Sampler<'_>,
    x0: i64,
    t: f64,
    replicas: usize,
    seed: u64,
    side: u64,
    exec: &E,
) -> Result<Vec<i64>> {
    let env = sampler.env();
    let k0 = env.window().index(x0)?;
    let family = match sampler {
        Sampler::Walk(_) => StreamFamily::new(seed).derive(domain::WALK),
        Sampler::GapWalk(_) => StreamFamily::new(seed).derive(domain::GAP_WALK),
    }
    .derive(side);
    let mu = match sampler {
        Sampler::GapWalk(e) => Some(build_nu_n(e)),
        Sampler::Walk(_) => None,
    };
    exec.map(replicas, |i| {
        let mut rng = family.stream(i as u64);
        match &mu {
            None => simulate_walk(env, x0, t, &mut rng).map(|p| p.end()),
            Some(mu) => {
                let g = simulate_gap_walk(mu, k0, t, &mut rng)?;
                Ok(env.window().site(*g.atoms.last().unwrap()))
            }
        }
    })
    .into_iter()
    .collect()
}

/// Two-sample KS comparison of end positions of two samplers started at `x0`.
#[allow(clippy::too_many_arguments)]
pub fn compare_samplers<E: Executor>(
    a: Sampler<'_>,
    b: Sampler<'_>,
    x0: i64,
    t: f64,
    replicas: usize,
    seed: u64,
    level: f64,
    exec: &E,
) -> Result<EquivalenceReport> {
    if replicas < MIN_REPLICAS {
        return Err(Error::InsufficientData(alloc::format!(
            "{replicas} replicas, need at least {MIN_REPLICAS}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidTimes);
    }
    let xa = end_positions(a, x0, t, replicas, seed, 1, exec)?;
    let xb = end_positions(b, x0, t, replicas, seed, 2, exec)?;
    let fa: Vec<f64> = xa.iter().map(|x| *x as f64).collect();
    let fb: Vec<f64> = xb.iter().map(|x| *x as f64).collect();
    let ks = ks_two_sample(&fa, &fb);
    Ok(EquivalenceReport {
        x0,
        t,
        replicas,
        seed,
        level,
        ks,
        passed: ks.passes(level),
    })
}

/// Lattice walk against the gap process of `ν_N` on the same environment,
/// at the 5% level.
pub fn equivalence_test<E: Executor>(
    env: &Environment,
    x0: i64,
    t: f64,
    replicas: usize,
    seed: u64,
    exec: &E,
) -> Result<EquivalenceReport> {
    compare_samplers(Sampler::Walk(env), Sampler::GapWalk(env), x0, t, replicas, seed, 0.05, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{StableLaw, Window};

    #[test]
    fn measure_validation() {
        assert!(AtomicMeasure::new(alloc::vec![0.0, 1.0], alloc::vec![1.0, 1.0]).is_err());
        assert!(AtomicMeasure::new(alloc::vec![0.0, 1.0, 1.0], alloc::vec![1.0; 3]).is_err());
        assert!(AtomicMeasure::new(alloc::vec![0.0, 1.0, 2.0], alloc::vec![1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn three_atom_example() {
        let mu = AtomicMeasure::new(alloc::vec![0.0, 1.0, 3.0], alloc::vec![1.0, 0.7, 1.0]).unwrap();
        assert!((1.0 - mu.right_probability(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((mu.right_probability(1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((mu.holding_mean(1) - 0.7 * 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mu.right_probability(0), 1.0);
        assert_eq!(mu.holding_mean(0), 1.0);
        assert_eq!(mu.holding_mean(2), 2.0);
    }

    #[test]
    fn hand_built_nu_n() {
        let law = StableLaw::new(0.5, 1.0).unwrap();
        let env = Environment::from_gamma(law, 1, Window::new(0, 3).unwrap(), alloc::vec![1.0, 2.0, 4.0]).unwrap();
        let mu = build_nu_n(&env);
        assert_eq!(mu.atoms(), [0.0, 1.0, 3.0, 7.0]);
        assert_eq!(mu.weights(), [1.0; 4]);
        let path = GapPath {
            times: alloc::vec![0.0, 0.5],
            atoms: alloc::vec![0, 1],
            t_max: 1.0,
        };
        let lat = map_to_lattice(&path, &mu, &env).unwrap();
        assert_eq!(lat.positions, [0, 1]);
        let other = AtomicMeasure::new(alloc::vec![0.0, 1.0, 3.0, 7.0], alloc::vec![1.0; 4]).unwrap();
        assert_eq!(map_to_lattice(&path, &other, &env), Err(Error::ForeignMeasure));
    }
}

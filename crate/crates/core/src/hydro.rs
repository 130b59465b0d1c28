//! Experiments: hydrodynamic convergence against the same-`N` semigroup,
//! cross-level Cauchy distances, the tagged particle and its quantile, and
//! the exit-time scaling exponent.
//!
//! Every experiment is a deterministic function of its spec: environments
//! come from the master seed, replica `r` at level `N` draws from streams
//! keyed by `(seed, N, r)`, and statistics are aggregated with pairwise sums
//! in replica order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::env::{coarse_grain, Environment, Window};
use crate::exec::Executor;
use crate::lattice::{pairwise_sum, LatticeFunction};
use crate::particles::{empirical_measure, sample_initial, simulate_exclusion, ExclusionOptions};
use crate::rng::{domain, exponential, uniform_open, StreamFamily};
use crate::stable::{sample_subordinator_path, StableLaw, SubordinatorPath};
use crate::stats::{linear_fit, mean_se, median, quantile};
use crate::walk::{dw_derivative, semigroup_solve, Method, SemigroupSolution};
use crate::{Error, Result};

/// Macroscopic profiles and test functions.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Shape {
    Constant {
        value: f64,
    },
    /// `height · exp(1 - 1/(1 - s²))` with `s = (u - center)/radius`, zero
    /// for `|s| >= 1`.
    Bump {
        center: f64,
        radius: f64,
        height: f64,
    },
    /// `value` on `[lo, hi]`, zero elsewhere.
    Step {
        lo: f64,
        hi: f64,
        value: f64,
    },
    /// `height · exp(-(u - center)²/(2 width²))` on `|u - center| <= cutoff`.
    TruncatedGaussian {
        center: f64,
        width: f64,
        height: f64,
        cutoff: f64,
    },
}

impl Shape {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Shape::Constant { value } => value,
            Shape::Bump { center, radius, height } => {
                let s = (u - center) / radius;
                if s.abs() < 1.0 {
                    height * libm::exp(1.0 - 1.0 / (1.0 - s * s))
                } else {
                    0.0
                }
            }
            Shape::Step { lo, hi, value } => {
                if (lo..=hi).contains(&u) {
                    value
                } else {
                    0.0
                }
            }
            Shape::TruncatedGaussian {
                center,
                width,
                height,
                cutoff,
            } => {
                let d = u - center;
                if d.abs() <= cutoff {
                    height * libm::exp(-d * d / (2.0 * width * width))
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample(&self, window: Window, n: u64) -> LatticeFunction {
        LatticeFunction::from_fn(window, n, |u| self.eval(u))
    }

    fn parameter_problems(&self) -> Option<String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Shape::Constant { value } if !value.is_finite() => Some("value must be finite".into()),
            Shape::Bump { center, radius, height } if !(finite(&[center, height]) && radius > 0.0 && radius.is_finite()) => {
                Some("bump needs finite center and height and a positive radius".into())
            }
            Shape::Step { lo, hi, value } if !(finite(&[lo, hi, value]) && lo <= hi) => {
                Some("step needs finite lo <= hi and a finite value".into())
            }
            Shape::TruncatedGaussian {
                center,
                width,
                height,
                cutoff,
            } if !(finite(&[center, height, cutoff]) && width > 0.0 && width.is_finite() && cutoff >= 0.0) => {
                Some("truncated gaussian needs a positive width and a non-negative cutoff".into())
            }
            _ => None,
        }
    }

    /// Closed range of values taken on the real line.
    fn value_range(&self) -> (f64, f64) {
        match *self {
            Shape::Constant { value } => (value, value),
            Shape::Bump { height, .. } | Shape::TruncatedGaussian { height, .. } => (height.min(0.0), height.max(0.0)),
            Shape::Step { value, .. } => (value.min(0.0), value.max(0.0)),
        }
    }
}

/// How the environment of each level is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum EnvironmentModel {
    /// Coarse grainings of one fine subordinator path drawn from the seed.
    Quenched,
    /// `W(u) = κu`.
    Homogeneous { kappa: f64 },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ExperimentSpec {
    pub law: StableLaw,
    /// Fine resolution `M`; every level must divide it.
    pub resolution: u64,
    pub ns: Vec<u64>,
    /// Macroscopic window `[lo, hi]`; level `N` uses the sites `[lo N, hi N]`.
    pub window: (i64, i64),
    pub environment: EnvironmentModel,
    pub profile: Shape,
    pub test_functions: Vec<Shape>,
    pub sample_times: Vec<f64>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub condition_origin: bool,
    /// Boundary strip watched in every replica (0 disables the guard).
    pub guard_sites: usize,
    /// Largest tolerated fraction of replicas reaching the strip.
    pub boundary_tolerance: f64,
    /// Step bound for the reference semigroup.
    pub reference_dt: f64,
}

impl ExperimentSpec {
    /// Every problem with the spec, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = StableLaw::new(self.law.alpha(), self.law.c0()) {
            out.push(format!("law: {e}"));
        }
        if self.resolution == 0 {
            out.push("resolution: must be at least 1".into());
        }
        if self.ns.is_empty() {
            out.push("ns: at least one level is required".into());
        }
        for &n in &self.ns {
            if n == 0 {
                out.push("ns: levels must be positive".into());
            } else if self.resolution > 0 && !self.resolution.is_multiple_of(n) {
                out.push(format!(
                    "ns: N = {n} does not divide the fine resolution M = {}; coupled environments need N | M",
                    self.resolution
                ));
            }
        }
        if self.window.0 >= self.window.1 {
            out.push(format!("window: need lo < hi, got [{}, {}]", self.window.0, self.window.1));
        }
        if let EnvironmentModel::Homogeneous { kappa } = self.environment {
            if !(kappa > 0.0 && kappa.is_finite()) {
                out.push(format!("environment.kappa: must be positive, got {kappa}"));
            }
        }
        if let Some(p) = self.profile.parameter_problems() {
            out.push(format!("profile: {p}"));
        }
        let (lo, hi) = self.profile.value_range();
        if lo < 0.0 || hi > 1.0 {
            out.push(format!("profile: values must lie in [0, 1], range is [{lo}, {hi}]"));
        }
        for (i, h) in self.test_functions.iter().enumerate() {
            if let Some(p) = h.parameter_problems() {
                out.push(format!("test_functions[{i}]: {p}"));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            out.push(format!("horizon: must be positive and finite, got {}", self.horizon));
        }
        let ordered = self.sample_times.windows(2).all(|w| w[1] > w[0]);
        if self.sample_times.is_empty() || !ordered || self.sample_times.iter().any(|t| !(*t >= 0.0)) {
            out.push("sample_times: need a non-empty, strictly increasing list of non-negative times".into());
        }
        if let Some(t) = self.sample_times.iter().find(|t| **t > self.horizon) {
            out.push(format!("sample_times: {t} exceeds the horizon {}", self.horizon));
        }
        if self.replicas < 2 {
            out.push("replicas: at least 2 are needed for standard errors".into());
        }
        if self.condition_origin && !(self.window.0 < 0 && 0 < self.window.1) {
            out.push("condition_origin: the origin must be inside the window".into());
        }
        if !(0.0..=1.0).contains(&self.boundary_tolerance) {
            out.push(format!("boundary_tolerance: must lie in [0, 1], got {}", self.boundary_tolerance));
        }
        if !(self.reference_dt > 0.0 && self.reference_dt.is_finite()) {
            out.push(format!("reference_dt: must be positive, got {}", self.reference_dt));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(v.join("; ")))
        }
    }

    pub fn level_window(&self, n: u64) -> Result<Window> {
        let n = n as i64;
        Window::new(self.window.0 * n, self.window.1 * n)
    }

    /// The fine path shared by all levels of a quenched experiment.
    pub fn fine_path(&self) -> Result<Option<SubordinatorPath>> {
        match self.environment {
            EnvironmentModel::Quenched => {
                let m = self.resolution as i64;
                sample_subordinator_path(self.law, self.resolution, self.window.0 * m, self.window.1 * m, self.seed).map(Some)
            }
            EnvironmentModel::Homogeneous { .. } => Ok(None),
        }
    }

    fn level_env(&self, path: Option<&SubordinatorPath>, n: u64) -> Result<Environment> {
        match (self.environment, path) {
            (EnvironmentModel::Homogeneous { kappa }, _) => Environment::homogeneous(self.law, n, self.level_window(n)?, kappa),
            (EnvironmentModel::Quenched, Some(p)) => coarse_grain(p, n),
            (EnvironmentModel::Quenched, None) => Err(Error::InvalidSpec("quenched experiment without a fine path".into())),
        }
    }

    /// Environments of every level, in the order of `ns`.
    pub fn environments(&self) -> Result<Vec<Environment>> {
        self.validate()?;
        let path = self.fine_path()?;
        self.ns.iter().map(|&n| self.level_env(path.as_ref(), n)).collect()
    }

    fn reference(&self, env: &Environment, h0: &LatticeFunction) -> Result<SemigroupSolution> {
        semigroup_solve(env, h0, &self.sample_times, Method::CRANK_NICOLSON, self.reference_dt)
    }
}

fn replica_streams(seed: u64, n: u64, r: usize) -> (impl RngCore, impl RngCore) {
    let root = StreamFamily::new(seed);
    (
        root.derive(domain::INITIAL).derive(n).stream(r as u64),
        root.derive(domain::DYNAMICS).derive(n).stream(r as u64),
    )
}

fn check_boundary(sites: usize, reached: usize, total: usize, limit: f64) -> Result<f64> {
    let fraction = reached as f64 / total.max(1) as f64;
    if sites > 0 && fraction > limit {
        return Err(Error::BoundaryReached { sites, fraction, limit });
    }
    Ok(fraction)
}

/// One `(N, t, H)` cell of a convergence report.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceRow {
    pub n: u64,
    pub t: f64,
    pub test_function: usize,
    /// Monte Carlo mean and standard error of `⟨π^N_t, H⟩`.
    pub mean: f64,
    pub se: f64,
    /// `(1/N) Σ H(x/N) (P_t^N ρ₀)(x/N)`.
    pub reference: f64,
    /// Mean and standard error of `|⟨π^N_t, H⟩ - reference|`.
    pub abs_error: f64,
    pub abs_error_se: f64,
    /// Mean and standard error of `Γ_t²`.
    pub gamma_sq: f64,
    pub gamma_sq_se: f64,
    /// `(1/2N²)[Σ H² - Σ (P_t^N H)²]`.
    pub variance_bound: f64,
    /// `gamma_sq <= variance_bound + 3 gamma_sq_se`.
    pub bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelSummary {
    pub n: u64,
    pub test_function: usize,
    /// Largest `abs_error` over the sample times and its standard error.
    pub sup_abs_error: f64,
    pub sup_abs_error_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelDiagnostics {
    pub n: u64,
    pub boundary_fraction: f64,
    pub events: u64,
    pub conservation_violations: u64,
    /// Largest change of `(1/N) Σ P_t^N ρ₀` over the sample times.
    pub reference_mass_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ConvergenceRow>,
    pub summaries: Vec<LevelSummary>,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// For every test function, the sup error at each level is below the
    /// previous level's plus one standard error of their difference.
    pub error_decreasing: bool,
    pub bound_holds: bool,
}

struct QuenchedReplica {
    /// `[h][t]`
    values: Vec<Vec<f64>>,
    /// `(1/N) Σ (P_t H)(x/N) η₀(x)`, `[h][t]`
    baseline: Vec<Vec<f64>>,
    reached_boundary: bool,
    events: u64,
    violations: u64,
}

/// Simulated `⟨π^N_t, H⟩` against `(1/N) Σ H (P_t^N ρ₀)` at every level, with
/// the variance of `Γ_t` checked against its bound.
pub fn quenched_hydro<E: Executor>(spec: &ExperimentSpec, exec: &E) -> Result<ConvergenceReport> {
    let envs = spec.environments()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut diagnostics = Vec::new();
    for env in &envs {
        let n = env.n();
        let w = env.window();
        let rho0 = spec.profile.sample(w, n);
        let hs: Vec<LatticeFunction> = spec.test_functions.iter().map(|h| h.sample(w, n)).collect();
        let rho_t = spec.reference(env, &rho0)?;
        let masses: Vec<f64> = rho_t.frames.iter().map(|f| f.integral()).collect();
        let m0 = rho0.integral();
        let drift = masses.iter().fold(0.0f64, |d, m| d.max((m - m0).abs()));
        let ph: Vec<SemigroupSolution> = hs.iter().map(|h| spec.reference(env, h)).collect::<Result<_>>()?;
        let opts = ExclusionOptions {
            snapshots: false,
            guard_sites: spec.guard_sites,
        };
        let runs: Vec<QuenchedReplica> = exec
            .map(spec.replicas, |r| {
                let (mut init, mut dynamics) = replica_streams(spec.seed, n, r);
                let eta0 = sample_initial(&rho0, &mut init, spec.condition_origin)?;
                let baseline = ph
                    .iter()
                    .map(|sol| sol.frames.iter().map(|f| empirical_measure(&eta0, f)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                let run = simulate_exclusion(env, &eta0, spec.horizon, &hs, &spec.sample_times, &opts, &mut dynamics)?;
                Ok(QuenchedReplica {
                    values: run.series.values,
                    baseline,
                    reached_boundary: run.reached_boundary,
                    events: run.events,
                    violations: run.conservation_violations,
                })
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let reached = runs.iter().filter(|r| r.reached_boundary).count();
        let boundary_fraction = check_boundary(spec.guard_sites, reached, runs.len(), spec.boundary_tolerance)?;
        diagnostics.push(LevelDiagnostics {
            n,
            boundary_fraction,
            events: runs.iter().map(|r| r.events).sum(),
            conservation_violations: runs.iter().map(|r| r.violations).sum(),
            reference_mass_drift: drift,
        });
        let nf = n as f64;
        for (hi, h) in hs.iter().enumerate() {
            let h_sq = pairwise_sum(&h.values.iter().map(|v| v * v).collect::<Vec<_>>());
            let mut sup = (f64::NEG_INFINITY, 0.0);
            for (ti, &t) in spec.sample_times.iter().enumerate() {
                let reference = h.inner(&rho_t.frames[ti]);
                let values: Vec<f64> = runs.iter().map(|r| r.values[hi][ti]).collect();
                let abs: Vec<f64> = values.iter().map(|v| (v - reference).abs()).collect();
                let gsq: Vec<f64> = runs
                    .iter()
                    .map(|r| {
                        let g = r.values[hi][ti] - r.baseline[hi][ti];
                        g * g
                    })
                    .collect();
                let pth = &ph[hi].frames[ti];
                let pth_sq = pairwise_sum(&pth.values.iter().map(|v| v * v).collect::<Vec<_>>());
                let variance_bound = (h_sq - pth_sq) / (2.0 * nf * nf);
                let (mean, se) = mean_se(&values);
                let (abs_error, abs_error_se) = mean_se(&abs);
                let (gamma_sq, gamma_sq_se) = mean_se(&gsq);
                if abs_error > sup.0 {
                    sup = (abs_error, abs_error_se);
                }
                rows.push(ConvergenceRow {
                    n,
                    t,
                    test_function: hi,
                    mean,
                    se,
                    reference,
                    abs_error,
                    abs_error_se,
                    gamma_sq,
                    gamma_sq_se,
                    variance_bound,
                    bound_holds: gamma_sq <= variance_bound + 3.0 * gamma_sq_se,
                });
            }
            summaries.push(LevelSummary {
                n,
                test_function: hi,
                sup_abs_error: sup.0,
                sup_abs_error_se: sup.1,
            });
        }
    }
    let error_decreasing = (0..spec.test_functions.len()).all(|hi| {
        let s: Vec<&LevelSummary> = summaries.iter().filter(|s| s.test_function == hi).collect();
        s.windows(2).all(|p| {
            let slack = libm::hypot(p[0].sup_abs_error_se, p[1].sup_abs_error_se);
            p[1].sup_abs_error < p[0].sup_abs_error + slack
        })
    });
    let bound_holds = rows.iter().all(|r| r.bound_holds);
    Ok(ConvergenceReport {
        spec: spec.clone(),
        rows,
        summaries,
        diagnostics,
        error_decreasing,
        bound_holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CauchyRow {
    pub n: u64,
    pub t: f64,
    /// `d(N, 2N)`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CauchyReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<CauchyRow>,
    /// At every sample time, `d` decreases along the ladder.
    pub decreasing: bool,
}

/// `(1/(2N)) Σ_y |f_N(⌊y/2⌋) - f_{2N}(y)|` over the sites of the finer
/// level: the coarse profile is read as constant on its cells.
pub fn refinement_distance(coarse: &LatticeFunction, fine: &LatticeFunction) -> Result<f64> {
    if fine.n != 2 * coarse.n || fine.window.lo != 2 * coarse.window.lo || fine.window.hi != 2 * coarse.window.hi {
        return Err(Error::WindowMismatch);
    }
    let terms: Vec<f64> = fine
        .window
        .iter()
        .zip(&fine.values)
        .map(|(y, v)| (coarse.values[(y.div_euclid(2) - coarse.window.lo) as usize] - v).abs())
        .collect();
    Ok(pairwise_sum(&terms) / fine.n as f64)
}

/// `d(N, 2N)` between the semigroup profiles `P_t^N ρ₀` of consecutive levels;
/// each level in `ns` must be twice the previous one.
pub fn cross_n_cauchy(spec: &ExperimentSpec) -> Result<CauchyReport> {
    if spec.ns.len() < 2 || spec.ns.windows(2).any(|p| p[1] != 2 * p[0]) {
        return Err(Error::InvalidSpec("cross-level distances need a ladder N, 2N, 4N, ...".into()));
    }
    let envs = spec.environments()?;
    let profiles: Vec<SemigroupSolution> = envs
        .iter()
        .map(|e| spec.reference(e, &spec.profile.sample(e.window(), e.n())))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, pair) in profiles.windows(2).enumerate() {
        for (ti, &t) in spec.sample_times.iter().enumerate() {
            rows.push(CauchyRow {
                n: spec.ns[k],
                t,
                distance: refinement_distance(&pair[0].frames[ti], &pair[1].frames[ti])?,
            });
        }
    }
    let nt = spec.sample_times.len();
    let decreasing = (0..nt).all(|ti| {
        let d: Vec<f64> = rows.iter().skip(ti).step_by(nt).map(|r| r.distance).collect();
        d.windows(2).all(|p| p[1] < p[0])
    });
    Ok(CauchyReport {
        spec: spec.clone(),
        rows,
        decreasing,
    })
}

/// The point `u` where the mass of `ρ` to its left equals `target_mass`,
/// reading `ρ` as constant on the cells `[x/N, (x+1)/N)` and counting mass
/// from the left edge of the window.
pub fn quantile_position(rho: &LatticeFunction, target_mass: f64) -> Result<f64> {
    let n = rho.n as f64;
    if let Some((i, v)) = rho.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::ProfileOutOfRange {
            site: rho.window.site(i),
            value: *v,
        });
    }
    let total = pairwise_sum(&rho.values) / n;
    if !(target_mass > 0.0 && target_mass < total) {
        return Err(Error::TargetMassOutOfRange {
            target: target_mass,
            total,
        });
    }
    let mut acc = 0.0;
    for (i, &v) in rho.values.iter().enumerate() {
        let x = rho.window.site(i);
        if v == 0.0 {
            if acc >= target_mass {
                return Err(Error::ZeroDensityAtCrossing { site: x });
            }
            continue;
        }
        let next = acc + v / n;
        if next >= target_mass {
            // Landing on the right edge of a cell followed by an empty one
            // leaves the crossing point undetermined.
            if next == target_mass && rho.values.get(i + 1) == Some(&0.0) {
                return Err(Error::ZeroDensityAtCrossing { site: x + 1 });
            }
            return Ok(x as f64 / n + (target_mass - acc) / v);
        }
        acc = next;
    }
    // Round-off only: the target is below the total.
    Ok((rho.window.hi + 1) as f64 / n)
}

/// `(1/N) Σ_{x<0} ρ₀(x/N)`, the lattice mass to the left of the origin, so
/// that the quantile starts at `u = 0`.
pub fn mass_left_of_origin(rho0: &LatticeFunction) -> f64 {
    let left: Vec<f64> = rho0
        .window
        .iter()
        .zip(&rho0.values)
        .filter(|(x, _)| *x < 0)
        .map(|(_, v)| *v)
        .collect();
    pairwise_sum(&left) / rho0.n as f64
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaggedRow {
    pub n: u64,
    pub t: f64,
    /// `u^{W,N}_t`.
    pub quantile: f64,
    /// `P(|x_t/N - u_t| > δ)` for each δ of the report, with standard errors.
    pub exceedance: Vec<f64>,
    pub exceedance_se: Vec<f64>,
    pub mean_abs_deviation: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaggedReport {
    pub spec: ExperimentSpec,
    pub deltas: Vec<f64>,
    pub rows: Vec<TaggedRow>,
    pub boundary_fractions: Vec<f64>,
    /// False when a stop request cut some level short.
    pub complete: bool,
}

/// Deviation of the tagged particle from the quantile of the same-`N`
/// semigroup profile. Equivalent to [`tagged_experiment_until`] with no stop
/// request.
pub fn tagged_experiment<E: Executor>(spec: &ExperimentSpec, deltas: &[f64], exec: &E) -> Result<TaggedReport> {
    tagged_experiment_until(spec, deltas, exec, &|| false)
}

/// As [`tagged_experiment`], but replicas not yet started when `stop`
/// returns true are skipped and the report is marked incomplete.
pub fn tagged_experiment_until<E: Executor>(
    spec: &ExperimentSpec,
    deltas: &[f64],
    exec: &E,
    stop: &(dyn Fn() -> bool + Sync),
) -> Result<TaggedReport> {
    if !spec.condition_origin {
        return Err(Error::InvalidSpec("tagged runs need condition_origin".into()));
    }
    let envs = spec.environments()?;
    let mut rows = Vec::new();
    let mut boundary_fractions = Vec::new();
    let mut complete = true;
    for env in &envs {
        let n = env.n();
        let nf = n as f64;
        let rho0 = spec.profile.sample(env.window(), n);
        let target = mass_left_of_origin(&rho0);
        let rho_t = spec.reference(env, &rho0)?;
        let u: Vec<f64> = rho_t
            .frames
            .iter()
            .zip(&spec.sample_times)
            .map(|(f, &t)| if t == 0.0 { Ok(0.0) } else { quantile_position(f, target) })
            .collect::<Result<_>>()?;
        let opts = ExclusionOptions {
            snapshots: false,
            guard_sites: spec.guard_sites,
        };
        let runs: Vec<Option<(Vec<i64>, bool)>> = exec
            .map(spec.replicas, |r| {
                if stop() {
                    return Ok(None);
                }
                let (mut init, mut dynamics) = replica_streams(spec.seed, n, r);
                let eta0 = sample_initial(&rho0, &mut init, true)?;
                let run = simulate_exclusion(env, &eta0, spec.horizon, &[], &spec.sample_times, &opts, &mut dynamics)?;
                Ok(Some((run.series.tagged, run.reached_boundary)))
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let done: Vec<&(Vec<i64>, bool)> = runs.iter().flatten().collect();
        if done.len() < runs.len() {
            complete = false;
        }
        let reached = done.iter().filter(|r| r.1).count();
        boundary_fractions.push(check_boundary(spec.guard_sites, reached, done.len(), spec.boundary_tolerance)?);
        for (ti, &t) in spec.sample_times.iter().enumerate() {
            let dev: Vec<f64> = done.iter().map(|r| (r.0[ti] as f64 / nf - u[ti]).abs()).collect();
            let mut exceedance = Vec::new();
            let mut exceedance_se = Vec::new();
            for &d in deltas {
                let hits: Vec<f64> = dev.iter().map(|v| if *v > d { 1.0 } else { 0.0 }).collect();
                let (m, se) = mean_se(&hits);
                exceedance.push(m);
                exceedance_se.push(se);
            }
            rows.push(TaggedRow {
                n,
                t,
                quantile: u[ti],
                exceedance,
                exceedance_se,
                mean_abs_deviation: mean_se(&dev).0,
                replicas: dev.len(),
            });
        }
    }
    Ok(TaggedReport {
        spec: spec.clone(),
        deltas: deltas.to_vec(),
        rows,
        boundary_fractions,
        complete,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdeResidual {
    pub t: f64,
    pub u: f64,
    /// `(u(t+h) - u(t-h)) / 2h`.
    pub finite_difference: f64,
    /// Right-hand side of the quantile equation at `(t, u(t))`.
    pub rhs: f64,
    pub residual: f64,
    /// `residual / max(|rhs|, |finite_difference|)`, or 0 when both vanish.
    pub relative: f64,
}

/// Velocity of the quantile of `ρ` at `u`.
///
/// Differentiating `∫ ρ = target` in time with `∂_t ρ = 𝕃ρ` and summing the
/// telescoping fluxes gives `u' = -D(u)/ρ(x)` for `u` in cell `x`, where
/// `D(u)` interpolates linearly between the `d/dW` derivatives of `ρ` on the
/// bonds `x-1` and `x` (zero outside the window). At a cell edge `u = x/N` the
/// left-limit cell `x-1` is used for the density.
pub fn quantile_velocity(env: &Environment, rho: &LatticeFunction, u: f64) -> Result<f64> {
    rho.compatible_with(env)?;
    let w = env.window();
    let nf = env.n() as f64;
    let d = dw_derivative(env, rho)?;
    let pos = u * nf;
    let mut x = libm::floor(pos) as i64;
    let theta = pos - x as f64;
    let on_edge = theta == 0.0;
    if on_edge {
        x -= 1;
    }
    let i = w.index(x)?;
    let density = rho.values[i];
    if density <= 0.0 {
        return Err(Error::ZeroDensityAtCrossing { site: x });
    }
    let bond = |k: i64| if k >= w.lo && k < w.hi { d.values[(k - w.lo) as usize] } else { 0.0 };
    let flux = if on_edge { bond(x) } else { (1.0 - theta) * bond(x - 1) + theta * bond(x) };
    Ok(-flux / density)
}

/// Compares the quantile velocity with centred differences of the quantile
/// trajectory `u` sampled at the (equally spaced) frame times.
pub fn tagged_ode_residual(env: &Environment, frames: &SemigroupSolution, u: &[f64]) -> Result<Vec<OdeResidual>> {
    let times = &frames.times;
    if u.len() != times.len() || times.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 frames and one quantile per frame".into()));
    }
    let h = times[1] - times[0];
    if times.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::InvalidTimes);
    }
    (1..times.len() - 1)
        .map(|i| {
            let fd = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let rhs = quantile_velocity(env, &frames.frames[i], u[i])?;
            let residual = (fd - rhs).abs();
            let scale = rhs.abs().max(fd.abs());
            Ok(OdeResidual {
                t: times[i],
                u: u[i],
                finite_difference: fd,
                rhs,
                residual,
                relative: if scale > 0.0 { residual / scale } else { 0.0 },
            })
        })
        .collect()
}

/// Environment family for the exit-time experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum ScalingModel {
    /// Inverse conductances i.i.d. with the given law.
    Stable { law: StableLaw },
    /// All conductances equal to one.
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ScalingSpec {
    pub model: ScalingModel,
    pub ladder: Vec<u64>,
    pub environments: usize,
    pub bootstrap: usize,
    /// Coverage of the bootstrap interval, e.g. 0.95.
    pub confidence: f64,
    pub seed: u64,
}

/// Smallest ladder and environment count accepted by [`scaling_exponent`].
pub const MIN_LADDER: usize = 4;
pub const MIN_ENVIRONMENTS: usize = 50;

impl ScalingSpec {
    /// Every problem with the spec, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let ScalingModel::Stable { law } = self.model {
            if let Err(e) = StableLaw::new(law.alpha(), law.c0()) {
                out.push(format!("model.law: {e}"));
            }
        }
        if self.ladder.len() < MIN_LADDER {
            out.push(format!("ladder: need at least {MIN_LADDER} levels, got {}", self.ladder.len()));
        }
        if self.ladder.contains(&0) {
            out.push("ladder: levels must be positive".into());
        }
        if self.environments < MIN_ENVIRONMENTS {
            out.push(format!("environments: need at least {MIN_ENVIRONMENTS}, got {}", self.environments));
        }
        if self.bootstrap == 0 {
            out.push("bootstrap: at least one resample is needed".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            out.push(format!("confidence: must lie in (0, 1), got {}", self.confidence));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingLevel {
    pub n: u64,
    /// Median exit time of each environment.
    pub environment_medians: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingReport {
    pub spec: ScalingSpec,
    pub levels: Vec<ScalingLevel>,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `1 + 1/α` for stable environments, 2 for constant ones.
    pub expected: f64,
}

/// Exit time from `[-n, n]` of the walk with jump rates `c_x` across bond
/// `{x, x+1}`, started at 0. `c[k]` belongs to bond `k - n - 1`.
pub fn simulate_exit_time<R: RngCore + ?Sized>(c: &[f64], n: i64, rng: &mut R) -> f64 {
    let mut x = 0i64;
    let mut t = 0.0;
    while x.abs() <= n {
        let i = (x + n + 1) as usize;
        let left = c[i - 1];
        let right = c[i];
        t += exponential(rng) / (left + right);
        if uniform_open(rng) * (left + right) < right {
            x += 1;
        } else {
            x -= 1;
        }
    }
    t
}

/// Median of the exit time simulated by [`simulate_exit_time`], computed
/// from the law rather than by sampling.
///
/// The walk killed on leaving `[-n, n]` has a symmetric generator `L`, so
/// `P(T > t) = Σ_k e^{-λ_k t} v_k(0) Σ_x v_k(x)` over its eigenpairs; the
/// median is found by bisection on this decreasing function.
pub fn median_exit_time(c: &[f64], n: i64) -> f64 {
    let size = (2 * n + 1) as usize;
    let mut l = nalgebra::DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        let (left, right) = (c[i], c[i + 1]);
        l[(i, i)] = left + right;
        if i + 1 < size {
            l[(i, i + 1)] = -right;
            l[(i + 1, i)] = -right;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(l);
    let origin = n as usize;
    let terms: Vec<(f64, f64)> = (0..size)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            (eig.eigenvalues[k], v[origin] * pairwise_sum(v.as_slice()))
        })
        .collect();
    let survival = |t: f64| terms.iter().map(|(lam, a)| a * libm::exp(-lam * t)).sum::<f64>();
    let mut hi = 1.0 / terms.iter().fold(0.0f64, |m, (lam, _)| m.max(*lam));
    while survival(hi) > 0.5 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if survival(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn bootstrap_medians(values: &[f64], rng: &mut impl RngCore) -> f64 {
    let n = values.len();
    let resample: Vec<f64> = (0..n)
        .map(|_| values[((uniform_open(rng) * n as f64) as usize).min(n - 1)])
        .collect();
    median(&resample)
}

/// Fits `log(median exit time) = slope · log N + intercept` for the walk
/// without speed-up, with a percentile bootstrap interval over environments.
/// The median of each environment is exact ([`median_exit_time`]), so the
/// only Monte Carlo error is that of the environment sample.
pub fn scaling_exponent<E: Executor>(spec: &ScalingSpec, exec: &E) -> Result<ScalingReport> {
    if spec.ladder.len() < MIN_LADDER || spec.environments < MIN_ENVIRONMENTS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_LADDER} levels and {MIN_ENVIRONMENTS} environments per level"
        )));
    }
    if spec.bootstrap == 0 || !(spec.confidence > 0.0 && spec.confidence < 1.0) {
        return Err(Error::InvalidSpec("bootstrap resamples and confidence must be positive".into()));
    }
    if spec.ladder.contains(&0) {
        return Err(Error::InvalidSpec("levels must be positive".into()));
    }
    let root = StreamFamily::new(spec.seed);
    let mut levels = Vec::new();
    for &n in &spec.ladder {
        let half = n as i64;
        let environment_medians: Vec<f64> = exec
            .map(spec.environments, |e| {
                let c: Vec<f64> = match spec.model {
                    ScalingModel::Constant => alloc::vec![1.0; 2 * n as usize + 2],
                    ScalingModel::Stable { law } => {
                        let path_seed = root.derive(domain::ENVIRONMENT).derive(n).stream(e as u64).next_u64();
                        let path = sample_subordinator_path(law, 1, -half - 1, half + 1, path_seed)?;
                        path.increments.iter().map(|g| 1.0 / g).collect()
                    }
                };
                Ok(median_exit_time(&c, half))
            })
            .into_iter()
            .collect::<Result<_>>()?;
        levels.push(ScalingLevel {
            n,
            median: median(&environment_medians),
            environment_medians,
        });
    }
    let logn: Vec<f64> = levels.iter().map(|l| libm::log(l.n as f64)).collect();
    let fit = |medians: &[f64]| linear_fit(&logn, &medians.iter().map(|m| libm::log(*m)).collect::<Vec<_>>());
    let (slope, intercept) = fit(&levels.iter().map(|l| l.median).collect::<Vec<_>>());
    let boot = root.derive(domain::BOOTSTRAP);
    let slopes: Vec<f64> = exec.map(spec.bootstrap, |b| {
        let mut rng = boot.stream(b as u64);
        let medians: Vec<f64> = levels.iter().map(|l| bootstrap_medians(&l.environment_medians, &mut rng)).collect();
        fit(&medians).0
    });
    let tail = (1.0 - spec.confidence) / 2.0;
    let expected = match spec.model {
        ScalingModel::Stable { law } => 1.0 + 1.0 / law.alpha(),
        ScalingModel::Constant => 2.0,
    };
    Ok(ScalingReport {
        spec: spec.clone(),
        levels,
        slope,
        intercept,
        ci_low: quantile(&slopes, tail),
        ci_high: quantile(&slopes, 1.0 - tail),
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_cell_arithmetic() {
        let w = Window::new(-2, 3).unwrap();
        let rho = LatticeFunction::new(w, 1, alloc::vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(quantile_position(&rho, 1.0).unwrap(), 1.0);
        assert_eq!(quantile_position(&rho, 0.5).unwrap(), 0.5);
        assert!(matches!(quantile_position(&rho, 2.0), Err(Error::TargetMassOutOfRange { .. })));
        let gap = LatticeFunction::new(w, 1, alloc::vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(quantile_position(&gap, 1.0), Err(Error::ZeroDensityAtCrossing { site: 0 }));
    }

    #[test]
    fn spec_violations_are_collected() {
        let spec = ExperimentSpec {
            law: StableLaw::new(0.5, 1.0).unwrap(),
            resolution: 64,
            ns: alloc::vec![32, 48],
            window: (2, 1),
            environment: EnvironmentModel::Quenched,
            profile: Shape::Constant { value: 1.5 },
            test_functions: alloc::vec![],
            sample_times: alloc::vec![0.1, 0.05],
            horizon: 0.1,
            replicas: 1,
            seed: 0,
            condition_origin: false,
            guard_sites: 10,
            boundary_tolerance: 1e-3,
            reference_dt: 1e-4,
        };
        let v = spec.violations();
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(v[0].contains("N = 48"));
    }

    #[test]
    fn refinement_distance_of_sampled_step() {
        let coarse = LatticeFunction::new(Window::new(0, 1).unwrap(), 1, alloc::vec![1.0, 0.0]).unwrap();
        let fine = LatticeFunction::new(Window::new(0, 2).unwrap(), 2, alloc::vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(refinement_distance(&coarse, &fine).unwrap(), 0.5);
    }
}

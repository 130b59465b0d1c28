//! Deterministic numerics for the sped-up random walk with generator
//!
//! ```text
//! (L_N f)(x) = N^{1+1/α} [ c_x (f(x+1) - f(x)) + c_{x-1} (f(x-1) - f(x)) ]
//! ```
//!
//! on a finite window with reflecting truncation: bonds leaving the window
//! are absent, so `L_N` stays symmetric with zero row and column sums.

use alloc::vec::Vec;

use crate::env::{Environment, Window};
use crate::lattice::{pairwise_sum, LatticeFunction};
use crate::tridiag::TridiagonalLu;
use crate::{Error, Result};

/// Time integrator for [`semigroup_solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    /// One-step θ-scheme with tridiagonal solves; `θ = 1/2` is
    /// Crank–Nicolson. For `θ < 1` the first two steps are replaced by four
    /// backward-Euler half steps to damp stiff components of rough data.
    ImplicitTheta { theta: f64 },
    /// Poissonized power series of `I + L/Λ` with `Λ` the largest exit rate.
    Uniformization,
}

impl Method {
    pub const CRANK_NICOLSON: Method = Method::ImplicitTheta { theta: 0.5 };
}

impl Default for Method {
    fn default() -> Self {
        Self::CRANK_NICOLSON
    }
}

/// Frames `P_t^N H_0` at the requested times.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SemigroupSolution {
    pub times: Vec<f64>,
    pub frames: Vec<LatticeFunction>,
    pub method: Method,
    /// Largest step actually used by the θ-scheme (0 for uniformization).
    pub max_step: f64,
}

/// Slack allowed beyond `[min H0, max H0]` before the step is refined.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-8;
/// Poisson tail left out of each uniformization sub-step.
pub const POISSON_TAIL: f64 = 1e-13;
/// Largest Poisson mean per uniformization sub-step.
const UNIFORMIZATION_SUBSTEP: f64 = 32.0;
const MAX_REFINEMENTS: usize = 40;

/// Bond rates `N^{1+1/α} c_x`.
fn rates(env: &Environment) -> Vec<f64> {
    let s = env.speed();
    env.conductances().iter().map(|c| s * c).collect()
}

fn apply_rates(rates: &[f64], f: &[f64], out: &mut [f64]) {
    let n = f.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut v = 0.0;
        if i + 1 < n {
            v += rates[i] * (f[i + 1] - f[i]);
        }
        if i > 0 {
            v += rates[i - 1] * (f[i - 1] - f[i]);
        }
        *o = v;
    }
}

pub fn generator_apply(env: &Environment, f: &LatticeFunction) -> Result<LatticeFunction> {
    f.compatible_with(env)?;
    let mut out = LatticeFunction::zeros(f.window, f.n);
    apply_rates(&rates(env), &f.values, &mut out.values);
    Ok(out)
}

fn validate_times(times: &[f64]) -> Result<()> {
    let ok = times.iter().all(|t| t.is_finite() && *t >= 0.0) && times.windows(2).all(|w| w[1] > w[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidTimes)
    }
}

/// Solves `dH/dt = L_N H`, `H(0) = h0` and returns `H` at each of `times`.
///
/// The θ-scheme uses steps of at most `dt_max`, landing exactly on every
/// requested time. If any frame leaves `[min h0, max h0]` by more than
/// [`MAX_PRINCIPLE_SLACK`] the whole solve is repeated with half the step.
pub fn semigroup_solve(
    env: &Environment,
    h0: &LatticeFunction,
    times: &[f64],
    method: Method,
    dt_max: f64,
) -> Result<SemigroupSolution> {
    h0.compatible_with(env)?;
    validate_times(times)?;
    if !(dt_max > 0.0) {
        return Err(Error::InvalidStep(dt_max));
    }
    let rates = rates(env);
    match method {
        Method::ImplicitTheta { theta } => {
            if !(0.5..=1.0).contains(&theta) {
                return Err(Error::InvalidSpec(alloc::format!("theta must lie in [1/2, 1], got {theta}")));
            }
            let lo = h0.min() - MAX_PRINCIPLE_SLACK;
            let hi = h0.max() + MAX_PRINCIPLE_SLACK;
            let mut bound = dt_max;
            let mut excess = 0.0;
            for _ in 0..MAX_REFINEMENTS {
                let (frames, used) = theta_frames(&rates, h0, times, theta, bound);
                excess = frames
                    .iter()
                    .flat_map(|f| f.values.iter())
                    .fold(0.0f64, |m, v| m.max(lo - v).max(v - hi));
                if excess <= 0.0 {
                    return Ok(SemigroupSolution {
                        times: times.to_vec(),
                        frames,
                        method,
                        max_step: used,
                    });
                }
                bound = used / 2.0;
            }
            Err(Error::MaxPrincipleViolated { excess })
        }
        Method::Uniformization => {
            let lambda = env.max_exit_rate();
            let mut frames = Vec::with_capacity(times.len());
            let mut u = h0.values.clone();
            let mut prev = 0.0;
            for &t in times {
                uniformized_advance(&rates, lambda, &mut u, t - prev);
                frames.push(LatticeFunction {
                    window: h0.window,
                    n: h0.n,
                    values: u.clone(),
                });
                prev = t;
            }
            Ok(SemigroupSolution {
                times: times.to_vec(),
                frames,
                method,
                max_step: 0.0,
            })
        }
    }
}

/// Factorization of `I - θ h L` together with the explicit weight `(1-θ) h`.
struct ThetaStep {
    h: f64,
    theta: f64,
    lu: TridiagonalLu,
}

impl ThetaStep {
    fn new(rates: &[f64], h: f64, theta: f64) -> Self {
        let n = rates.len() + 1;
        let off: Vec<f64> = rates.iter().map(|r| -theta * h * r).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let right = if i + 1 < n { rates[i] } else { 0.0 };
                let left = if i > 0 { rates[i - 1] } else { 0.0 };
                1.0 + theta * h * (left + right)
            })
            .collect();
        Self {
            h,
            theta,
            lu: TridiagonalLu::new(&off, &diag, &off),
        }
    }

    fn advance(&self, rates: &[f64], u: &mut [f64], scratch: &mut [f64]) {
        let explicit = (1.0 - self.theta) * self.h;
        if explicit > 0.0 {
            apply_rates(rates, u, scratch);
            for (v, g) in u.iter_mut().zip(scratch.iter()) {
                *v += explicit * g;
            }
        }
        self.lu.solve_in_place(u);
    }
}

fn theta_frames(
    rates: &[f64],
    h0: &LatticeFunction,
    times: &[f64],
    theta: f64,
    bound: f64,
) -> (Vec<LatticeFunction>, f64) {
    let mut u = h0.values.clone();
    let mut scratch = alloc::vec![0.0; u.len()];
    let mut frames = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    let mut started = false;
    let mut cached: Option<ThetaStep> = None;
    let mut used: f64 = 0.0;
    for &t in times {
        let span = t - prev;
        if span > 0.0 {
            let mut steps = libm::ceil(span / bound).max(1.0) as usize;
            let h = span / steps as f64;
            used = used.max(h);
            if !started && theta < 1.0 {
                let startup = steps.min(2);
                let euler = ThetaStep::new(rates, h / 2.0, 1.0);
                for _ in 0..2 * startup {
                    euler.advance(rates, &mut u, &mut scratch);
                }
                steps -= startup;
            }
            started = true;
            if steps > 0 {
                if cached.as_ref().is_none_or(|c| c.h != h) {
                    cached = Some(ThetaStep::new(rates, h, theta));
                }
                let step = cached.as_ref().unwrap();
                for _ in 0..steps {
                    step.advance(rates, &mut u, &mut scratch);
                }
            }
        }
        frames.push(LatticeFunction {
            window: h0.window,
            n: h0.n,
            values: u.clone(),
        });
        prev = t;
    }
    (frames, used)
}

/// Advances `u` by `span` with `exp(span L) = Σ_k Pois(k; Λ span) (I + L/Λ)^k`,
/// split into sub-steps of Poisson mean at most 32. Each sub-step drops a
/// tail of at most [`POISSON_TAIL`] and renormalizes the kept weights.
fn uniformized_advance(rates: &[f64], lambda: f64, u: &mut [f64], span: f64) {
    if span <= 0.0 || lambda <= 0.0 {
        return;
    }
    let substeps = libm::ceil(lambda * span / UNIFORMIZATION_SUBSTEP).max(1.0) as usize;
    let mean = lambda * span / substeps as f64;
    let n = u.len();
    let mut power = alloc::vec![0.0; n];
    let mut next = alloc::vec![0.0; n];
    let mut acc = alloc::vec![0.0; n];
    let inv = 1.0 / lambda;
    for _ in 0..substeps {
        power.copy_from_slice(u);
        let mut weight = libm::exp(-mean);
        let mut kept = weight;
        for (a, p) in acc.iter_mut().zip(&power) {
            *a = weight * p;
        }
        let mut k = 0usize;
        while 1.0 - kept > POISSON_TAIL && k < 10_000 {
            k += 1;
            apply_rates(rates, &power, &mut next);
            for (p, g) in power.iter_mut().zip(&next) {
                *p += inv * g;
            }
            weight *= mean / k as f64;
            kept += weight;
            for (a, p) in acc.iter_mut().zip(&power) {
                *a += weight * p;
            }
        }
        for (v, a) in u.iter_mut().zip(&acc) {
            *v = a / kept;
        }
    }
}

/// Options for [`transition_kernel_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelOptions {
    pub method: Method,
    /// Upper bound on the θ-scheme step; the step is further capped at
    /// `1/Λ`, which keeps Crank–Nicolson positivity preserving, and at
    /// `t/10000` so slow chains still get a resolved time grid.
    pub dt_max: f64,
    /// Width of the boundary strip whose mass is checked.
    pub guard_sites: usize,
    /// Largest kernel mass tolerated inside the boundary strip.
    pub guard_mass: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            method: Method::CRANK_NICOLSON,
            dt_max: f64::INFINITY,
            guard_sites: 10,
            guard_mass: 1e-6,
        }
    }
}

/// Negative kernel values above this are round-off and are set to zero.
pub const KERNEL_CLAMP: f64 = 1e-12;

/// `y ↦ p_t^N(x0, y)`.
pub fn transition_kernel(env: &Environment, t: f64, x0: i64) -> Result<LatticeFunction> {
    transition_kernel_with(env, t, x0, &KernelOptions::default())
}

pub fn transition_kernel_with(
    env: &Environment,
    t: f64,
    x0: i64,
    opts: &KernelOptions,
) -> Result<LatticeFunction> {
    let start = LatticeFunction::indicator(env.window(), env.n(), x0)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidTimes);
    }
    if t == 0.0 {
        return Ok(start);
    }
    let dt = opts.dt_max.min(1.0 / env.max_exit_rate()).min(t / 10_000.0);
    let sol = semigroup_solve(env, &start, &[t], opts.method, dt)?;
    let mut kernel = sol.frames.into_iter().next().unwrap();
    for (i, v) in kernel.values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -KERNEL_CLAMP {
                return Err(Error::NegativeKernel {
                    site: env.window().site(i),
                    value: *v,
                });
            }
            *v = 0.0;
        }
    }
    let g = opts.guard_sites.min(kernel.values.len());
    let len = kernel.values.len();
    let edge: f64 = kernel.values[..g].iter().sum::<f64>() + kernel.values[len - g..].iter().sum::<f64>();
    if edge > opts.guard_mass {
        return Err(Error::BoundaryMass {
            mass: edge,
            sites: g,
            limit: opts.guard_mass,
        });
    }
    Ok(kernel)
}

/// Solves `λ g_λ - L_N g_λ = g` by tridiagonal elimination.
pub fn resolvent_solve(env: &Environment, lambda: f64, g: &LatticeFunction) -> Result<LatticeFunction> {
    g.compatible_with(env)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidLambda(lambda));
    }
    let rates = rates(env);
    let n = g.values.len();
    let off: Vec<f64> = rates.iter().map(|r| -r).collect();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let right = if i + 1 < n { rates[i] } else { 0.0 };
            let left = if i > 0 { rates[i - 1] } else { 0.0 };
            lambda + left + right
        })
        .collect();
    let mut out = g.clone();
    TridiagonalLu::new(&off, &diag, &off).solve_in_place(&mut out.values);
    Ok(out)
}

/// `(N^{1/α} / N^2) Σ_x c_x (∇_N f)(x/N)^2` with `∇_N f(x/N) = N (f(x+1) - f(x))`.
pub fn dirichlet_energy(env: &Environment, f: &LatticeFunction) -> Result<f64> {
    f.compatible_with(env)?;
    let nf = env.n() as f64;
    let terms: Vec<f64> = env
        .conductances()
        .iter()
        .zip(f.values.windows(2))
        .map(|(c, w)| {
            let grad = nf * (w[1] - w[0]);
            c * grad * grad
        })
        .collect();
    Ok(env.w_scale() / (nf * nf) * pairwise_sum(&terms))
}

/// Bond-indexed `(df/dW)(x) = (f(x+1) - f(x)) / (W((x+1)/N) - W(x/N))`,
/// returned on the window `[lo, hi - 1]` of bonds.
pub fn dw_derivative(env: &Environment, f: &LatticeFunction) -> Result<LatticeFunction> {
    f.compatible_with(env)?;
    let w = env.cum_w();
    let values = f
        .values
        .windows(2)
        .zip(w.windows(2))
        .map(|(fv, wv)| (fv[1] - fv[0]) / (wv[1] - wv[0]))
        .collect();
    let win = env.window();
    Ok(LatticeFunction {
        window: Window {
            lo: win.lo,
            hi: win.hi - 1,
        },
        n: f.n,
        values,
    })
}

mod common;

use common::*;
use stablex_core::exec::Sequential;
use stablex_core::hydro::*;
use stablex_core::lattice::LatticeFunction;
use stablex_core::rng::{uniform_open, StreamFamily};
use stablex_core::walk::{semigroup_solve, Method};
use stablex_core::{Environment, StableLaw, Window};

fn base_spec() -> ExperimentSpec {
    ExperimentSpec {
        law: law(0.5),
        resolution: 128,
        ns: vec![8, 16, 32],
        window: (-6, 6),
        environment: EnvironmentModel::Quenched,
        profile: Shape::Bump {
            center: 0.0,
            radius: 1.0,
            height: 0.8,
        },
        test_functions: vec![Shape::Bump {
            center: 0.0,
            radius: 1.5,
            height: 1.0,
        }],
        sample_times: vec![0.005, 0.01],
        horizon: 0.01,
        replicas: 200,
        seed: 3,
        condition_origin: false,
        guard_sites: 10,
        boundary_tolerance: 1e-3,
        reference_dt: 1e-5,
    }
}

/// Reflecting heat equation `∂_t f = r Δ f` on `sites` lattice points, by its
/// cosine eigenbasis.
fn neumann_heat(f0: &[f64], r: f64, t: f64) -> Vec<f64> {
    let l = f0.len();
    let lf = l as f64;
    let basis = |k: usize, i: usize| (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / lf).cos();
    let mut out = vec![0.0; l];
    for k in 0..l {
        let norm: f64 = (0..l).map(|i| basis(k, i).powi(2)).sum();
        let coef: f64 = (0..l).map(|i| f0[i] * basis(k, i)).sum::<f64>() / norm;
        let mu = 2.0 * r * (1.0 - (std::f64::consts::PI * k as f64 / lf).cos());
        let decay = (-mu * t).exp();
        for (i, o) in out.iter_mut().enumerate() {
            *o += coef * decay * basis(k, i);
        }
    }
    out
}

#[test]
fn quantile_of_symmetric_profile_is_origin() {
    let w = Window::new(-40, 40).unwrap();
    // Symmetric about 0 for cells [x/N, (x+1)/N): value at x mirrors x' = -1 - x.
    let rho = LatticeFunction::from_fn(w, 8, |u| (-(u + 1.0 / 16.0).powi(2)).exp() * 0.9);
    let total: f64 = rho.values[..80].iter().sum::<f64>() / 8.0;
    let u = quantile_position(&LatticeFunction::new(Window::new(-40, 39).unwrap(), 8, rho.values[..80].to_vec()).unwrap(), total / 2.0)
        .unwrap();
    assert!(u.abs() <= 1e-12, "{u}");
}

#[test]
fn quantile_matches_fine_riemann_sum() {
    let w = Window::new(-25, 24).unwrap();
    let mut rng = StreamFamily::new(6).stream(0);
    let rho = LatticeFunction::new(w, 10, (0..50).map(|_| 0.05 + uniform_open(&mut rng)).collect()).unwrap();
    let (lo, hi) = (-2.5, 2.5);
    let points = 1_000_000;
    let du = (hi - lo) / points as f64;
    let total: f64 = rho.values.iter().sum::<f64>() / 10.0;
    for frac in [0.1, 0.37, 0.5, 0.93] {
        let target = frac * total;
        let mut acc = 0.0;
        let mut oracle = f64::NAN;
        for j in 0..points {
            let left = lo + j as f64 * du;
            let mid = left + 0.5 * du;
            let cell = (mid * 10.0).floor() as i64;
            let v = rho.values[(cell + 25) as usize];
            if acc + v * du >= target {
                oracle = left + (target - acc) / v;
                break;
            }
            acc += v * du;
        }
        let u = quantile_position(&rho, target).unwrap();
        assert!((u - oracle).abs() <= 1e-9, "{u} vs {oracle}");
    }
}

#[test]
fn homogeneous_refinement_matches_heat_oracle() {
    let kappa = 1.5;
    let mut spec = base_spec();
    spec.environment = EnvironmentModel::Homogeneous { kappa };
    spec.ns = vec![8, 16, 32, 64];
    spec.sample_times = vec![0.01, 0.05];
    spec.horizon = 0.05;
    let rep = cross_n_cauchy(&spec).unwrap();
    assert!(rep.decreasing);
    for row in &rep.rows {
        let profile = |n: u64| {
            let w = spec.level_window(n).unwrap();
            let f0 = spec.profile.sample(w, n);
            let r = (n * n) as f64 / kappa;
            LatticeFunction::new(w, n, neumann_heat(&f0.values, r, row.t)).unwrap()
        };
        let d = refinement_distance(&profile(row.n), &profile(2 * row.n)).unwrap();
        assert!((row.distance - d).abs() <= 1e-6, "N={} t={}: {} vs {d}", row.n, row.t, row.distance);
    }
}

#[test]
fn refinement_at_time_zero_is_sampling_error() {
    let mut spec = base_spec();
    spec.ns = vec![8, 16, 32, 64, 128];
    spec.sample_times = vec![0.0];
    let rep = cross_n_cauchy(&spec).unwrap();
    assert!(rep.decreasing);
    for row in &rep.rows {
        let w = spec.level_window(row.n).unwrap();
        let d = refinement_distance(&spec.profile.sample(w, row.n), &spec.profile.sample(spec.level_window(2 * row.n).unwrap(), 2 * row.n))
            .unwrap();
        assert_eq!(row.distance, d);
    }
    assert!(rep.rows.last().unwrap().distance < 0.01);
}

#[test]
fn stable_refinement_shrinks() {
    let mut spec = base_spec();
    spec.resolution = 256;
    spec.ns = vec![32, 64, 128];
    spec.sample_times = vec![0.01];
    let rep = cross_n_cauchy(&spec).unwrap();
    assert!(rep.rows[1].distance < rep.rows[0].distance, "{:?}", rep.rows);
}

#[test]
fn reference_mass_is_conserved() {
    let e = env(0.5, 32, 96, 4);
    let rho0 = LatticeFunction::from_fn(e.window(), 32, |u| if u.abs() <= 1.0 { 0.5 } else { 0.0 });
    let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.01).collect();
    let sol = semigroup_solve(&e, &rho0, &times, Method::CRANK_NICOLSON, 1e-4).unwrap();
    for f in &sol.frames {
        assert!((f.integral() - rho0.integral()).abs() <= 1e-10);
    }
}

#[test]
fn stationary_profile_has_no_drift() {
    let e = env(0.5, 16, 48, 2);
    let rho = LatticeFunction::constant(e.window(), 16, 0.4);
    let times = [0.0, 0.01, 0.02];
    let sol = semigroup_solve(&e, &rho, &times, Method::CRANK_NICOLSON, 1e-4).unwrap();
    let target = mass_left_of_origin(&rho);
    let u: Vec<f64> = sol.frames.iter().map(|f| quantile_position(f, target).unwrap()).collect();
    for r in tagged_ode_residual(&e, &sol, &u).unwrap() {
        assert!(r.rhs.abs() < 1e-9 && r.finite_difference.abs() < 1e-6, "{r:?}");
    }
}

fn gaussian_frames(n: u64, h: f64, steps: usize) -> (Environment, stablex_core::walk::SemigroupSolution, Vec<f64>) {
    let w = Window::new(-4 * n as i64, 4 * n as i64).unwrap();
    let e = Environment::homogeneous(law(0.5), n, w, 1.0).unwrap();
    let rho0 = LatticeFunction::from_fn(w, n, |u| 0.8 * (-(u - 0.3).powi(2) / (2.0 * 0.09)).exp());
    let times: Vec<f64> = (0..=steps).map(|k| 0.005 + k as f64 * h).collect();
    let sol = semigroup_solve(&e, &rho0, &times, Method::CRANK_NICOLSON, 1e-5).unwrap();
    let target = mass_left_of_origin(&rho0);
    let u = sol.frames.iter().map(|f| quantile_position(f, target).unwrap()).collect();
    (e, sol, u)
}

#[test]
fn homogeneous_quantile_follows_classical_drift() {
    let (e, sol, u) = gaussian_frames(64, 1e-3, 20);
    let res = tagged_ode_residual(&e, &sol, &u).unwrap();
    for r in &res {
        // ρ(t, u) ∝ exp(-(u - 0.3)²/(2 s²)) with s² = 0.09 + 2t, so -∂ρ/ρ = (u - 0.3)/s².
        let classical = (r.u - 0.3) / (0.09 + 2.0 * r.t);
        assert!((r.rhs - classical).abs() <= 0.05 * classical.abs(), "{r:?} vs {classical}");
        assert!((r.finite_difference - classical).abs() <= 0.05 * classical.abs());
        assert!(r.relative <= 0.05);
    }
}

#[test]
fn ode_residual_shrinks_with_frame_spacing() {
    let coarse = {
        let (e, sol, u) = gaussian_frames(32, 4e-3, 4);
        tagged_ode_residual(&e, &sol, &u).unwrap()
    };
    let fine = {
        let (e, sol, u) = gaussian_frames(32, 2e-3, 8);
        tagged_ode_residual(&e, &sol, &u).unwrap()
    };
    // Common interior times 0.009, 0.013, 0.017 sit at odd fine indices.
    for (k, c) in coarse.iter().enumerate() {
        let f = &fine[2 * k + 1];
        assert!((f.t - c.t).abs() < 1e-12);
        assert!(f.residual < c.residual, "t={}: {} vs {}", c.t, f.residual, c.residual);
    }
}

#[test]
fn quantile_moves_continuously() {
    let e = env(0.5, 32, 128, 5);
    let rho0 = LatticeFunction::from_fn(e.window(), 32, |u| if (-1.0..=1.0).contains(&u) { 0.5 } else { 0.1 });
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 1e-4).collect();
    let sol = semigroup_solve(&e, &rho0, &times, Method::CRANK_NICOLSON, 1e-5).unwrap();
    let target = mass_left_of_origin(&rho0);
    let u: Vec<f64> = sol.frames.iter().map(|f| quantile_position(f, target).unwrap()).collect();
    for k in 0..times.len() - 1 {
        let (a, b) = (&sol.frames[k], &sol.frames[k + 1]);
        let mut ca = 0.0;
        let mut cb = 0.0;
        let mut tv: f64 = 0.0;
        for (x, y) in a.values.iter().zip(&b.values) {
            ca += x / 32.0;
            cb += y / 32.0;
            tv = tv.max((ca - cb).abs());
        }
        let bound = tv / b.min().min(a.min());
        assert!((u[k + 1] - u[k]).abs() <= 10.0 * bound + 1e-12, "step {k}");
    }
}

#[test]
fn exact_median_matches_simulated_walks() {
    let p = stablex_core::sample_subordinator_path(law(0.5), 1, -5, 5, 42).unwrap();
    let c: Vec<f64> = p.increments.iter().map(|g| 1.0 / g).collect();
    let m = median_exit_time(&c, 4);
    let walks = 20_000;
    let family = StreamFamily::new(3);
    let below = (0..walks).filter(|k| simulate_exit_time(&c, 4, &mut family.stream(*k)) <= m).count();
    let frac = below as f64 / walks as f64;
    assert!((frac - 0.5).abs() < 3.0 * (0.25 / walks as f64).sqrt(), "{frac}");
}

#[test]
fn constant_environment_scales_diffusively() {
    let spec = ScalingSpec {
        model: ScalingModel::Constant,
        ladder: vec![16, 32, 64, 128],
        environments: 50,
        bootstrap: 200,
        confidence: 0.95,
        seed: 1,
    };
    let rep = scaling_exponent(&spec, &Sequential).unwrap();
    assert_eq!(rep.expected, 2.0);
    assert!((rep.slope - 2.0).abs() < 0.1, "{}", rep.slope);
    let mut short = spec.clone();
    short.ladder.truncate(3);
    assert!(scaling_exponent(&short, &Sequential).is_err());
}

#[test]
fn stationary_hydro_error_is_noise() {
    let mut spec = base_spec();
    spec.profile = Shape::Constant { value: 0.4 };
    spec.guard_sites = 0;
    spec.ns = vec![8, 16];
    let rep = quenched_hydro(&spec, &Sequential).unwrap();
    for r in &rep.rows {
        assert!((r.mean - r.reference).abs() < 3.0 * r.se, "{r:?}");
        assert!(r.bound_holds);
    }
    assert!(rep.diagnostics.iter().all(|d| d.conservation_violations == 0 && d.reference_mass_drift < 1e-10));
}

#[test]
fn quenched_report_is_reproducible() {
    let spec = base_spec();
    let a = quenched_hydro(&spec, &Sequential).unwrap();
    let b = quenched_hydro(&spec, &Sequential).unwrap();
    assert_eq!(a, b);
    assert!(a.bound_holds);
    assert!(a.rows.iter().all(|r| r.se > 0.0));
}

#[test]
fn tagged_report_starts_at_the_quantile() {
    let mut spec = base_spec();
    spec.profile = Shape::Step {
        lo: -1.0,
        hi: 1.0,
        value: 0.5,
    };
    spec.condition_origin = true;
    spec.sample_times = vec![0.0, 0.005];
    spec.horizon = 0.005;
    spec.ns = vec![8, 16];
    let rep = tagged_experiment(&spec, &[0.05, 0.1], &Sequential).unwrap();
    assert!(rep.complete);
    let first = &rep.rows[0];
    assert_eq!(first.quantile, 0.0);
    assert_eq!(first.exceedance, [0.0, 0.0]);
    let mut untagged = spec.clone();
    untagged.condition_origin = false;
    assert!(tagged_experiment(&untagged, &[0.1], &Sequential).is_err());
}

#[test]
fn stopped_tagged_run_is_incomplete() {
    let mut spec = base_spec();
    spec.profile = Shape::Step {
        lo: -1.0,
        hi: 1.0,
        value: 0.5,
    };
    spec.condition_origin = true;
    spec.ns = vec![8];
    let rep = tagged_experiment_until(&spec, &[0.1], &Sequential, &|| true).unwrap();
    assert!(!rep.complete);
    assert_eq!(rep.rows[0].replicas, 0);
}

#[test]
fn unscaled_law_has_unit_cells() {
    // The exit-time environments use inverse conductances drawn at resolution 1.
    let p = stablex_core::sample_subordinator_path(StableLaw::new(0.5, 1.0).unwrap(), 1, -3, 3, 0).unwrap();
    assert_eq!(p.increments.len(), 6);
}

#[test]
fn doubling_environments_narrows_interval_by_root_two() {
    let spec = |environments| ScalingSpec {
        model: ScalingModel::Stable {
            law: StableLaw::new(0.5, 1.0).unwrap(),
        },
        ladder: vec![8, 16, 32, 64],
        environments,
        bootstrap: 1000,
        confidence: 0.95,
        seed: 7,
    };
    let a = scaling_exponent(&spec(100), &Sequential).unwrap();
    let b = scaling_exponent(&spec(200), &Sequential).unwrap();
    let ratio = (a.ci_high - a.ci_low) / (b.ci_high - b.ci_low);
    let r2 = 2f64.sqrt();
    assert!(ratio > r2 / 1.5 && ratio < 1.5 * r2, "{ratio}");
}

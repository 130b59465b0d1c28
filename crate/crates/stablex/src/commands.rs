//! The work behind each subcommand, callable without going through argument
//! parsing.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;
use stablex_core::exec::Executor;
use stablex_core::hydro::{
    cross_n_cauchy, quenched_hydro, scaling_exponent, tagged_experiment_until, CauchyReport, ConvergenceReport, ScalingReport,
    Shape, TaggedReport,
};
use stablex_core::lattice::LatticeFunction;
use stablex_core::particles::{sample_initial, simulate_exclusion, simulate_walk, ExclusionOptions, ObservableSeries, Snapshot};
use stablex_core::rng::{domain, StreamFamily};
use stablex_core::stone::{compare_samplers, EquivalenceReport, Sampler};
use stablex_core::walk::{resolvent_solve, transition_kernel_with, KernelOptions, Method};
use stablex_core::{coarse_grain, sample_subordinator_path, Environment, StableLaw};

use crate::config::{ConfigError, RunConfig};
use crate::envfile::{load_environment, save_environment, EnvFileError, Header};
use crate::output::{self, config_hash, OutputError, Provenance, Table, Writer};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] stablex_core::Error),
    #[error(transparent)]
    EnvFile(#[from] EnvFileError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("check failed: {0}")]
    Tolerance(String),
}

impl RunError {
    /// 1 for invalid input, 2 for failures while running or failed checks.
    pub fn exit_code(&self) -> i32 {
        use stablex_core::Error as E;
        match self {
            RunError::Usage(_) | RunError::Config(ConfigError::Invalid(_) | ConfigError::Syntax { .. }) => 1,
            RunError::Core(
                E::InvalidAlpha(_)
                | E::InvalidScale(_)
                | E::InvalidResolution
                | E::InvalidRange { .. }
                | E::ResolutionMismatch { .. }
                | E::WindowTooSmall { .. }
                | E::InvalidTimes
                | E::InvalidStep(_)
                | E::InvalidLambda(_)
                | E::SiteOutsideWindow { .. }
                | E::ProfileOutOfRange { .. }
                | E::SampleTimeBeyondHorizon { .. }
                | E::InvalidSpec(_)
                | E::InsufficientData(_),
            ) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

/// Hash of a configuration without its `output` section, so the same run
/// written to different places carries the same provenance.
pub fn run_provenance(cfg: &RunConfig, seed: u64) -> Provenance {
    let mut v = cfg.normalized();
    if let Value::Object(m) = &mut v {
        m.remove("output");
    }
    Provenance {
        config_hash: config_hash(&v),
        seed,
    }
}

pub fn args_provenance<T: Serialize>(args: &T, seed: u64) -> Provenance {
    Provenance {
        config_hash: config_hash(args),
        seed,
    }
}

/// `--out`, then the config, then `STABLEX_OUT`, then the current directory.
pub fn output_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .or_else(|| std::env::var_os("STABLEX_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvGenArgs {
    pub alpha: f64,
    pub c0: f64,
    /// Fine resolution of the sampled path.
    pub resolution: u64,
    pub n: u64,
    /// Macroscopic range `[lo, hi]`.
    pub lo: i64,
    pub hi: i64,
    pub seed: u64,
}

pub fn env_gen(args: &EnvGenArgs, path: &Path) -> Result<Environment> {
    let law = StableLaw::new(args.alpha, args.c0)?;
    let m = args.resolution as i64;
    let fine = sample_subordinator_path(law, args.resolution, args.lo * m, args.hi * m, args.seed)?;
    let env = coarse_grain(&fine, args.n)?;
    save_environment(&env, path)?;
    Ok(env)
}

pub fn describe_environment(env: &Environment, header: &Header) -> String {
    let w = env.window();
    let mut s = String::new();
    s += &format!("alpha        {}\n", env.law().alpha());
    s += &format!("c0           {}\n", env.law().c0());
    s += &format!("N            {}\n", env.n());
    s += &format!("window       [{}, {}] ({} sites)\n", w.lo, w.hi, w.sites());
    s += &format!("min c_x      {:.16e}\n", env.min_conductance());
    s += &format!("max c_x      {:.16e}\n", env.max_conductance());
    if let Some(p) = env.provenance() {
        s += &format!(
            "path         M = {}, cells [{}, {}), seed {}\n",
            p.resolution, p.path_lo, p.path_hi, p.seed
        );
    }
    s += &format!("sha256       {}\n", header.sha256);
    s
}

pub fn env_inspect(path: &Path) -> Result<String> {
    let (env, header) = load_environment(path)?;
    Ok(describe_environment(&env, &header))
}

fn env_seed(env: &Environment) -> u64 {
    env.provenance().map_or(0, |p| p.seed)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelArgs {
    pub env_sha256: String,
    pub t: f64,
    pub x0: i64,
    pub uniformization: bool,
    pub guard_sites: usize,
    pub guard_mass: f64,
}

pub fn walk_kernel(env: &Environment, args: &KernelArgs, out: &Path) -> Result<LatticeFunction> {
    let opts = KernelOptions {
        method: if args.uniformization {
            Method::Uniformization
        } else {
            Method::CRANK_NICOLSON
        },
        guard_sites: args.guard_sites,
        guard_mass: args.guard_mass,
        ..KernelOptions::default()
    };
    let k = transition_kernel_with(env, args.t, args.x0, &opts)?;
    let mut w = Writer::new(out, args_provenance(args, env_seed(env)), true, false)?;
    w.table("kernel", &output::frame_table(&k))?;
    Ok(k)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventArgs {
    pub env_sha256: String,
    pub lambda: f64,
    pub g: Shape,
}

pub fn walk_resolvent(env: &Environment, args: &ResolventArgs, out: &Path) -> Result<LatticeFunction> {
    let g = args.g.sample(env.window(), env.n());
    let r = resolvent_solve(env, args.lambda, &g)?;
    let mut w = Writer::new(out, args_provenance(args, env_seed(env)), true, false)?;
    w.table("resolvent", &output::frame_table(&r))?;
    Ok(r)
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkSimArgs {
    pub env_sha256: String,
    pub x0: i64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
}

pub fn walk_sim<E: Executor>(env: &Environment, args: &WalkSimArgs, exec: &E, out: &Path) -> Result<Vec<i64>> {
    let family = StreamFamily::new(args.seed).derive(domain::WALK);
    let paths = exec
        .map(args.replicas, |r| simulate_walk(env, args.x0, args.t, &mut family.stream(r as u64)))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut t = Table::new(&["replica", "end", "jumps"]);
    for (r, p) in paths.iter().enumerate() {
        t.push(vec![r.into(), p.end().into(), p.jumps().into()]);
    }
    let mut w = Writer::new(out, args_provenance(args, args.seed), true, false)?;
    w.table("walk_sim", &t)?;
    Ok(paths.iter().map(|p| p.end()).collect())
}

pub struct ExclusionOutput {
    pub series: Vec<ObservableSeries>,
    pub events: u64,
    pub conservation_violations: u64,
    pub boundary_replicas: usize,
}

/// Replicas of the exclusion process at one level of the configured
/// experiment, using the same streams as the hydrodynamic runs.
pub fn excl_sim<E: Executor>(cfg: &RunConfig, level: Option<u64>, exec: &E, out: &Path) -> Result<ExclusionOutput> {
    let spec = cfg.require_experiment()?;
    let n = level.unwrap_or(spec.ns[0]);
    let k = spec
        .ns
        .iter()
        .position(|&m| m == n)
        .ok_or_else(|| RunError::Usage(format!("level {n} is not among the configured levels {:?}", spec.ns)))?;
    let env = spec.environments()?.swap_remove(k);
    let window = env.window();
    let profile = spec.profile.sample(window, n);
    let hs: Vec<LatticeFunction> = spec.test_functions.iter().map(|h| h.sample(window, n)).collect();
    let opts = ExclusionOptions {
        snapshots: cfg.output.snapshots,
        guard_sites: spec.guard_sites,
    };
    let root = StreamFamily::new(spec.seed);
    let runs = exec
        .map(spec.replicas, |r| {
            let mut init = root.derive(domain::INITIAL).derive(n).stream(r as u64);
            let mut dynamics = root.derive(domain::DYNAMICS).derive(n).stream(r as u64);
            let eta = sample_initial(&profile, &mut init, spec.condition_origin)?;
            simulate_exclusion(&env, &eta, spec.horizon, &hs, &spec.sample_times, &opts, &mut dynamics)
        })
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut series = Vec::with_capacity(runs.len());
    let mut snaps: Vec<(u64, Vec<Snapshot>)> = Vec::new();
    let (mut events, mut violations, mut boundary) = (0, 0, 0);
    for (r, run) in runs.into_iter().enumerate() {
        events += run.events;
        violations += run.conservation_violations;
        boundary += usize::from(run.reached_boundary);
        let mut s = run.series;
        s.replica = r as u64;
        s.seed = spec.seed;
        series.push(s);
        if cfg.output.snapshots {
            snaps.push((r as u64, run.snapshots));
        }
    }
    let mut w = Writer::new(out, run_provenance(cfg, spec.seed), cfg.output.csv, cfg.output.json)?;
    w.table("excl_series", &output::series_table(&series))?;
    if cfg.output.snapshots {
        w.table("excl_snapshots", &output::snapshot_table(&snaps))?;
    }
    if violations > 0 {
        return Err(RunError::Tolerance(format!("{violations} events changed the particle count")));
    }
    Ok(ExclusionOutput {
        series,
        events,
        conservation_violations: violations,
        boundary_replicas: boundary,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StoneArgs {
    pub env_sha256: String,
    pub x0: i64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub level: f64,
}

pub fn stone_compare<E: Executor>(env: &Environment, args: &StoneArgs, exec: &E, out: &Path) -> Result<EquivalenceReport> {
    let rep = compare_samplers(
        Sampler::Walk(env),
        Sampler::GapWalk(env),
        args.x0,
        args.t,
        args.replicas,
        args.seed,
        args.level,
        exec,
    )?;
    let mut w = Writer::new(out, args_provenance(args, args.seed), true, true)?;
    w.report("stone", "stone", &rep)?;
    w.table("stone", &output::equivalence_table(&rep))?;
    if !rep.passed {
        return Err(RunError::Tolerance(format!(
            "walk and gap process differ at level {} (p = {:.3e})",
            args.level, rep.ks.p_value
        )));
    }
    Ok(rep)
}

pub struct HydroOutput {
    pub report: ConvergenceReport,
    pub cauchy: Option<CauchyReport>,
}

fn doubles(ns: &[u64]) -> bool {
    ns.len() >= 2 && ns.windows(2).all(|w| w[1] == 2 * w[0])
}

/// Quenched convergence report, plus the cross-level distances when the
/// ladder doubles. Fails the check when the variance bound or the
/// monotone decrease of the error does not hold.
pub fn hydro_run<E: Executor>(cfg: &RunConfig, exec: &E, out: &Path) -> Result<HydroOutput> {
    let spec = cfg.require_experiment()?;
    let report = quenched_hydro(spec, exec)?;
    let cauchy = if doubles(&spec.ns) {
        Some(cross_n_cauchy(spec)?)
    } else {
        None
    };
    let mut w = Writer::new(out, run_provenance(cfg, spec.seed), cfg.output.csv, cfg.output.json)?;
    w.report("hydro", "hydro", &report)?;
    w.table("hydro_rows", &output::convergence_table(&report))?;
    w.table("hydro_summary", &output::summary_table(&report))?;
    if let Some(c) = &cauchy {
        w.report("cauchy", "cauchy", c)?;
        w.table("cauchy", &output::cauchy_table(c))?;
    }
    if !report.bound_holds {
        return Err(RunError::Tolerance("variance bound exceeded".into()));
    }
    if !report.error_decreasing {
        return Err(RunError::Tolerance("error does not decrease along the levels".into()));
    }
    Ok(HydroOutput { report, cauchy })
}

pub fn tagged_run<E: Executor>(cfg: &RunConfig, exec: &E, out: &Path) -> Result<TaggedReport> {
    let spec = cfg.require_experiment()?;
    let settings = cfg.require_tagged()?;
    let deadline = settings
        .time_limit_secs
        .map(|s| Instant::now() + Duration::from_secs_f64(s));
    let stop = move || deadline.is_some_and(|d| Instant::now() >= d);
    let report = tagged_experiment_until(spec, &settings.deltas, exec, &stop)?;
    let mut w = Writer::new(out, run_provenance(cfg, spec.seed), cfg.output.csv, cfg.output.json)?;
    w.report("tagged", "tagged", &report)?;
    w.table("tagged", &output::tagged_table(&report))?;
    if !report.complete {
        return Err(RunError::Tolerance(format!(
            "time limit of {} s reached before all replicas finished",
            settings.time_limit_secs.unwrap_or_default()
        )));
    }
    if let Some(limit) = cfg.tolerances.tagged_exceedance {
        let finest = spec.ns.iter().max().copied().unwrap_or(0);
        if let Some(row) = report.rows.iter().rev().find(|r| r.n == finest) {
            if row.exceedance[0] > limit {
                return Err(RunError::Tolerance(format!(
                    "exceedance {} at N = {finest} is above {limit}",
                    row.exceedance[0]
                )));
            }
        }
    }
    Ok(report)
}

pub fn scaling_run<E: Executor>(cfg: &RunConfig, exec: &E, out: &Path) -> Result<ScalingReport> {
    let spec = cfg.require_scaling()?;
    let report = scaling_exponent(spec, exec)?;
    let mut w = Writer::new(out, run_provenance(cfg, spec.seed), cfg.output.csv, cfg.output.json)?;
    w.report("scaling", "scaling", &report)?;
    w.table("scaling", &output::scaling_table(&report))?;
    if let Some(tol) = cfg.tolerances.scaling_slope {
        if (report.slope - report.expected).abs() > tol {
            return Err(RunError::Tolerance(format!(
                "slope {} is more than {tol} away from {}",
                report.slope, report.expected
            )));
        }
    }
    Ok(report)
}

/// Environment file plus the checksum recorded in it.
pub fn open_environment(path: &Path) -> Result<(Environment, String)> {
    let (env, header) = load_environment(path)?;
    Ok((env, header.sha256))
}

/// Re-emits the tables of a JSON report and a matplotlib script that plots
/// them. Nothing is plotted here.
pub fn report_render(report: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(report).map_err(|source| OutputError::Io {
        path: report.display().to_string(),
        source,
    })?;
    let env: output::Envelope<Value> = serde_json::from_str(&text).map_err(|e| OutputError::Format(e.to_string()))?;
    let prov = Provenance {
        config_hash: env.config_hash.clone(),
        seed: env.seed,
    };
    let bad = |e: serde_json::Error| OutputError::Format(format!("{} report: {e}", env.kind));
    let mut w = Writer::new(out, prov, true, false)?;
    let script = match env.kind.as_str() {
        "hydro" => {
            let r: ConvergenceReport = serde_json::from_value(env.report.clone()).map_err(bad)?;
            w.table("hydro_rows", &output::convergence_table(&r))?;
            w.table("hydro_summary", &output::summary_table(&r))?;
            crate::render::HYDRO
        }
        "cauchy" => {
            let r: CauchyReport = serde_json::from_value(env.report.clone()).map_err(bad)?;
            w.table("cauchy", &output::cauchy_table(&r))?;
            crate::render::CAUCHY
        }
        "tagged" => {
            let r: TaggedReport = serde_json::from_value(env.report.clone()).map_err(bad)?;
            w.table("tagged", &output::tagged_table(&r))?;
            crate::render::TAGGED
        }
        "scaling" => {
            let r: ScalingReport = serde_json::from_value(env.report.clone()).map_err(bad)?;
            w.table("scaling", &output::scaling_table(&r))?;
            crate::render::SCALING
        }
        "stone" => {
            let r: EquivalenceReport = serde_json::from_value(env.report.clone()).map_err(bad)?;
            w.table("stone", &output::equivalence_table(&r))?;
            crate::render::STONE
        }
        other => return Err(OutputError::Format(format!("unknown report kind {other:?}")).into()),
    };
    w.text(&format!("plot_{}.py", env.kind), script)?;
    Ok(w.written)
}

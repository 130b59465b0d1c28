//! Command-line surface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use stablex_core::hydro::Shape;

use crate::commands::{self, RunError};
use crate::config::parse_config;
use crate::exec::Parallel;

#[derive(Debug, Parser)]
#[command(name = "stablex", version, about = "Exclusion processes and random walks among heavy-tailed random conductances")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides the config and STABLEX_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Group,
}

#[derive(Debug, Subcommand)]
pub enum Group {
    /// Environment files.
    #[command(subcommand)]
    Env(EnvCmd),
    /// Single random walk numerics and sampling.
    #[command(subcommand)]
    Walk(WalkCmd),
    /// Exclusion process.
    #[command(subcommand)]
    Excl(ExclCmd),
    /// Walk versus gap-process comparison.
    #[command(subcommand)]
    Stone(StoneCmd),
    /// Hydrodynamic convergence experiment.
    #[command(subcommand)]
    Hydro(RunCmd),
    /// Tagged particle experiment.
    #[command(subcommand)]
    Tagged(RunCmd),
    /// Exit-time scaling experiment.
    #[command(subcommand)]
    Scaling(RunCmd),
    /// Tables and plotting scripts from a JSON report.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
pub enum EnvCmd {
    /// Sample a path and write the environment at level N.
    Gen {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        /// Fine resolution M of the sampled path.
        #[arg(long)]
        resolution: u64,
        /// Level N; must divide M.
        #[arg(long)]
        n: u64,
        /// Macroscopic window [lo, hi].
        #[arg(long, allow_hyphen_values = true)]
        lo: i64,
        #[arg(long, allow_hyphen_values = true)]
        hi: i64,
        #[arg(long)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print the law, window, conductance range and checksum.
    Inspect { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct EnvArg {
    #[arg(long)]
    pub env: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum WalkCmd {
    /// Transition kernel y -> p_t(x0, y) as CSV.
    Kernel {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x0: i64,
        /// Use uniformization instead of Crank-Nicolson.
        #[arg(long)]
        uniformization: bool,
        #[arg(long, default_value_t = 10)]
        guard_sites: usize,
        #[arg(long, default_value_t = 1e-6)]
        guard_mass: f64,
    },
    /// Resolvent (lambda - L)^{-1} g for a shape g given as JSON.
    Resolvent {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = r#"{"kind":"bump","center":0.0,"radius":1.0,"height":1.0}"#)]
        g: String,
    },
    /// Independent walks; writes end positions.
    Sim {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long, allow_hyphen_values = true)]
        x0: i64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExclCmd {
    /// Replicas at one level of the configured experiment.
    Sim {
        #[arg(long)]
        config: PathBuf,
        /// Level N (default: the first configured one).
        #[arg(long)]
        level: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StoneCmd {
    /// Two-sample KS test of walk against gap-process end positions.
    Compare {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long, allow_hyphen_values = true)]
        x0: i64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum RunCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    Render {
        /// JSON report written by one of the run commands.
        report: PathBuf,
    },
}

fn executor(threads: Option<usize>) -> Result<Parallel, RunError> {
    Parallel::new(threads).map_err(|e| RunError::Usage(format!("cannot start {threads:?} threads: {e}")))
}

fn open(path: &Path) -> Result<(stablex_core::Environment, String), RunError> {
    commands::open_environment(path)
}

/// Runs a parsed command; returns the lines to print.
pub fn execute(cli: Cli) -> Result<String, RunError> {
    let out = cli.out.as_deref();
    match cli.command {
        Group::Env(EnvCmd::Gen {
            alpha,
            c0,
            resolution,
            n,
            lo,
            hi,
            seed,
            output,
        }) => {
            let args = commands::EnvGenArgs {
                alpha,
                c0,
                resolution,
                n,
                lo,
                hi,
                seed,
            };
            let env = commands::env_gen(&args, &output)?;
            Ok(format!("wrote {} ({} sites)\n", output.display(), env.window().sites()))
        }
        Group::Env(EnvCmd::Inspect { file }) => commands::env_inspect(&file),
        Group::Walk(cmd) => {
            let dir = commands::output_dir(out, None);
            match cmd {
                WalkCmd::Kernel {
                    env,
                    t,
                    x0,
                    uniformization,
                    guard_sites,
                    guard_mass,
                } => {
                    let (e, sha) = open(&env.env)?;
                    let args = commands::KernelArgs {
                        env_sha256: sha,
                        t,
                        x0,
                        uniformization,
                        guard_sites,
                        guard_mass,
                    };
                    let k = commands::walk_kernel(&e, &args, &dir)?;
                    Ok(format!("kernel mass {:.16e}\n", k.site_sum()))
                }
                WalkCmd::Resolvent { env, lambda, g } => {
                    let (e, sha) = open(&env.env)?;
                    let g: Shape = serde_json::from_str(&g).map_err(|err| RunError::Usage(format!("--g: {err}")))?;
                    let args = commands::ResolventArgs {
                        env_sha256: sha,
                        lambda,
                        g,
                    };
                    let r = commands::walk_resolvent(&e, &args, &dir)?;
                    Ok(format!("resolvent l1 norm {:.16e}\n", r.l1_norm()))
                }
                WalkCmd::Sim {
                    env,
                    x0,
                    t,
                    replicas,
                    seed,
                } => {
                    let (e, sha) = open(&env.env)?;
                    let args = commands::WalkSimArgs {
                        env_sha256: sha,
                        x0,
                        t,
                        replicas,
                        seed,
                    };
                    let ends = commands::walk_sim(&e, &args, &executor(cli.threads)?, &dir)?;
                    Ok(format!("{} walks\n", ends.len()))
                }
            }
        }
        Group::Excl(ExclCmd::Sim { config, level }) => {
            let cfg = parse_config(&config)?;
            let dir = commands::output_dir(out, Some(&cfg));
            let r = commands::excl_sim(&cfg, level, &executor(cli.threads)?, &dir)?;
            Ok(format!(
                "{} replicas, {} events, {} reached the boundary strip\n",
                r.series.len(),
                r.events,
                r.boundary_replicas
            ))
        }
        Group::Stone(StoneCmd::Compare {
            env,
            x0,
            t,
            replicas,
            seed,
            level,
        }) => {
            let (e, sha) = open(&env.env)?;
            let args = commands::StoneArgs {
                env_sha256: sha,
                x0,
                t,
                replicas,
                seed,
                level,
            };
            let dir = commands::output_dir(out, None);
            let r = commands::stone_compare(&e, &args, &executor(cli.threads)?, &dir)?;
            Ok(format!("KS statistic {:.6}, p = {:.4}, passed\n", r.ks.statistic, r.ks.p_value))
        }
        Group::Hydro(RunCmd::Run { config }) => {
            let cfg = parse_config(&config)?;
            let dir = commands::output_dir(out, Some(&cfg));
            let r = commands::hydro_run(&cfg, &executor(cli.threads)?, &dir)?;
            let mut s = String::new();
            for l in &r.report.summaries {
                s += &format!(
                    "N = {:>4}  H{}  sup error {:.6e} +- {:.1e}\n",
                    l.n, l.test_function, l.sup_abs_error, l.sup_abs_error_se
                );
            }
            Ok(s)
        }
        Group::Tagged(RunCmd::Run { config }) => {
            let cfg = parse_config(&config)?;
            let dir = commands::output_dir(out, Some(&cfg));
            let r = commands::tagged_run(&cfg, &executor(cli.threads)?, &dir)?;
            let mut s = String::new();
            for row in &r.rows {
                s += &format!("N = {:>4}  t = {:<8}  u = {:+.5}  exceedance {:?}\n", row.n, row.t, row.quantile, row.exceedance);
            }
            Ok(s)
        }
        Group::Scaling(RunCmd::Run { config }) => {
            let cfg = parse_config(&config)?;
            let dir = commands::output_dir(out, Some(&cfg));
            let r = commands::scaling_run(&cfg, &executor(cli.threads)?, &dir)?;
            Ok(format!(
                "slope {:.4} [{:.4}, {:.4}], expected {}\n",
                r.slope, r.ci_low, r.ci_high, r.expected
            ))
        }
        Group::Report(ReportCmd::Render { report }) => {
            let dir = commands::output_dir(out, None);
            let files = commands::report_render(&report, &dir)?;
            Ok(files.iter().map(|f| format!("wrote {}\n", f.display())).collect())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Usage errors print the usage text and return 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

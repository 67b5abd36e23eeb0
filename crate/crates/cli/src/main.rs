//! `ipi`: generate, validate, solve and benchmark finite discounted MDPs.
//!
//! Exit codes: 0 success, 2 invalid input or flags, 3 iteration cap reached,
//! 4 numerical failure. Logs go to standard error; data goes to files and
//! standard output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ipi_core::bench::{compute_reference, emit_plot_data, parse_plan, run_plan, BenchmarkPlan, MdpSource, SolverEntry};
use ipi_core::format::{load, parse_unchecked, read_to_string, save};
use ipi_core::generators::{generate_garnet, make_mdp, Fixture, GarnetSpec};
use ipi_core::solvers::{Forcing, RunOptions, SolverConfig, SolverKind, TerminatedBy};
use ipi_core::{validate_mdp, Error};

#[derive(Parser, Debug)]
#[command(name = "ipi", version, about = "Inexact GMRES policy iteration for discounted MDPs")]
struct Cli {
    /// Seed for generated instances.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LogLevel {
    Quiet,
    Info,
    Debug,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded Garnet MDP in the text format.
    Generate(GenerateArgs),
    /// Check an MDP file; lists every violation.
    Validate {
        path: PathBuf,
    },
    /// Run one solver and write its trace CSV.
    Solve(SolveArgs),
    /// Run a benchmark plan.
    Bench(BenchArgs),
    /// Write the analytic fixtures to `<out-dir>/fixtures`.
    Fixtures {
        /// States of the chain fixture.
        #[arg(long, default_value_t = 100)]
        chain_n: usize,
        /// Discount factor of the chain fixture.
        #[arg(long, default_value_t = 0.95)]
        chain_gamma: f64,
    },
}

#[derive(Args, Debug, Clone)]
struct GarnetArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Successors per state-action pair.
    #[arg(long)]
    branch: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    cost_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    cost_hi: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    garnet: GarnetArgs,
    /// Output file; defaults to `<out-dir>/garnet_n<N>_m<M>_b<B>_s<SEED>.mdp`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverName {
    Vi,
    Pi,
    Opi,
    IgmresPi,
    IpiVi,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ForcingName {
    Constant,
    Geometric,
}

#[derive(Args, Debug)]
struct SolveArgs {
    path: PathBuf,
    #[arg(long, value_enum)]
    solver: SolverName,
    /// Forcing term; defaults to 0.9 (1-γ)/(1+γ).
    #[arg(long)]
    alpha: Option<f64>,
    /// GMRES restart length, or sweeps per outer iteration for opi.
    #[arg(long, default_value_t = 30)]
    restart: usize,
    /// Outer tolerance on ‖V - TV‖∞.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    max_outer: usize,
    /// Inner iteration cap per outer step (default 50 n).
    #[arg(long)]
    inner_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = ForcingName::Constant)]
    forcing: ForcingName,
    /// Decay factor of geometric forcing.
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    /// Stop a GMRES cycle early when its 2-norm proves the target unreachable.
    #[arg(long)]
    skip_hopeless: bool,
    /// Override the file's discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Compute V* first and record the suboptimality gap.
    #[arg(long)]
    reference: bool,
    /// Trace CSV path; defaults to `<out-dir>/trace_<solver>.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Plan file (flat key = value with one [section] per solver).
    #[arg(long, conflicts_with_all = ["mdp", "solvers"])]
    plan: Option<PathBuf>,
    /// MDP file; without it a Garnet instance is generated from the flags.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[command(flatten)]
    garnet: GarnetArgs,
    /// Comma-separated solvers: vi, pi, opi-W, igmres-pi, igmres-pi-W, ipi-vi.
    #[arg(long, value_delimiter = ',', default_value = "pi,opi-50,opi-80,igmres-pi")]
    solvers: Vec<String>,
    /// Comma-separated discount factors (default: the MDP's own).
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Speedup baseline (display name; default: first solver).
    #[arg(long)]
    baseline: Option<String>,
    /// Fixed forcing term for inexact solvers.
    #[arg(long)]
    alpha: Option<f64>,
    /// Relative suboptimality tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Skip the reference solve; plots show residuals.
    #[arg(long)]
    no_reference: bool,
    /// Untimed consistency run; cells may execute concurrently.
    #[arg(long)]
    check_only: bool,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::DenseCapExceeded { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.log_level {
        LogLevel::Quiet => log::LevelFilter::Off,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Validate { path } => cmd_validate(path),
        Command::Solve(args) => cmd_solve(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
        Command::Fixtures { chain_n, chain_gamma } => cmd_fixtures(cli, *chain_n, *chain_gamma),
    }
}

fn ensure_dir(p: &Path) -> Result<(), Failure> {
    fs::create_dir_all(p).map_err(|e| Failure::usage(format!("cannot create {}: {e}", p.display())))
}

fn ensure_parent(p: &Path) -> Result<(), Failure> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => ensure_dir(d),
        _ => Ok(()),
    }
}

fn unit_interval(flag: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("{flag} must lie in (0, 1), got {v}")))
    }
}

fn garnet_spec(g: &GarnetArgs, seed: u64) -> Result<GarnetSpec, Failure> {
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| Failure::usage(format!("{flag} is required")));
    let n = need(g.n, "--n")?;
    let m = need(g.m, "--m")?;
    let branching = need(g.branch, "--branch")?;
    if n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    if m == 0 {
        return Err(Failure::usage("--m must be at least 1"));
    }
    if branching == 0 || branching > n {
        return Err(Failure::usage(format!("--branch must lie in [1, --n = {n}], got {branching}")));
    }
    if !(g.cost_lo.is_finite() && g.cost_hi.is_finite()) || g.cost_lo > g.cost_hi {
        return Err(Failure::usage(format!(
            "--cost-lo {} and --cost-hi {} must be finite with lo ≤ hi",
            g.cost_lo, g.cost_hi
        )));
    }
    unit_interval("--gamma", g.gamma)?;
    Ok(GarnetSpec {
        n,
        m,
        branching,
        cost_lo: g.cost_lo,
        cost_hi: g.cost_hi,
        gamma: g.gamma,
        seed,
    })
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> CliResult {
    let spec = garnet_spec(&args.garnet, cli.seed)?;
    let path = args.output.clone().unwrap_or_else(|| {
        cli.out_dir.join(format!(
            "garnet_n{}_m{}_b{}_s{}.mdp",
            spec.n, spec.m, spec.branching, spec.seed
        ))
    });
    ensure_parent(&path)?;
    let mdp = generate_garnet(&spec)?;
    save(&mdp, &path)?;
    println!("{} {}", path.display(), mdp.nonzeros());
    Ok(0)
}

fn cmd_validate(path: &Path) -> CliResult {
    let text = read_to_string(path)?;
    let mdp = parse_unchecked(&text)?;
    let report = validate_mdp(&mdp);
    if report.is_ok() {
        println!(
            "ok: {} states, {} actions, {} pairs, {} nonzeros",
            mdp.n(),
            mdp.m(),
            mdp.num_pairs(),
            mdp.nonzeros()
        );
        Ok(0)
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        Err(Failure::usage(format!("{} violation(s) in {}", report.violations.len(), path.display())))
    }
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> CliResult {
    if let Some(a) = args.alpha {
        unit_interval("--alpha", a)?;
    }
    if let Some(g) = args.gamma {
        unit_interval("--gamma", g)?;
    }
    if args.restart == 0 {
        return Err(Failure::usage("--restart must be at least 1"));
    }
    if !(args.eps >= 0.0) {
        return Err(Failure::usage("--eps must be nonnegative"));
    }
    if args.max_outer == 0 {
        return Err(Failure::usage("--max-outer must be at least 1"));
    }
    if args.inner_cap == Some(0) {
        return Err(Failure::usage("--inner-cap must be at least 1"));
    }
    let forcing = match args.forcing {
        ForcingName::Constant => Forcing::Constant,
        ForcingName::Geometric => {
            unit_interval("--decay", args.decay)?;
            Forcing::Geometric { decay: args.decay }
        }
    };

    let mut mdp = load(&args.path)?;
    if let Some(g) = args.gamma {
        mdp = mdp.with_gamma(g)?;
    }
    let gamma = mdp.gamma();
    let cfg = SolverConfig {
        alpha: args.alpha.unwrap_or(0.9 * ipi_core::solvers::alpha_threshold(gamma)),
        forcing,
        eps_outer: args.eps,
        max_outer: args.max_outer,
        restart_len: args.restart,
        inner_cap: args.inner_cap,
        skip_hopeless: args.skip_hopeless,
        ..SolverConfig::default()
    };
    for w in cfg.validate(gamma)? {
        warn!("{w}");
    }
    let kind = match args.solver {
        SolverName::Vi => SolverKind::ValueIteration,
        SolverName::Pi => SolverKind::PolicyIteration,
        SolverName::Opi => SolverKind::Optimistic { sweeps: args.restart },
        SolverName::IgmresPi => SolverKind::IgmresPi,
        SolverName::IpiVi => SolverKind::InexactSweeps,
    };
    let reference = if args.reference {
        info!("computing reference solution");
        Some(compute_reference(&mdp)?)
    } else {
        None
    };
    let v0 = vec![0.0; mdp.n()];
    let opts = RunOptions {
        reference: reference.as_deref(),
        keep_iterates: false,
    };
    let res = kind.run(&mdp, &v0, &cfg, opts)?;

    let name = kind.display_name(&cfg);
    let trace = args
        .trace
        .clone()
        .unwrap_or_else(|| cli.out_dir.join(format!("trace_{name}.csv")));
    ensure_parent(&trace)?;
    res.trace.write_csv(&trace)?;
    info!("{name}: trace written to {}", trace.display());
    println!(
        "{} {} {:e} {:.6}",
        res.terminated_by.as_str(),
        res.trace.outer_iterations(),
        res.residual_inf(),
        res.seconds()
    );
    if res.inner_cap_hits > 0 {
        warn!("inner solver hit its cap in {} outer step(s)", res.inner_cap_hits);
        return Ok(3);
    }
    Ok(match res.terminated_by {
        TerminatedBy::Tolerance | TerminatedBy::PolicyFixedPoint => 0,
        TerminatedBy::MaxOuter => 3,
    })
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> CliResult {
    let plan = match &args.plan {
        Some(path) => {
            let text = read_to_string(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut plan = parse_plan(&text, base)?;
            if !text.lines().any(|l| l.trim_start().starts_with("out_dir")) {
                plan.out_dir = cli.out_dir.clone();
            }
            plan
        }
        None => {
            let source = match &args.mdp {
                Some(p) => MdpSource::File(p.clone()),
                None => MdpSource::Garnet(garnet_spec(&args.garnet, cli.seed)?),
            };
            if let Some(a) = args.alpha {
                unit_interval("--alpha", a)?;
            }
            for &g in &args.gammas {
                unit_interval("--gammas", g)?;
            }
            let mut solvers = Vec::new();
            for t in &args.solvers {
                let mut e = SolverEntry::from_token(t).map_err(|e| Failure::usage(format!("--solvers: {e}")))?;
                e.alpha = args.alpha;
                solvers.push(e);
            }
            if args.repetitions == 0 {
                return Err(Failure::usage("--repetitions must be at least 1"));
            }
            let mut plan = BenchmarkPlan::new(source, solvers, cli.out_dir.clone());
            plan.gammas = args.gammas.clone();
            plan.repetitions = args.repetitions;
            plan.baseline = args.baseline.clone();
            plan.tol_rtol = args.tolerance;
            plan.reference = !args.no_reference;
            plan.check_only = args.check_only;
            plan
        }
    };
    ensure_dir(&plan.out_dir)?;
    let report = run_plan(&plan)?;
    let plots = emit_plot_data(&report, plan.out_dir.join("plots"))?;
    info!(
        "wrote {}, {} and {} plot files",
        report.summary_path.display(),
        report.speedup_path.display(),
        plots.len()
    );
    print!("{}", report.speedup_table());
    let capped = report.runs.iter().any(|r| r.terminated_by == TerminatedBy::MaxOuter || r.inner_cap_hits > 0);
    Ok(if capped { 3 } else { 0 })
}

fn cmd_fixtures(cli: &Cli, chain_n: usize, chain_gamma: f64) -> CliResult {
    unit_interval("--chain-gamma", chain_gamma)?;
    let dir = cli.out_dir.join("fixtures");
    ensure_dir(&dir)?;
    let items = [
        ("mdp_a.mdp", Fixture::MdpA),
        ("mdp_b.mdp", Fixture::MdpB),
        (
            "chain.mdp",
            Fixture::Chain {
                n: chain_n,
                gamma: chain_gamma,
            },
        ),
    ];
    for (file, fixture) in items {
        let path = dir.join(file);
        save(&make_mdp(fixture)?, &path)?;
        println!("{}", path.display());
    }
    Ok(0)
}

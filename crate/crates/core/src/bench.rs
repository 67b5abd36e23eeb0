//! Benchmark orchestration: runs a matrix of solvers over one MDP and a list
//! of discount factors, computes the reference solution, writes per-run trace
//! CSVs, a summary, a speedup table, and plot-ready data files.
//!
//! Timed runs execute strictly one after another on the calling thread; the
//! solvers have no internal parallelism. Only `check_only` plans, whose
//! timings are not meaningful, fan cells out over threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::format::{fmt_real, load};
use crate::generators::{generate_garnet, GarnetSpec};
use crate::linalg::norm_inf;
use crate::mdp::{Mdp, ValueVector};
use crate::solvers::{
    exact_policy_iteration, igmres_policy_iteration, Forcing, RunOptions, SolverConfig, SolverKind, TerminatedBy,
};
use crate::trace::IterationTrace;

pub const SUMMARY_CSV_HEADER: &str =
    "solver,gamma,repetition,outer_iters,inner_iters_total,matvecs_total,seconds_to_tol,terminated_by";
pub const SPEEDUP_CSV_HEADER: &str = "solver,gamma,speedup_vs_baseline";

/// Reference solutions must reach `‖r(V*)‖∞ ≤ REFERENCE_RESIDUAL`.
pub const REFERENCE_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MdpSource {
    File(PathBuf),
    Garnet(GarnetSpec),
}

impl MdpSource {
    pub fn load(&self) -> Result<Mdp> {
        match self {
            MdpSource::File(p) => load(p),
            MdpSource::Garnet(spec) => generate_garnet(spec),
        }
    }
}

/// One solver column of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverEntry {
    pub name: String,
    pub kind: SolverKind,
    /// Settings other than `alpha` and `eps_outer`.
    pub base: SolverConfig,
    /// Fixed forcing term; `None` uses `0.9 (1-γ)/(1+γ)` for each `γ`.
    pub alpha: Option<f64>,
    /// Fixed outer tolerance; `None` uses `tol · (1-γ)`, which guarantees the
    /// suboptimality tolerance `tol` on termination.
    pub eps_outer: Option<f64>,
}

impl SolverEntry {
    pub fn new(kind: SolverKind) -> Self {
        let base = SolverConfig::default();
        SolverEntry {
            name: kind.display_name(&base),
            kind,
            base,
            alpha: None,
            eps_outer: None,
        }
    }

    /// Parses `vi`, `pi`, `opi-W`, `igmres-pi`, `igmres-pi-W` or `ipi-vi`.
    pub fn from_token(token: &str) -> Result<Self> {
        let t = token.trim().to_ascii_lowercase();
        let bad = || Error::InvalidConfig(format!("unknown solver '{token}'"));
        let parse_w = |s: &str| s.parse::<usize>().ok().filter(|&w| w >= 1).ok_or_else(bad);
        let mut entry = match t.as_str() {
            "vi" => SolverEntry::new(SolverKind::ValueIteration),
            "pi" => SolverEntry::new(SolverKind::PolicyIteration),
            "igmres-pi" => SolverEntry::new(SolverKind::IgmresPi),
            "ipi-vi" => SolverEntry::new(SolverKind::InexactSweeps),
            _ => {
                if let Some(w) = t.strip_prefix("opi-") {
                    SolverEntry::new(SolverKind::Optimistic { sweeps: parse_w(w)? })
                } else if let Some(w) = t.strip_prefix("igmres-pi-") {
                    let mut e = SolverEntry::new(SolverKind::IgmresPi);
                    e.base.restart_len = parse_w(w)?;
                    e
                } else {
                    return Err(bad());
                }
            }
        };
        entry.name = entry.kind.display_name(&entry.base);
        Ok(entry)
    }

    pub fn config_for(&self, gamma: f64, tol: f64) -> SolverConfig {
        let mut c = self.base.clone();
        c.alpha = self.alpha.unwrap_or(0.9 * crate::solvers::alpha_threshold(gamma));
        c.eps_outer = self.eps_outer.unwrap_or(tol * (1.0 - gamma));
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    pub source: MdpSource,
    pub solvers: Vec<SolverEntry>,
    /// Discount factors to run; empty means the MDP's own.
    pub gammas: Vec<f64>,
    pub repetitions: usize,
    pub out_dir: PathBuf,
    /// Display name of the speedup baseline; defaults to the first solver.
    pub baseline: Option<String>,
    /// Suboptimality tolerance `tol = tol_rtol · (1 + ‖V*‖∞)`.
    pub tol_rtol: f64,
    /// Compute `V*` for suboptimality traces and time-to-tolerance.
    pub reference: bool,
    /// Timings are not reported; cells may run concurrently.
    pub check_only: bool,
}

impl BenchmarkPlan {
    pub fn new(source: MdpSource, solvers: Vec<SolverEntry>, out_dir: impl Into<PathBuf>) -> Self {
        BenchmarkPlan {
            source,
            solvers,
            gammas: Vec::new(),
            repetitions: 3,
            out_dir: out_dir.into(),
            baseline: None,
            tol_rtol: 1e-6,
            reference: true,
            check_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.solvers.is_empty() {
            return bad("benchmark plan needs at least one solver".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.tol_rtol > 0.0) {
            return bad("tolerance must be positive".into());
        }
        for g in &self.gammas {
            if !(*g > 0.0 && *g < 1.0) {
                return bad(format!("gamma {g} not in (0, 1)"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.solvers {
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate solver name '{}'", s.name));
            }
        }
        if let Some(b) = &self.baseline {
            if !names.contains(b.as_str()) {
                return bad(format!("baseline '{b}' is not one of the plan's solvers"));
            }
        }
        Ok(())
    }

    fn baseline_name(&self) -> &str {
        self.baseline.as_deref().unwrap_or(&self.solvers[0].name)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub solver: String,
    pub gamma: f64,
    pub repetition: usize,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    pub matvecs_total: usize,
    /// Seconds at the first iterate within tolerance (`None`: never reached or
    /// no reference).
    pub seconds_to_tol: Option<f64>,
    pub terminated_by: TerminatedBy,
    /// Outer steps whose inner solver hit its cap.
    pub inner_cap_hits: usize,
    pub trace_path: PathBuf,
    pub trace: IterationTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speedup {
    pub solver: String,
    pub gamma: f64,
    /// `median(baseline) / median(solver)`; `NaN` when either never reached
    /// the tolerance.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub runs: Vec<RunSummary>,
    pub speedups: Vec<Speedup>,
    pub baseline: String,
    /// Per `γ`: suboptimality tolerance used (absent without a reference).
    pub tolerances: Vec<(f64, Option<f64>)>,
    pub hardware: String,
    pub summary_path: PathBuf,
    pub speedup_path: PathBuf,
}

impl BenchmarkReport {
    /// Median time-to-tolerance over repetitions.
    pub fn median_seconds(&self, solver: &str, gamma: f64) -> Option<f64> {
        let times: Option<Vec<f64>> = self
            .runs
            .iter()
            .filter(|r| r.solver == solver && r.gamma == gamma)
            .map(|r| r.seconds_to_tol)
            .collect();
        times.and_then(|t| median(&t))
    }

    pub fn speedup(&self, solver: &str, gamma: f64) -> Option<f64> {
        self.speedups
            .iter()
            .find(|s| s.solver == solver && s.gamma == gamma)
            .map(|s| s.value)
    }

    pub fn runs_for<'a>(&'a self, solver: &'a str, gamma: f64) -> impl Iterator<Item = &'a RunSummary> + 'a {
        self.runs.iter().filter(move |r| r.solver == solver && r.gamma == gamma)
    }

    /// The speedup table as aligned text.
    pub fn speedup_table(&self) -> String {
        let mut out = format!("{:<16} {:>8} {:>12} {:>10}\n", "solver", "gamma", "median_s", "speedup");
        for s in &self.speedups {
            let t = self
                .median_seconds(&s.solver, s.gamma)
                .map_or("-".to_string(), |t| format!("{t:.4}"));
            let _ = writeln!(out, "{:<16} {:>8} {:>12} {:>10.3}", s.solver, s.gamma, t, s.value);
        }
        out
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// `V*` by exact policy iteration to `‖r(V)‖∞ ≤ 1e-12`.
///
/// Evaluation above the dense cap runs GMRES to a relative residual of
/// `1e-14`; if the policy repeats before the tolerance is met, iGMRES-PI with
/// a small forcing term polishes the iterate. Errors when `10 n` outer
/// iterations do not suffice.
pub fn compute_reference(mdp: &Mdp) -> Result<ValueVector> {
    let budget = 10 * mdp.n().max(1);
    let cfg = SolverConfig {
        eps_outer: REFERENCE_RESIDUAL,
        exact_eval_rtol: 1e-14,
        max_outer: budget,
        ..SolverConfig::for_gamma(mdp.gamma())
    };
    let pi = exact_policy_iteration(mdp, &vec![0.0; mdp.n()], &cfg)?;
    if pi.residual_inf() <= REFERENCE_RESIDUAL {
        return Ok(pi.v);
    }
    let used = pi.trace.outer_iterations();
    let polish_cfg = SolverConfig {
        alpha: 1e-3,
        max_outer: budget.saturating_sub(used).max(1),
        ..cfg
    };
    let polished = igmres_policy_iteration(mdp, &pi.v, &polish_cfg)?;
    if polished.residual_inf() <= REFERENCE_RESIDUAL {
        Ok(polished.v)
    } else {
        Err(Error::Numerical(format!(
            "reference solve reached residual {:e} after {} outer iterations, above {REFERENCE_RESIDUAL:e}",
            polished.residual_inf(),
            used + polished.trace.outer_iterations()
        )))
    }
}

/// Best-effort description of the machine for the report.
pub fn hardware_description() -> String {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {cores} logical cores; {}-{}", std::env::consts::OS, std::env::consts::ARCH)
}

fn gamma_tag(gamma: f64) -> String {
    format!("{gamma}").replace('.', "p")
}

fn file_stem(solver: &str) -> String {
    solver
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(p: &Path, contents: &str) -> Result<()> {
    fs::write(p, contents).map_err(|e| Error::io(p, e))
}

struct Cell<'a> {
    entry: &'a SolverEntry,
    gamma: f64,
    repetition: usize,
}

/// Executes the plan. The reference for each `γ` is computed before, and
/// outside, any timed region; traces are written after each run's timer has
/// stopped. A run ending at `max_outer` is recorded and the plan continues.
pub fn run_plan(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    plan.validate()?;
    let base_mdp = plan.source.load()?;
    let gammas = if plan.gammas.is_empty() {
        vec![base_mdp.gamma()]
    } else {
        plan.gammas.clone()
    };
    let trace_dir = plan.out_dir.join("traces");
    create_dir(&trace_dir)?;
    let hardware = hardware_description();
    info!("benchmark on {hardware}");

    let mut runs = Vec::new();
    let mut tolerances = Vec::new();
    for &gamma in &gammas {
        let mdp = base_mdp.with_gamma(gamma)?;
        let reference = if plan.reference {
            info!("computing reference for gamma = {gamma}");
            Some(compute_reference(&mdp)?)
        } else {
            None
        };
        let tol = reference.as_ref().map(|v| plan.tol_rtol * (1.0 + norm_inf(v)));
        tolerances.push((gamma, tol));
        // Without a reference the outer tolerance falls back to the relative
        // target applied to the residual.
        let tol_for_cfg = tol.unwrap_or(plan.tol_rtol);
        for entry in &plan.solvers {
            for w in entry.config_for(gamma, tol_for_cfg).validate(gamma)? {
                warn!("{}: {w}", entry.name);
            }
        }
        let cells: Vec<Cell<'_>> = plan
            .solvers
            .iter()
            .flat_map(|entry| (0..plan.repetitions).map(move |repetition| Cell { entry, gamma, repetition }))
            .collect();
        let run_cell = |cell: &Cell<'_>| -> Result<RunSummary> {
            let cfg = cell.entry.config_for(cell.gamma, tol_for_cfg);
            let v0 = vec![0.0; mdp.n()];
            let opts = RunOptions {
                reference: reference.as_deref(),
                keep_iterates: false,
            };
            let res = cell.entry.kind.run(&mdp, &v0, &cfg, opts)?;
            let trace_path = trace_dir.join(format!(
                "{}_g{}_r{}.csv",
                file_stem(&cell.entry.name),
                gamma_tag(cell.gamma),
                cell.repetition
            ));
            res.trace.write_csv(&trace_path)?;
            let seconds_to_tol = tol.and_then(|t| res.trace.first_within(t)).map(|r| r.cum_seconds);
            if res.terminated_by == TerminatedBy::MaxOuter {
                warn!("{} (gamma = {}) stopped at max_outer", cell.entry.name, cell.gamma);
            }
            info!(
                "{} gamma={} rep={} outer={} seconds_to_tol={:?}",
                cell.entry.name,
                cell.gamma,
                cell.repetition,
                res.trace.outer_iterations(),
                seconds_to_tol
            );
            Ok(RunSummary {
                solver: cell.entry.name.clone(),
                gamma: cell.gamma,
                repetition: cell.repetition,
                outer_iterations: res.trace.outer_iterations(),
                inner_iterations_total: res.trace.total_inner(),
                matvecs_total: res.trace.total_matvecs(),
                seconds_to_tol,
                terminated_by: res.terminated_by,
                inner_cap_hits: res.inner_cap_hits,
                trace_path,
                trace: res.trace,
            })
        };
        if plan.check_only {
            runs.extend(run_concurrently(&cells, &run_cell)?);
        } else {
            for cell in &cells {
                runs.push(run_cell(cell)?);
            }
        }
    }

    let baseline = plan.baseline_name().to_string();
    let mut report = BenchmarkReport {
        runs,
        speedups: Vec::new(),
        baseline: baseline.clone(),
        tolerances,
        hardware,
        summary_path: plan.out_dir.join("summary.csv"),
        speedup_path: plan.out_dir.join("speedup.csv"),
    };
    for &gamma in &gammas {
        let base = report.median_seconds(&baseline, gamma);
        for entry in &plan.solvers {
            let value = if entry.name == baseline {
                1.0
            } else {
                match (base, report.median_seconds(&entry.name, gamma)) {
                    (Some(b), Some(s)) if s > 0.0 => b / s,
                    _ => f64::NAN,
                }
            };
            report.speedups.push(Speedup {
                solver: entry.name.clone(),
                gamma,
                value,
            });
        }
    }
    write_file(&report.summary_path, &summary_csv(&report))?;
    write_file(&report.speedup_path, &speedup_csv(&report))?;
    write_file(&plan.out_dir.join("hardware.txt"), &format!("{}\n", report.hardware))?;
    Ok(report)
}

fn run_concurrently<F>(cells: &[Cell<'_>], run: &F) -> Result<Vec<RunSummary>>
where
    F: Fn(&Cell<'_>) -> Result<RunSummary> + Sync,
{
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len().max(1));
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<RunSummary>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = {
                    let mut g = next.lock().unwrap();
                    let i = *g;
                    *g += 1;
                    i
                };
                if i >= cells.len() {
                    break;
                }
                let r = run(&cells[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell is executed"))
        .collect()
}

pub fn summary_csv(report: &BenchmarkReport) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for r in &report.runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.solver,
            r.gamma,
            r.repetition,
            r.outer_iterations,
            r.inner_iterations_total,
            r.matvecs_total,
            r.seconds_to_tol.map(fmt_real).unwrap_or_default(),
            r.terminated_by.as_str()
        );
    }
    out
}

pub fn speedup_csv(report: &BenchmarkReport) -> String {
    let mut out = format!("{SPEEDUP_CSV_HEADER}\n");
    for s in &report.speedups {
        let _ = writeln!(out, "{},{},{}", s.solver, s.gamma, fmt_real(s.value));
    }
    out
}

/// Writes, for every `(solver, γ)`, two whitespace-separated files from the
/// first repetition: suboptimality against outer iteration and against
/// cumulative seconds. Without a reference the residual norm is plotted and
/// `_residual` marks the file names. A gnuplot script `plot.gp` drawing each
/// family on a semilog-y axis is written alongside. Returns the data files.
pub fn emit_plot_data(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut families: BTreeMap<(String, &'static str), Vec<(String, String)>> = BTreeMap::new();
    for run in report.runs.iter().filter(|r| r.repetition == 0) {
        let has_gap = !run.trace.is_empty() && run.trace.records.iter().all(|r| r.subopt_inf.is_some());
        let flag = if has_gap { "" } else { "_residual" };
        let y = |r: &crate::trace::TraceRecord| if has_gap { r.subopt_inf.unwrap_or(f64::NAN) } else { r.residual_inf };
        let stem = format!("{}_g{}{flag}", file_stem(&run.solver), gamma_tag(run.gamma));
        for (axis, x) in [("iterations", true), ("seconds", false)] {
            let mut text = format!("# {} gamma={} x={axis} y={}\n", run.solver, run.gamma, if has_gap { "subopt_inf" } else { "residual_inf" });
            for r in &run.trace.records {
                let xv = if x { r.k.to_string() } else { fmt_real(r.cum_seconds) };
                let _ = writeln!(text, "{xv} {}", fmt_real(y(r)));
            }
            let name = format!("{stem}_{axis}.dat");
            let path = dir.join(&name);
            write_file(&path, &text)?;
            written.push(path);
            families
                .entry((gamma_tag(run.gamma) + flag, axis))
                .or_default()
                .push((name, run.solver.clone()));
        }
    }
    let mut gp = String::from("set logscale y\nset format y \"%.0e\"\nset terminal pngcairo size 800,600\n");
    for ((tag, axis), files) in &families {
        let _ = writeln!(gp, "set output \"fig_g{tag}_{axis}.png\"");
        let _ = writeln!(gp, "set xlabel \"{}\"", if *axis == "iterations" { "outer iteration" } else { "seconds" });
        let _ = writeln!(gp, "set ylabel \"{}\"", if tag.ends_with("_residual") { "||V - TV||_inf" } else { "||V - V*||_inf" });
        let plots: Vec<String> = files
            .iter()
            .map(|(f, s)| format!("\"{f}\" using 1:2 with linespoints title \"{s}\""))
            .collect();
        let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
    }
    write_file(&dir.join("plot.gp"), &gp)?;
    Ok(written)
}

/// Parses a plan file: flat `key = value` lines, `#` comments, and one
/// `[name]` section per solver.
///
/// Top-level keys: `mdp` (a path, relative to `base_dir`, or `garnet`),
/// `n`, `m`, `branch`, `cost_lo`, `cost_hi`, `gamma`, `seed` (Garnet only),
/// `gammas` (comma separated), `repetitions`, `out_dir`, `baseline`,
/// `tolerance`, `reference`, `check_only`.
///
/// Section keys: `solver` (`vi`, `pi`, `opi`, `igmres-pi`, `ipi-vi`), `sweeps`,
/// `restart`, `alpha`, `eps`, `max_outer`, `inner_cap`, `dense_cap`,
/// `forcing` (`constant` or `geometric`), `decay`, `skip_hopeless`.
pub fn parse_plan(text: &str, base_dir: &Path) -> Result<BenchmarkPlan> {
    let mut top: Vec<(usize, String, String)> = Vec::new();
    let mut sections: Vec<(usize, String, Vec<(usize, String, String)>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(parse_err(lineno, "empty section name"));
            }
            sections.push((lineno, name.to_string(), Vec::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, "expected key = value"))?;
        let kv = (lineno, k.trim().to_ascii_lowercase(), v.trim().to_string());
        match sections.last_mut() {
            Some(s) => s.2.push(kv),
            None => top.push(kv),
        }
    }

    let mut garnet = GarnetSpec {
        n: 0,
        m: 0,
        branching: 0,
        cost_lo: 0.0,
        cost_hi: 1.0,
        gamma: 0.95,
        seed: 0,
    };
    let mut mdp_value: Option<String> = None;
    let mut plan = BenchmarkPlan::new(MdpSource::Garnet(garnet), Vec::new(), base_dir.join("bench_out"));
    for (line, k, v) in &top {
        let (line, v) = (*line, v.as_str());
        match k.as_str() {
            "mdp" => mdp_value = Some(v.to_string()),
            "n" => garnet.n = num(line, k, v)?,
            "m" => garnet.m = num(line, k, v)?,
            "branch" => garnet.branching = num(line, k, v)?,
            "cost_lo" => garnet.cost_lo = num(line, k, v)?,
            "cost_hi" => garnet.cost_hi = num(line, k, v)?,
            "gamma" => garnet.gamma = num(line, k, v)?,
            "seed" => garnet.seed = num(line, k, v)?,
            "gammas" => {
                plan.gammas = v
                    .split(',')
                    .map(|g| num(line, k, g.trim()))
                    .collect::<Result<_>>()?
            }
            "repetitions" => plan.repetitions = num(line, k, v)?,
            "out_dir" => plan.out_dir = base_dir.join(v),
            "baseline" => plan.baseline = Some(v.to_string()),
            "tolerance" => plan.tol_rtol = num(line, k, v)?,
            "reference" => plan.reference = boolean(line, k, v)?,
            "check_only" => plan.check_only = boolean(line, k, v)?,
            _ => return Err(parse_err(line, &format!("unknown key '{k}'"))),
        }
    }
    plan.source = match mdp_value.as_deref() {
        None | Some("garnet") => {
            garnet.validate()?;
            MdpSource::Garnet(garnet)
        }
        Some(path) => MdpSource::File(base_dir.join(path)),
    };

    for (line, name, keys) in &sections {
        let solver = keys
            .iter()
            .find(|(_, k, _)| k == "solver")
            .map(|(_, _, v)| v.to_ascii_lowercase())
            .ok_or_else(|| parse_err(*line, &format!("section [{name}] has no solver key")))?;
        let kind = match solver.as_str() {
            "vi" => SolverKind::ValueIteration,
            "pi" => SolverKind::PolicyIteration,
            "opi" => SolverKind::Optimistic { sweeps: 1 },
            "igmres-pi" => SolverKind::IgmresPi,
            "ipi-vi" => SolverKind::InexactSweeps,
            other => return Err(parse_err(*line, &format!("unknown solver '{other}'"))),
        };
        let mut entry = SolverEntry::new(kind);
        for (line, k, v) in keys {
            let (line, v) = (*line, v.as_str());
            match k.as_str() {
                "solver" => {}
                "sweeps" => match &mut entry.kind {
                    SolverKind::Optimistic { sweeps } => *sweeps = num(line, k, v)?,
                    _ => return Err(parse_err(line, "sweeps applies to opi only")),
                },
                "restart" => entry.base.restart_len = num(line, k, v)?,
                "alpha" => entry.alpha = Some(num(line, k, v)?),
                "eps" => entry.eps_outer = Some(num(line, k, v)?),
                "max_outer" => entry.base.max_outer = num(line, k, v)?,
                "inner_cap" => entry.base.inner_cap = Some(num(line, k, v)?),
                "dense_cap" => entry.base.dense_cap = num(line, k, v)?,
                "forcing" => {
                    entry.base.forcing = match v {
                        "constant" => Forcing::Constant,
                        "geometric" => Forcing::Geometric { decay: 0.5 },
                        _ => return Err(parse_err(line, "forcing must be constant or geometric")),
                    }
                }
                "decay" => entry.base.forcing = Forcing::Geometric { decay: num(line, k, v)? },
                "skip_hopeless" => entry.base.skip_hopeless = boolean(line, k, v)?,
                _ => return Err(parse_err(line, &format!("unknown solver key '{k}'"))),
            }
        }
        if entry.kind == (SolverKind::Optimistic { sweeps: 0 }) {
            return Err(parse_err(*line, "sweeps must be at least 1"));
        }
        entry.name = name.clone();
        plan.solvers.push(entry);
    }
    plan.validate()?;
    Ok(plan)
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(line, &format!("invalid value '{v}' for {key}")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(parse_err(line, &format!("invalid boolean '{v}' for {key}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::save;
    use crate::generators::{make_mdp, Fixture};

    fn mdp_b_plan(dir: &Path, tokens: &[&str]) -> BenchmarkPlan {
        let path = dir.join("mdp_b.mdp");
        save(&make_mdp(Fixture::MdpB).unwrap(), &path).unwrap();
        let solvers = tokens.iter().map(|t| SolverEntry::from_token(t).unwrap()).collect();
        let mut plan = BenchmarkPlan::new(MdpSource::File(path), solvers, dir.join("out"));
        plan.repetitions = 1;
        plan
    }

    #[test]
    fn references() {
        let b = compute_reference(&make_mdp(Fixture::MdpB).unwrap()).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12);
        let a = compute_reference(&make_mdp(Fixture::MdpA).unwrap()).unwrap();
        assert!((a[0] - 4.0 / 3.0).abs() < 1e-12 && (a[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn self_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_plan(&mdp_b_plan(dir.path(), &["pi"])).unwrap();
        assert_eq!(report.speedups.len(), 1);
        assert_eq!(report.speedups[0].value, 1.0);
        let csv = fs::read_to_string(&report.speedup_path).unwrap();
        assert_eq!(csv.lines().nth(1), Some("PI,0.5,1.0000000000000000e0"));
    }

    #[test]
    fn opi_fewer_outer_than_vi() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_plan(&mdp_b_plan(dir.path(), &["vi", "opi-10"])).unwrap();
        let vi = report.runs_for("VI", 0.5).next().unwrap().outer_iterations;
        let opi = report.runs_for("OPI-10", 0.5).next().unwrap().outer_iterations;
        assert!(opi < vi, "{opi} vs {vi}");
        let summary = fs::read_to_string(&report.summary_path).unwrap();
        assert_eq!(summary.lines().next(), Some(SUMMARY_CSV_HEADER));
        assert_eq!(summary.lines().count(), 3);
    }

    #[test]
    fn plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_plan(&mdp_b_plan(dir.path(), &["vi", "pi"])).unwrap();
        let files = emit_plot_data(&report, dir.path().join("plots")).unwrap();
        assert_eq!(files.len(), 4);
        assert!(dir.path().join("plots/plot.gp").exists());
        let vi = fs::read_to_string(dir.path().join("plots/VI_g0p5_iterations.dat")).unwrap();
        let ys: Vec<f64> = vi
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
            .collect();
        for w in ys.windows(2) {
            assert!(w[1] / w[0] <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn residual_plots_without_reference() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = mdp_b_plan(dir.path(), &["vi"]);
        plan.reference = false;
        let report = run_plan(&plan).unwrap();
        assert!(report.runs[0].seconds_to_tol.is_none());
        let files = emit_plot_data(&report, dir.path().join("plots")).unwrap();
        assert!(files.iter().all(|f| f.to_string_lossy().contains("_residual_")));
    }

    #[test]
    fn repetitions_and_check_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = mdp_b_plan(dir.path(), &["vi", "igmres-pi"]);
        plan.repetitions = 3;
        plan.check_only = true;
        let report = run_plan(&plan).unwrap();
        assert_eq!(report.runs.len(), 6);
        let traces = fs::read_dir(dir.path().join("out/traces")).unwrap().count();
        assert_eq!(traces, 6);
    }

    #[test]
    fn solver_tokens() {
        assert_eq!(SolverEntry::from_token("OPI-50").unwrap().name, "OPI-50");
        assert_eq!(SolverEntry::from_token("igmres-pi").unwrap().name, "iGMRES-PI-30");
        assert_eq!(SolverEntry::from_token("igmres-pi-8").unwrap().base.restart_len, 8);
        assert!(SolverEntry::from_token("opi-0").is_err());
        assert!(SolverEntry::from_token("newton").is_err());
    }

    #[test]
    fn plan_file() {
        let text = "# desk scale\nmdp = garnet\nn = 50\nm = 3\nbranch = 4\nseed = 7\ngammas = 0.9, 0.99\nrepetitions = 2\nbaseline = exact\n\n[exact]\nsolver = pi\n\n[opi]\nsolver = opi\nsweeps = 20\n\n[ipi]\nsolver = igmres-pi\nrestart = 10\nalpha = 0.01\nforcing = geometric\n";
        let plan = parse_plan(text, Path::new("/tmp")).unwrap();
        assert_eq!(plan.solvers.len(), 3);
        assert_eq!(plan.gammas, vec![0.9, 0.99]);
        assert_eq!(plan.solvers[1].kind, SolverKind::Optimistic { sweeps: 20 });
        assert_eq!(plan.solvers[2].alpha, Some(0.01));
        assert!(matches!(plan.source, MdpSource::Garnet(GarnetSpec { n: 50, .. })));

        let err = parse_plan("n = 5\nbogus = 1\n", Path::new("/tmp")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_plan("mdp = x.mdp\n[a]\nsweeps = 3\n", Path::new("/tmp")).is_err());
        assert!(parse_plan("mdp = x.mdp\n", Path::new("/tmp")).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}

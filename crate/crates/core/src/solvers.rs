//! Outer dynamic-programming loops: value iteration, exact and optimistic
//! policy iteration, and inexact policy iteration with a pluggable inner
//! linear solver (GMRES gives iGMRES-PI).
//!
//! Every solver shares one driver. Each outer iteration ends with a greedy
//! pass at the new iterate, which yields both the next policy and `T V`, so
//! the Bellman residual `‖V - T V‖∞` in the trace costs nothing extra. Wall
//! time is measured around the whole loop, greedy passes included.

use std::time::Instant;

use log::{debug, warn};

use crate::error::{check_len, Error, Result};
use crate::gmres::{gmres_restarted, GmresParams, GmresTermination, InfNormTarget};
use crate::linalg::{dist_inf, norm_inf, Lu};
use crate::mdp::{Mdp, Policy, PolicyLinearSystem, ValueVector};
use crate::trace::{IterationTrace, StopCertificate, TraceRecord};

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Sufficient bound on `α` for local Q-linear contraction: `(1-γ)/(1+γ)`.
pub fn alpha_threshold(gamma: f64) -> f64 {
    (1.0 - gamma) / (1.0 + gamma)
}

/// Guaranteed local contraction rate `(1+γ)α/(1-γ)`.
pub fn contraction_rate(gamma: f64, alpha: f64) -> f64 {
    (1.0 + gamma) * alpha / (1.0 - gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    /// `α_k = α`.
    Constant,
    /// `α_k = α · decay^k`.
    Geometric { decay: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub forcing: Forcing,
    /// Stop once `‖r(V_k)‖∞ ≤ eps_outer`.
    pub eps_outer: f64,
    pub max_outer: usize,
    /// GMRES restart length `W`.
    pub restart_len: usize,
    /// Inner iteration cap per outer step; `None` means `50 n`.
    pub inner_cap: Option<usize>,
    /// Largest `n` evaluated by dense LU in exact policy iteration.
    pub dense_cap: usize,
    /// Exact PI above the dense cap runs GMRES to
    /// `‖g^π - J^π V‖∞ ≤ exact_eval_rtol · (1 + ‖g^π‖∞)`.
    pub exact_eval_rtol: f64,
    pub skip_hopeless: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.1,
            forcing: Forcing::Constant,
            eps_outer: 1e-8,
            max_outer: 1000,
            restart_len: 30,
            inner_cap: None,
            dense_cap: DEFAULT_DENSE_CAP,
            exact_eval_rtol: 1e-12,
            skip_hopeless: false,
        }
    }
}

impl SolverConfig {
    /// Defaults with `α = 0.9 (1-γ)/(1+γ)`.
    pub fn for_gamma(gamma: f64) -> Self {
        SolverConfig {
            alpha: 0.9 * alpha_threshold(gamma),
            ..Self::default()
        }
    }

    pub fn alpha_k(&self, k: usize) -> f64 {
        match self.forcing {
            Forcing::Constant => self.alpha,
            Forcing::Geometric { decay } => self.alpha * decay.powi(k as i32),
        }
    }

    fn inner_cap_for(&self, n: usize) -> usize {
        self.inner_cap.unwrap_or(50 * n.max(1))
    }

    /// Checks invariants; returns warnings that do not prevent a run.
    pub fn validate(&self, gamma: f64) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if let Forcing::Geometric { decay } = self.forcing {
            if !(decay > 0.0 && decay < 1.0) {
                return bad(format!("forcing decay {decay} not in (0, 1)"));
            }
        }
        if !(self.eps_outer >= 0.0) {
            return bad(format!("eps_outer {} must be nonnegative", self.eps_outer));
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1".into());
        }
        if self.restart_len == 0 {
            return bad("restart length must be at least 1".into());
        }
        if self.inner_cap == Some(0) {
            return bad("inner cap must be at least 1".into());
        }
        if !(self.exact_eval_rtol > 0.0) {
            return bad("exact_eval_rtol must be positive".into());
        }
        let mut warnings = Vec::new();
        let thr = alpha_threshold(gamma);
        if self.alpha >= thr {
            warnings.push(format!(
                "alpha {} is not below (1-γ)/(1+γ) = {thr:.6}; the local contraction guarantee does not apply",
                self.alpha
            ));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminatedBy {
    Tolerance,
    MaxOuter,
    PolicyFixedPoint,
}

impl TerminatedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminatedBy::Tolerance => "tolerance",
            TerminatedBy::MaxOuter => "max_outer",
            TerminatedBy::PolicyFixedPoint => "policy_fixed_point",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub v: ValueVector,
    /// Greedy at `v`.
    pub policy: Policy,
    pub trace: IterationTrace,
    pub terminated_by: TerminatedBy,
    /// Outer steps whose inner solver stopped at its cap.
    pub inner_cap_hits: usize,
    /// `V_0, V_1, ...` when requested through [`RunOptions::keep_iterates`].
    pub iterates: Vec<ValueVector>,
}

impl SolveResult {
    pub fn residual_inf(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.residual_inf)
    }

    pub fn seconds(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.cum_seconds)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// `V*` for the suboptimality column.
    pub reference: Option<&'a [f64]>,
    pub keep_iterates: bool,
}

/// Result of one inner solve of `(I - γP^π) V = g^π`.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub v: ValueVector,
    pub iterations: usize,
    pub matvecs: usize,
    /// `‖g^π - J^π v‖∞` at the returned `v`.
    pub residual_inf: f64,
    pub capped: bool,
}

/// Iterative solver for the policy-evaluation system, started from `start`
/// and run until `‖g^π - J^π V‖∞ ≤ target_inf` or `cap` iterations.
pub trait InnerSolver {
    fn solve(&mut self, sys: &PolicyLinearSystem<'_>, start: &[f64], target_inf: f64, cap: usize) -> Result<InnerOutcome>;
}

/// Restarted GMRES(W).
#[derive(Debug, Clone, Copy)]
pub struct GmresInner {
    pub restart_len: usize,
    pub skip_hopeless: bool,
}

impl InnerSolver for GmresInner {
    fn solve(&mut self, sys: &PolicyLinearSystem<'_>, start: &[f64], target_inf: f64, cap: usize) -> Result<InnerOutcome> {
        let params = GmresParams {
            restart_len: self.restart_len,
            inner_cap: cap,
            skip_hopeless: self.skip_hopeless,
        };
        let rep = gmres_restarted(sys, sys.rhs(), start, params, InfNormTarget(target_inf))?;
        Ok(InnerOutcome {
            v: rep.solution,
            iterations: rep.inner_iterations,
            matvecs: rep.matvec_count,
            residual_inf: rep.final_residual_infnorm,
            capped: rep.terminated_by == GmresTermination::IterationCap,
        })
    }
}

/// Repeated `T^π` sweeps; as the inner solver this is optimistic policy
/// iteration with the sweep count set by the stopping rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepInner;

impl InnerSolver for SweepInner {
    fn solve(&mut self, sys: &PolicyLinearSystem<'_>, start: &[f64], target_inf: f64, cap: usize) -> Result<InnerOutcome> {
        let mut cur = start.to_vec();
        let mut next = vec![0.0; cur.len()];
        sys.sweep_into(&cur, &mut next);
        let mut matvecs = 1;
        let mut iterations = 0;
        // ‖T^π v - v‖∞ is the evaluation residual at v.
        let mut res = dist_inf(&next, &cur);
        while res > target_inf && iterations < cap {
            std::mem::swap(&mut cur, &mut next);
            iterations += 1;
            sys.sweep_into(&cur, &mut next);
            matvecs += 1;
            res = dist_inf(&next, &cur);
            if !res.is_finite() {
                return Err(Error::Numerical("non-finite iterate in T^π sweeps".into()));
            }
        }
        Ok(InnerOutcome {
            v: cur,
            iterations,
            matvecs,
            residual_inf: res,
            capped: res > target_inf,
        })
    }
}

/// Dense LU solve, independent of the target.
#[derive(Debug, Clone, Copy)]
pub struct DirectInner {
    pub dense_cap: usize,
}

impl InnerSolver for DirectInner {
    fn solve(&mut self, sys: &PolicyLinearSystem<'_>, _start: &[f64], _target: f64, _cap: usize) -> Result<InnerOutcome> {
        let v = direct_solve_capped(sys, self.dense_cap)?;
        let residual_inf = sys.residual_infnorm(&v)?;
        Ok(InnerOutcome {
            v,
            iterations: 0,
            matvecs: 0,
            residual_inf,
            capped: false,
        })
    }
}

/// Exact policy evaluation by dense LU with partial pivoting.
pub fn direct_solve(sys: &PolicyLinearSystem<'_>) -> Result<ValueVector> {
    direct_solve_capped(sys, DEFAULT_DENSE_CAP)
}

pub fn direct_solve_capped(sys: &PolicyLinearSystem<'_>, dense_cap: usize) -> Result<ValueVector> {
    let n = sys.n();
    if n > dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: dense_cap });
    }
    let lu = Lu::factor(sys.dense_matrix())?;
    let v = lu.solve(sys.rhs())?;
    let res = sys.residual_infnorm(&v)?;
    let bound = 1e-10 * (1.0 + norm_inf(sys.rhs()));
    if res > bound {
        return Err(Error::Numerical(format!(
            "direct solve residual {res:e} above {bound:e}"
        )));
    }
    Ok(v)
}

/// What an outer step produced.
struct Step {
    v: ValueVector,
    inner: usize,
    matvecs: usize,
    certificate: Option<StopCertificate>,
    capped: bool,
}

fn drive<F>(
    mdp: &Mdp,
    v0: &[f64],
    cfg: &SolverConfig,
    opts: RunOptions<'_>,
    stop_on_policy_repeat: bool,
    mut step: F,
) -> Result<SolveResult>
where
    F: FnMut(usize, &[f64], &Policy, &[f64]) -> Result<Step>,
{
    check_len(mdp.n(), v0.len())?;
    if let Some(r) = opts.reference {
        check_len(mdp.n(), r.len())?;
    }
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("initial value vector is not finite".into()));
    }
    for w in cfg.validate(mdp.gamma())? {
        debug!("{w}");
    }

    let clock = Instant::now();
    let mut v = v0.to_vec();
    let (mut policy, mut tv) = mdp.greedy_backup(&v)?;
    let mut residual = dist_inf(&v, &tv);
    let mut trace = IterationTrace::default();
    let mut iterates = Vec::new();
    let subopt = |v: &[f64]| opts.reference.map(|r| dist_inf(v, r));
    trace.records.push(TraceRecord {
        k: 0,
        residual_inf: residual,
        subopt_inf: subopt(&v),
        policy_changed: false,
        inner_iterations: 0,
        matvecs: 0,
        cum_seconds: clock.elapsed().as_secs_f64(),
        certificate: None,
    });
    let mut policy_repeated = false;
    let mut cap_hits = 0;
    let mut k = 0;

    let terminated_by = loop {
        if residual <= cfg.eps_outer {
            break TerminatedBy::Tolerance;
        }
        if stop_on_policy_repeat && policy_repeated {
            break TerminatedBy::PolicyFixedPoint;
        }
        if k == cfg.max_outer {
            break TerminatedBy::MaxOuter;
        }
        let out = step(k, &v, &policy, &tv)?;
        if out.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at outer step {}", k + 1)));
        }
        if out.capped {
            cap_hits += 1;
            warn!("inner solver hit its cap at outer step {}", k + 1);
        }
        if opts.keep_iterates {
            iterates.push(std::mem::replace(&mut v, out.v));
        } else {
            v = out.v;
        }
        let (next_policy, next_tv) = mdp.greedy_backup(&v)?;
        let changed = next_policy != policy;
        policy = next_policy;
        tv = next_tv;
        residual = dist_inf(&v, &tv);
        k += 1;
        trace.records.push(TraceRecord {
            k,
            residual_inf: residual,
            subopt_inf: subopt(&v),
            policy_changed: changed,
            inner_iterations: out.inner,
            matvecs: out.matvecs,
            cum_seconds: clock.elapsed().as_secs_f64(),
            certificate: out.certificate,
        });
        policy_repeated = !changed;
    };
    if opts.keep_iterates {
        iterates.push(v.clone());
    }
    Ok(SolveResult {
        v,
        policy,
        trace,
        terminated_by,
        inner_cap_hits: cap_hits,
        iterates,
    })
}

pub fn value_iteration(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    value_iteration_with(mdp, v0, cfg, RunOptions::default())
}

/// `V_{k+1} = T V_k`.
pub fn value_iteration_with(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
    drive(mdp, v0, cfg, opts, false, |_, _, _, tv| {
        Ok(Step {
            v: tv.to_vec(),
            inner: 1,
            matvecs: 1,
            certificate: None,
            capped: false,
        })
    })
}

pub fn optimistic_policy_iteration(mdp: &Mdp, v0: &[f64], sweeps: usize, cfg: &SolverConfig) -> Result<SolveResult> {
    optimistic_policy_iteration_with(mdp, v0, sweeps, cfg, RunOptions::default())
}

/// `π_k = greedy(V_k)`, `V_{k+1} = (T^{π_k})^W V_k`. The first sweep is the
/// `T V_k` of the greedy pass, so `W = 1` reproduces value iteration exactly.
pub fn optimistic_policy_iteration_with(
    mdp: &Mdp,
    v0: &[f64],
    sweeps: usize,
    cfg: &SolverConfig,
    opts: RunOptions<'_>,
) -> Result<SolveResult> {
    if sweeps == 0 {
        return Err(Error::InvalidConfig("OPI needs at least one sweep".into()));
    }
    drive(mdp, v0, cfg, opts, false, |_, _, policy, tv| {
        let sys = PolicyLinearSystem::new(mdp, policy.clone())?;
        let mut cur = tv.to_vec();
        let mut next = vec![0.0; cur.len()];
        for _ in 1..sweeps {
            sys.sweep_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Step {
            v: cur,
            inner: sweeps,
            matvecs: sweeps,
            certificate: None,
            capped: false,
        })
    })
}

pub fn exact_policy_iteration(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    exact_policy_iteration_with(mdp, v0, cfg, RunOptions::default())
}

/// Policy iteration with exact evaluation: dense LU up to `cfg.dense_cap`
/// states, otherwise GMRES to a residual of
/// `cfg.exact_eval_rtol · (1 + ‖g^π‖∞)`. Stops when the greedy policy repeats.
pub fn exact_policy_iteration_with(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
    let n = mdp.n();
    let cap = cfg.inner_cap_for(n);
    let mut gmres = GmresInner {
        restart_len: cfg.restart_len,
        skip_hopeless: cfg.skip_hopeless,
    };
    drive(mdp, v0, cfg, opts, true, |_, v, policy, _| {
        let sys = PolicyLinearSystem::new(mdp, policy.clone())?;
        if n <= cfg.dense_cap {
            let v = direct_solve_capped(&sys, cfg.dense_cap)?;
            return Ok(Step {
                v,
                inner: 0,
                matvecs: 0,
                certificate: None,
                capped: false,
            });
        }
        let target = cfg.exact_eval_rtol * (1.0 + norm_inf(sys.rhs()));
        let out = gmres.solve(&sys, v, target, cap)?;
        Ok(Step {
            v: out.v,
            inner: out.iterations,
            matvecs: out.matvecs,
            certificate: None,
            capped: out.capped,
        })
    })
}

pub fn inexact_policy_iteration<S: InnerSolver>(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig, inner: S) -> Result<SolveResult> {
    inexact_policy_iteration_with(mdp, v0, cfg, inner, RunOptions::default())
}

/// Inexact policy iteration: `π_k = greedy(V_k)`, then the inner solver
/// started at `V_k` runs until
/// `‖g^π - J^π V_{k+1}‖∞ ≤ α_k ‖g^π - J^π V_k‖∞`. A zero right-hand side of
/// that test means `V_k` already evaluates `π_k` and the inner solve is
/// skipped.
pub fn inexact_policy_iteration_with<S: InnerSolver>(
    mdp: &Mdp,
    v0: &[f64],
    cfg: &SolverConfig,
    mut inner: S,
    opts: RunOptions<'_>,
) -> Result<SolveResult> {
    let cap = cfg.inner_cap_for(mdp.n());
    drive(mdp, v0, cfg, opts, false, |k, v, policy, _| {
        let sys = PolicyLinearSystem::new(mdp, policy.clone())?;
        let alpha_k = cfg.alpha_k(k);
        let phi = sys.residual_infnorm(v)?;
        if phi == 0.0 {
            return Ok(Step {
                v: v.to_vec(),
                inner: 0,
                matvecs: 1,
                certificate: Some(StopCertificate {
                    alpha_k,
                    residual_start: 0.0,
                    residual_end: 0.0,
                    capped: false,
                }),
                capped: false,
            });
        }
        let out = inner.solve(&sys, v, alpha_k * phi, cap)?;
        Ok(Step {
            v: out.v,
            inner: out.iterations,
            matvecs: out.matvecs + 1,
            certificate: Some(StopCertificate {
                alpha_k,
                residual_start: phi,
                residual_end: out.residual_inf,
                capped: out.capped,
            }),
            capped: out.capped,
        })
    })
}

pub fn igmres_policy_iteration(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    igmres_policy_iteration_with(mdp, v0, cfg, RunOptions::default())
}

/// Inexact policy iteration with GMRES(`cfg.restart_len`) warm-started at `V_k`.
pub fn igmres_policy_iteration_with(mdp: &Mdp, v0: &[f64], cfg: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
    let inner = GmresInner {
        restart_len: cfg.restart_len,
        skip_hopeless: cfg.skip_hopeless,
    };
    inexact_policy_iteration_with(mdp, v0, cfg, inner, opts)
}

/// Solver selection used by the benchmark harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ValueIteration,
    PolicyIteration,
    Optimistic { sweeps: usize },
    /// GMRES restart length comes from [`SolverConfig::restart_len`].
    IgmresPi,
    /// Inexact PI with `T^π` sweeps as the inner solver.
    InexactSweeps,
}

impl SolverKind {
    pub fn run(&self, mdp: &Mdp, v0: &[f64], cfg: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
        match *self {
            SolverKind::ValueIteration => value_iteration_with(mdp, v0, cfg, opts),
            SolverKind::PolicyIteration => exact_policy_iteration_with(mdp, v0, cfg, opts),
            SolverKind::Optimistic { sweeps } => optimistic_policy_iteration_with(mdp, v0, sweeps, cfg, opts),
            SolverKind::IgmresPi => igmres_policy_iteration_with(mdp, v0, cfg, opts),
            SolverKind::InexactSweeps => inexact_policy_iteration_with(mdp, v0, cfg, SweepInner, opts),
        }
    }

    pub fn display_name(&self, cfg: &SolverConfig) -> String {
        match *self {
            SolverKind::ValueIteration => "VI".into(),
            SolverKind::PolicyIteration => "PI".into(),
            SolverKind::Optimistic { sweeps } => format!("OPI-{sweeps}"),
            SolverKind::IgmresPi => format!("iGMRES-PI-{}", cfg.restart_len),
            SolverKind::InexactSweeps => "IPI-VI".into(),
        }
    }
}

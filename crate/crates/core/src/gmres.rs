//! Restarted GMRES with modified Gram–Schmidt Arnoldi, progressive Givens
//! least squares and a caller-supplied stopping rule.
//!
//! After every inner iteration the candidate `x = x_cycle + Q y` is formed and
//! its true residual `b - A x` is computed with one extra operator
//! application. The stopping rule sees that residual, which is what makes the
//! infinity-norm inexact-Newton test usable inside the Krylov loop. A restart
//! starts the next cycle from that explicitly recomputed residual.

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm2, norm_inf, LinearOperator};

/// Relative threshold for treating `‖q‖₂` as zero (happy breakdown).
pub const BREAKDOWN_RTOL: f64 = 1e-14;

/// Column-major `(W+1) × W` upper-Hessenberg store.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessenberg {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Hessenberg {
    pub fn zeros(restart_len: usize) -> Self {
        Hessenberg {
            rows: restart_len + 1,
            cols: restart_len,
            data: vec![0.0; (restart_len + 1) * restart_len],
        }
    }

    /// Builds from the leading `(i+1) × i` block given column by column; entry
    /// `k` of column `j` is `H[k][j]` for `k ≤ j + 1`.
    pub fn from_columns(columns: &[&[f64]]) -> Self {
        let mut h = Self::zeros(columns.len());
        for (j, col) in columns.iter().enumerate() {
            assert!(col.len() <= j + 2, "entries below the subdiagonal");
            for (k, &v) in col.iter().enumerate() {
                h.set(k, j, v);
            }
        }
        h
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    /// Entries `0..=j+1` of column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        let start = j * self.rows;
        &self.data[start..start + (j + 2).min(self.rows)]
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Progressive QR of a Hessenberg matrix by Givens rotations, solving
/// `min_y ‖β e₁ - H̄ y‖₂` one column at a time.
#[derive(Debug, Clone)]
pub struct GivensLstsq {
    /// Upper-triangular factor, column `j` holds `R[0..=j][j]`.
    r: Vec<Vec<f64>>,
    cs: Vec<f64>,
    sn: Vec<f64>,
    /// Rotated right-hand side, one entry longer than the number of columns.
    g: Vec<f64>,
}

impl GivensLstsq {
    pub fn new(beta: f64) -> Self {
        GivensLstsq {
            r: Vec::new(),
            cs: Vec::new(),
            sn: Vec::new(),
            g: vec![beta],
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Appends Hessenberg column `j = self.len()` (entries `0..=j+1`) and
    /// returns the updated least-squares residual norm.
    pub fn push_column(&mut self, column: &[f64]) -> f64 {
        let j = self.r.len();
        assert_eq!(column.len(), j + 2, "Hessenberg column {j} needs {} entries", j + 2);
        let mut h = column.to_vec();
        for k in 0..j {
            let t = self.cs[k] * h[k] + self.sn[k] * h[k + 1];
            h[k + 1] = -self.sn[k] * h[k] + self.cs[k] * h[k + 1];
            h[k] = t;
        }
        let (a, b) = (h[j], h[j + 1]);
        let rho = a.hypot(b);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
        h[j] = c * a + s * b;
        h.truncate(j + 1);
        self.cs.push(c);
        self.sn.push(s);
        let gj = self.g[j];
        self.g[j] = c * gj;
        self.g.push(-s * gj);
        self.r.push(h);
        self.residual_norm()
    }

    pub fn residual_norm(&self) -> f64 {
        self.g.last().map_or(0.0, |v| v.abs())
    }

    /// Back substitution for the current minimizer.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let i = self.r.len();
        let mut y = self.g[..i].to_vec();
        for k in (0..i).rev() {
            let rkk = self.r[k][k];
            if rkk == 0.0 {
                return Err(Error::Numerical(format!(
                    "singular triangular factor at column {k} of the Hessenberg least squares"
                )));
            }
            y[k] /= rkk;
            let yk = y[k];
            for (l, yl) in y.iter_mut().enumerate().take(k) {
                *yl -= self.r[k][l] * yk;
            }
        }
        Ok(y)
    }
}

/// Solves `min_y ‖β e₁ - H̄_i y‖₂` over the leading `(i+1) × i` block.
pub fn hessenberg_lstsq(h: &Hessenberg, i: usize, beta: f64) -> Result<(Vec<f64>, f64)> {
    if i > h.cols() {
        return Err(Error::InvalidConfig(format!(
            "requested {i} columns from a Hessenberg store with {}",
            h.cols()
        )));
    }
    if beta == 0.0 {
        return Ok((vec![0.0; i], 0.0));
    }
    let mut ls = GivensLstsq::new(beta);
    for j in 0..i {
        ls.push_column(h.column(j));
    }
    let y = ls.solve()?;
    Ok((y, ls.residual_norm()))
}

/// Arnoldi state for one restart cycle.
#[derive(Debug, Clone)]
pub struct KrylovWorkspace {
    n: usize,
    restart_len: usize,
    basis: Vec<Vec<f64>>,
    hess: Hessenberg,
    beta: f64,
    steps: usize,
    q: Vec<f64>,
}

impl KrylovWorkspace {
    pub fn new(n: usize, restart_len: usize) -> Self {
        KrylovWorkspace {
            n,
            restart_len,
            basis: vec![vec![0.0; n]; restart_len + 1],
            hess: Hessenberg::zeros(restart_len),
            beta: 0.0,
            steps: 0,
            q: vec![0.0; n],
        }
    }

    /// Resets the cycle with `Q[:,0] = residual/‖residual‖₂`; returns `β`.
    pub fn start_cycle(&mut self, residual: &[f64]) -> f64 {
        assert_eq!(residual.len(), self.n);
        self.hess.clear();
        for col in &mut self.basis[1..] {
            col.iter_mut().for_each(|x| *x = 0.0);
        }
        self.steps = 0;
        self.beta = norm2(residual);
        let inv = if self.beta > 0.0 { 1.0 / self.beta } else { 0.0 };
        for (q, &r) in self.basis[0].iter_mut().zip(residual) {
            *q = r * inv;
        }
        self.beta
    }

    pub fn restart_len(&self) -> usize {
        self.restart_len
    }

    /// `β = ‖Φ‖₂` at the start of the cycle.
    pub fn cycle_residual_norm2(&self) -> f64 {
        self.beta
    }

    /// Completed Arnoldi steps in this cycle.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn basis(&self, j: usize) -> &[f64] {
        &self.basis[j]
    }

    pub fn hessenberg(&self) -> &Hessenberg {
        &self.hess
    }
}

/// One Arnoldi step on column `j = ws.steps()`: `q = A Q[:,j]`, modified
/// Gram–Schmidt against `Q[:,0..=j]`, `H[j+1][j] = ‖q‖₂`. Returns `true` on
/// happy breakdown, in which case no new basis column is written.
pub fn arnoldi_step<A: LinearOperator + ?Sized>(op: &A, ws: &mut KrylovWorkspace) -> Result<bool> {
    let j = ws.steps;
    if j >= ws.restart_len {
        return Err(Error::InvalidConfig(format!(
            "Arnoldi step {} exceeds restart length {}",
            j + 1,
            ws.restart_len
        )));
    }
    let mut q = std::mem::take(&mut ws.q);
    op.apply(&ws.basis[j], &mut q);
    let aq_norm = norm2(&q);
    if !aq_norm.is_finite() {
        ws.q = q;
        return Err(Error::Numerical("non-finite operator output in Arnoldi step".into()));
    }
    for k in 0..=j {
        let col = &ws.basis[k];
        let h = dot(col, &q);
        ws.hess.set(k, j, h);
        for (qi, &ci) in q.iter_mut().zip(col) {
            *qi -= h * ci;
        }
    }
    let qn = norm2(&q);
    ws.hess.set(j + 1, j, qn);
    ws.steps += 1;
    let breakdown = qn <= BREAKDOWN_RTOL * (1.0 + aq_norm);
    if !breakdown {
        let inv = 1.0 / qn;
        for (b, &qi) in ws.basis[j + 1].iter_mut().zip(&q) {
            *b = qi * inv;
        }
    }
    ws.q = q;
    Ok(breakdown)
}

/// The current iterate handed to a [`StopRule`].
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub x: &'a [f64],
    /// True residual `b - A x`.
    pub residual: &'a [f64],
    pub residual_2norm: f64,
    pub residual_infnorm: f64,
    /// Total inner iterations so far (0 for the initial guess).
    pub inner_iterations: usize,
}

pub trait StopRule {
    fn satisfied(&mut self, candidate: &Candidate<'_>) -> bool;

    /// Infinity-norm target when the rule is `‖b - A x‖∞ ≤ target`. Enables
    /// [`GmresParams::skip_hopeless`].
    fn inf_target(&self) -> Option<f64> {
        None
    }
}

impl<F: FnMut(&Candidate<'_>) -> bool> StopRule for F {
    fn satisfied(&mut self, candidate: &Candidate<'_>) -> bool {
        self(candidate)
    }
}

/// Stop when `‖b - A x‖∞ ≤ target`.
#[derive(Debug, Clone, Copy)]
pub struct InfNormTarget(pub f64);

impl StopRule for InfNormTarget {
    fn satisfied(&mut self, c: &Candidate<'_>) -> bool {
        c.residual_infnorm <= self.0
    }

    fn inf_target(&self) -> Option<f64> {
        Some(self.0)
    }
}

/// Stop when `‖b - A x‖₂ ≤ target`.
#[derive(Debug, Clone, Copy)]
pub struct TwoNormTarget(pub f64);

impl StopRule for TwoNormTarget {
    fn satisfied(&mut self, c: &Candidate<'_>) -> bool {
        c.residual_2norm <= self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresParams {
    pub restart_len: usize,
    pub inner_cap: usize,
    /// Skip forming the candidate while the least-squares residual proves the
    /// infinity-norm target unreachable (`‖r‖₂/√n > target`). Off by default.
    pub skip_hopeless: bool,
}

impl GmresParams {
    pub fn new(restart_len: usize, inner_cap: usize) -> Self {
        GmresParams {
            restart_len,
            inner_cap,
            skip_hopeless: false,
        }
    }

    /// Default cap of `50 n` inner iterations.
    pub fn with_default_cap(restart_len: usize, n: usize) -> Self {
        Self::new(restart_len, 50 * n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmresTermination {
    PredicateSatisfied,
    HappyBreakdown,
    IterationCap,
}

impl GmresTermination {
    pub fn as_str(self) -> &'static str {
        match self {
            GmresTermination::PredicateSatisfied => "predicate_satisfied",
            GmresTermination::HappyBreakdown => "happy_breakdown",
            GmresTermination::IterationCap => "iteration_cap",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresReport {
    pub solution: Vec<f64>,
    pub inner_iterations: usize,
    pub matvec_count: usize,
    pub restarts: usize,
    pub terminated_by: GmresTermination,
    pub final_residual_2norm: f64,
    pub final_residual_infnorm: f64,
}

/// Per-inner-iteration trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub cycle: usize,
    /// 1-based index within the cycle.
    pub i: usize,
    /// True residual norms of the candidate; NaN when the candidate was skipped.
    pub residual_2norm: f64,
    pub residual_infnorm: f64,
    /// Residual norm reported by the Hessenberg least squares.
    pub lstsq_residual_2norm: f64,
}

pub fn gmres_restarted<A, S>(op: &A, rhs: &[f64], x0: &[f64], params: GmresParams, stop: S) -> Result<GmresReport>
where
    A: LinearOperator + ?Sized,
    S: StopRule,
{
    gmres_restarted_observed(op, rhs, x0, params, stop, |_: &InnerStep| {})
}

struct Residual {
    r: Vec<f64>,
    ax: Vec<f64>,
    norm2: f64,
    norm_inf: f64,
}

impl Residual {
    fn update<A: LinearOperator + ?Sized>(&mut self, op: &A, rhs: &[f64], x: &[f64]) -> Result<()> {
        op.apply(x, &mut self.ax);
        for ((r, &b), &ax) in self.r.iter_mut().zip(rhs).zip(&self.ax) {
            *r = b - ax;
        }
        self.norm2 = norm2(&self.r);
        self.norm_inf = norm_inf(&self.r);
        if !self.norm2.is_finite() {
            return Err(Error::Numerical("non-finite GMRES residual".into()));
        }
        Ok(())
    }
}

/// Restarted GMRES from `x0` with restart length `W = params.restart_len`.
///
/// The stopping rule is evaluated on `x0` and then after every inner
/// iteration. `observer` receives one [`InnerStep`] per inner iteration.
pub fn gmres_restarted_observed<A, S, O>(
    op: &A,
    rhs: &[f64],
    x0: &[f64],
    params: GmresParams,
    mut stop: S,
    mut observer: O,
) -> Result<GmresReport>
where
    A: LinearOperator + ?Sized,
    S: StopRule,
    O: FnMut(&InnerStep),
{
    let n = op.dim();
    check_len(n, rhs.len())?;
    check_len(n, x0.len())?;
    if params.restart_len == 0 {
        return Err(Error::InvalidConfig("GMRES restart length must be at least 1".into()));
    }
    if params.inner_cap == 0 {
        return Err(Error::InvalidConfig("GMRES inner cap must be at least 1".into()));
    }

    let mut x = x0.to_vec();
    let mut res = Residual {
        r: vec![0.0; n],
        ax: vec![0.0; n],
        norm2: 0.0,
        norm_inf: 0.0,
    };
    res.update(op, rhs, &x)?;
    let mut matvecs = 1;
    let mut total = 0usize;
    let mut restarts = 0usize;

    let report = |x: Vec<f64>, res: &Residual, total, matvecs, restarts, why| GmresReport {
        solution: x,
        inner_iterations: total,
        matvec_count: matvecs,
        restarts,
        terminated_by: why,
        final_residual_2norm: res.norm2,
        final_residual_infnorm: res.norm_inf,
    };

    let initial = Candidate {
        x: &x,
        residual: &res.r,
        residual_2norm: res.norm2,
        residual_infnorm: res.norm_inf,
        inner_iterations: 0,
    };
    if stop.satisfied(&initial) {
        return Ok(report(x, &res, 0, matvecs, 0, GmresTermination::PredicateSatisfied));
    }
    if res.norm2 == 0.0 {
        return Ok(report(x, &res, 0, matvecs, 0, GmresTermination::HappyBreakdown));
    }

    let skip_target = if params.skip_hopeless { stop.inf_target() } else { None };
    let sqrt_n = (n as f64).sqrt();
    let w = params.restart_len;
    let mut ws = KrylovWorkspace::new(n, w);
    let mut x_start = vec![0.0; n];

    for cycle in 0.. {
        x_start.copy_from_slice(&x);
        let beta = ws.start_cycle(&res.r);
        let mut ls = GivensLstsq::new(beta);
        let mut stale = false;

        for j in 0..w {
            if total == params.inner_cap {
                if stale {
                    form_candidate(&ws, &ls, &x_start, &mut x)?;
                    res.update(op, rhs, &x)?;
                    matvecs += 1;
                }
                return Ok(report(x, &res, total, matvecs, restarts, GmresTermination::IterationCap));
            }
            let breakdown = arnoldi_step(op, &mut ws)?;
            matvecs += 1;
            total += 1;
            let ls_res = ls.push_column(ws.hess.column(j));

            let skip = !breakdown
                && j + 1 < w
                && total < params.inner_cap
                && skip_target.is_some_and(|t| ls_res / sqrt_n > t);
            if skip {
                stale = true;
                observer(&InnerStep {
                    cycle,
                    i: j + 1,
                    residual_2norm: f64::NAN,
                    residual_infnorm: f64::NAN,
                    lstsq_residual_2norm: ls_res,
                });
                continue;
            }

            form_candidate(&ws, &ls, &x_start, &mut x)?;
            res.update(op, rhs, &x)?;
            matvecs += 1;
            stale = false;
            observer(&InnerStep {
                cycle,
                i: j + 1,
                residual_2norm: res.norm2,
                residual_infnorm: res.norm_inf,
                lstsq_residual_2norm: ls_res,
            });

            if breakdown {
                return Ok(report(x, &res, total, matvecs, restarts, GmresTermination::HappyBreakdown));
            }
            let c = Candidate {
                x: &x,
                residual: &res.r,
                residual_2norm: res.norm2,
                residual_infnorm: res.norm_inf,
                inner_iterations: total,
            };
            if stop.satisfied(&c) {
                return Ok(report(x, &res, total, matvecs, restarts, GmresTermination::PredicateSatisfied));
            }
        }

        if res.norm2 == 0.0 {
            return Ok(report(x, &res, total, matvecs, restarts, GmresTermination::HappyBreakdown));
        }
        restarts += 1;
    }
    unreachable!("restart loop only exits by return")
}

/// `x = x_start + Q[:, 0..i] y` for the current least-squares minimizer.
fn form_candidate(ws: &KrylovWorkspace, ls: &GivensLstsq, x_start: &[f64], x: &mut [f64]) -> Result<()> {
    let y = ls.solve()?;
    x.copy_from_slice(x_start);
    for (col, &yk) in ws.basis.iter().zip(&y) {
        for (xi, &qi) in x.iter_mut().zip(col) {
            *xi += yk * qi;
        }
    }
    Ok(())
}

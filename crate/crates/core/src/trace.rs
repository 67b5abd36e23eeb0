use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_real;

pub const TRACE_CSV_HEADER: &str = "k,residual_inf,subopt_inf,inner_iters,matvecs,cum_seconds,policy_changed";

/// State after outer iteration `k` (`k = 0` is the initial iterate).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖r(V_k)‖∞`.
    pub residual_inf: f64,
    /// `‖V_k - V*‖∞`, when a reference is known.
    pub subopt_inf: Option<f64>,
    /// Greedy policy at `V_k` differs from the one at `V_{k-1}`.
    pub policy_changed: bool,
    pub inner_iterations: usize,
    pub matvecs: usize,
    pub cum_seconds: f64,
    /// Inexact policy iteration only: forcing term and the evaluation residual
    /// `‖g^π - J^π V‖∞` of the policy `π_{k-1}` at `V_{k-1}` and at `V_k`.
    pub certificate: Option<StopCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCertificate {
    pub alpha_k: f64,
    pub residual_start: f64,
    pub residual_end: f64,
    pub capped: bool,
}

impl StopCertificate {
    pub fn holds(&self, slack: f64) -> bool {
        self.residual_end <= self.alpha_k * self.residual_start + slack
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Outer iterations performed (records minus the initial one).
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_inner(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn total_matvecs(&self) -> usize {
        self.records.iter().map(|r| r.matvecs).sum()
    }

    /// First record whose suboptimality gap is at most `tol`.
    pub fn first_within(&self, tol: f64) -> Option<&TraceRecord> {
        self.records
            .iter()
            .find(|r| r.subopt_inf.is_some_and(|g| g <= tol))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k,
                fmt_real(r.residual_inf),
                r.subopt_inf.map(fmt_real).unwrap_or_default(),
                r.inner_iterations,
                r.matvecs,
                fmt_real(r.cum_seconds),
                u8::from(r.policy_changed)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Drops the `cum_seconds` column of a trace CSV.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != 5)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

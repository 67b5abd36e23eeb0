//! Finite discounted MDPs: storage, Bellman operators, greedy policies and the
//! policy-induced linear system `(I - γP^π) V = g^π`.
//!
//! States and actions are 0-indexed. The transition kernel is stored as a CSR
//! structure over `(state, action)` pairs: pairs of a state are contiguous and
//! sorted by action, and every pair owns one sparse probability row.
//!
//! All Q-values are evaluated as `cost + γ * Σ p·v` with the sum accumulated in
//! row order. `T`, `T^π` and the greedy step share that expression, so
//! `T^π V == T V` holds bit-for-bit when `π` is greedy at `V`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::linalg::{DenseMatrix, LinearOperator};

/// Absolute tolerance on `|Σ_s' p(s'|s,a) - 1|`.
pub const ROW_SUM_TOL: f64 = 1e-12;

pub type ValueVector = Vec<f64>;

#[derive(Debug)]
struct Kernel {
    n: usize,
    m: usize,
    /// `state_ptr[s]..state_ptr[s + 1]` are the pair indices of state `s`.
    state_ptr: Vec<usize>,
    action: Vec<u32>,
    cost: Vec<f64>,
    /// `row_ptr[p]..row_ptr[p + 1]` index `dest`/`prob` for pair `p`.
    row_ptr: Vec<usize>,
    dest: Vec<u32>,
    prob: Vec<f64>,
}

/// Immutable finite MDP. Cloning is cheap; the kernel is shared.
#[derive(Debug, Clone)]
pub struct Mdp {
    gamma: f64,
    kernel: Arc<Kernel>,
}

/// Deterministic stationary policy, one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

/// Incremental constructor. Pairs may be added in any order; they are sorted
/// by `(state, action)` when the MDP is built.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n: usize,
    m: usize,
    gamma: f64,
    pairs: Vec<PendingPair>,
    dest: Vec<u32>,
    prob: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct PendingPair {
    state: usize,
    action: usize,
    cost: f64,
    start: usize,
    len: usize,
}

impl MdpBuilder {
    pub fn new(n: usize, m: usize, gamma: f64) -> Self {
        MdpBuilder {
            n,
            m,
            gamma,
            pairs: Vec::new(),
            dest: Vec::new(),
            prob: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, m: usize, gamma: f64, pairs: usize, nonzeros: usize) -> Self {
        let mut b = Self::new(n, m, gamma);
        b.pairs.reserve(pairs);
        b.dest.reserve(nonzeros);
        b.prob.reserve(nonzeros);
        b
    }

    /// Adds the row of `(state, action)`. Destinations are stored as given; use
    /// [`validate_mdp`] to check canonical ordering and probabilities.
    pub fn add<I>(&mut self, state: usize, action: usize, cost: f64, row: I) -> Result<&mut Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        if state >= self.n {
            return Err(Error::InvalidConfig(format!(
                "state {state} out of range for n = {}",
                self.n
            )));
        }
        if action > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("action {action} too large")));
        }
        let start = self.dest.len();
        for (d, p) in row {
            if d >= self.n {
                return Err(Error::InvalidConfig(format!(
                    "destination {d} out of range for n = {} at ({state}, {action})",
                    self.n
                )));
            }
            self.dest.push(d as u32);
            self.prob.push(p);
        }
        self.pairs.push(PendingPair {
            state,
            action,
            cost,
            start,
            len: self.dest.len() - start,
        });
        Ok(self)
    }

    /// Builds without validation.
    pub fn build_unchecked(mut self) -> Mdp {
        let n = self.n;
        let in_order = self
            .pairs
            .windows(2)
            .all(|w| (w[0].state, w[0].action) <= (w[1].state, w[1].action));
        if !in_order {
            self.pairs.sort_by_key(|p| (p.state, p.action));
        }

        let mut state_ptr = vec![0usize; n + 1];
        for p in &self.pairs {
            state_ptr[p.state + 1] += 1;
        }
        for s in 0..n {
            state_ptr[s + 1] += state_ptr[s];
        }

        let (dest, prob) = if in_order {
            (self.dest, self.prob)
        } else {
            let mut dest = Vec::with_capacity(self.dest.len());
            let mut prob = Vec::with_capacity(self.prob.len());
            for p in &self.pairs {
                dest.extend_from_slice(&self.dest[p.start..p.start + p.len]);
                prob.extend_from_slice(&self.prob[p.start..p.start + p.len]);
            }
            (dest, prob)
        };

        let mut row_ptr = Vec::with_capacity(self.pairs.len() + 1);
        row_ptr.push(0);
        let mut acc = 0;
        for p in &self.pairs {
            acc += p.len;
            row_ptr.push(acc);
        }

        Mdp {
            gamma: self.gamma,
            kernel: Arc::new(Kernel {
                n,
                m: self.m,
                state_ptr,
                action: self.pairs.iter().map(|p| p.action as u32).collect(),
                cost: self.pairs.iter().map(|p| p.cost).collect(),
                row_ptr,
                dest,
                prob,
            }),
        }
    }

    /// Builds and validates.
    pub fn build(self) -> Result<Mdp> {
        let mdp = self.build_unchecked();
        let report = validate_mdp(&mdp);
        if report.is_ok() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }
}

impl Mdp {
    pub fn n(&self) -> usize {
        self.kernel.n
    }

    pub fn m(&self) -> usize {
        self.kernel.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same kernel and costs, different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Mdp> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} not in (0, 1)")));
        }
        Ok(Mdp {
            gamma,
            kernel: Arc::clone(&self.kernel),
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.kernel.action.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.kernel.dest.len()
    }

    /// Allowed actions of state `s`, strictly increasing for a valid MDP.
    pub fn allowed_actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.pair_range(s).map(|p| self.kernel.action[p] as usize)
    }

    pub fn cost(&self, s: usize, a: usize) -> Option<f64> {
        self.pair_index(s, a).map(|p| self.kernel.cost[p])
    }

    /// Sparse transition row of `(s, a)`.
    pub fn transitions(&self, s: usize, a: usize) -> Option<impl Iterator<Item = (usize, f64)> + '_> {
        self.pair_index(s, a).map(|p| self.row(p))
    }

    pub(crate) fn pair_range(&self, s: usize) -> std::ops::Range<usize> {
        self.kernel.state_ptr[s]..self.kernel.state_ptr[s + 1]
    }

    pub(crate) fn pair_index(&self, s: usize, a: usize) -> Option<usize> {
        if s >= self.n() {
            return None;
        }
        let r = self.pair_range(s);
        let acts = &self.kernel.action[r.clone()];
        let a = u32::try_from(a).ok()?;
        acts.binary_search(&a).ok().map(|i| r.start + i)
    }

    pub(crate) fn allowed_action_at(&self, pair: usize) -> usize {
        self.kernel.action[pair] as usize
    }

    pub(crate) fn pair_cost(&self, pair: usize) -> f64 {
        self.kernel.cost[pair]
    }

    pub(crate) fn row(&self, pair: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let k = &self.kernel;
        let r = k.row_ptr[pair]..k.row_ptr[pair + 1];
        k.dest[r.clone()]
            .iter()
            .zip(&k.prob[r])
            .map(|(&d, &p)| (d as usize, p))
    }

    /// `Σ p·v` over the row of `pair`, accumulated in storage order.
    #[inline]
    pub(crate) fn expected(&self, pair: usize, v: &[f64]) -> f64 {
        let k = &self.kernel;
        let r = k.row_ptr[pair]..k.row_ptr[pair + 1];
        let mut acc = 0.0;
        for (&d, &p) in k.dest[r.clone()].iter().zip(&k.prob[r]) {
            acc += p * v[d as usize];
        }
        acc
    }

    #[inline]
    pub(crate) fn q_value(&self, pair: usize, v: &[f64]) -> f64 {
        self.kernel.cost[pair] + self.gamma * self.expected(pair, v)
    }

    pub fn check_policy(&self, pi: &Policy) -> Result<()> {
        check_len(self.n(), pi.len())?;
        for (s, &a) in pi.actions().iter().enumerate() {
            if self.pair_index(s, a).is_none() {
                return Err(Error::InvalidPolicy { state: s, action: a });
            }
        }
        Ok(())
    }

    fn policy_pairs(&self, pi: &Policy) -> Result<Vec<usize>> {
        check_len(self.n(), pi.len())?;
        pi.actions()
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                self.pair_index(s, a)
                    .ok_or(Error::InvalidPolicy { state: s, action: a })
            })
            .collect()
    }

    /// One greedy pass: returns the lowest-index minimizing policy and `T v`.
    pub fn greedy_backup(&self, v: &[f64]) -> Result<(Policy, ValueVector)> {
        check_len(self.n(), v.len())?;
        let n = self.n();
        let mut actions = Vec::with_capacity(n);
        let mut tv = Vec::with_capacity(n);
        for s in 0..n {
            let mut best = f64::INFINITY;
            let mut best_pair = usize::MAX;
            for pair in self.pair_range(s) {
                let q = self.q_value(pair, v);
                if q < best || best_pair == usize::MAX {
                    best = q;
                    best_pair = pair;
                }
            }
            actions.push(self.kernel.action[best_pair] as usize);
            tv.push(best);
        }
        Ok((Policy(actions), tv))
    }
}

/// `T^π v = g^π + γ P^π v`.
pub fn apply_policy_bellman(mdp: &Mdp, pi: &Policy, v: &[f64]) -> Result<ValueVector> {
    check_len(mdp.n(), v.len())?;
    let pairs = mdp.policy_pairs(pi)?;
    Ok(pairs.iter().map(|&p| mdp.q_value(p, v)).collect())
}

/// `T v`, the statewise minimum of the Q-values.
pub fn apply_optimal_bellman(mdp: &Mdp, v: &[f64]) -> Result<ValueVector> {
    mdp.greedy_backup(v).map(|(_, tv)| tv)
}

/// Greedy policy at `v`; ties go to the lowest action index.
pub fn greedy_policy(mdp: &Mdp, v: &[f64]) -> Result<Policy> {
    mdp.greedy_backup(v).map(|(pi, _)| pi)
}

/// Bellman residual `r(v) = v - T v`.
pub fn bellman_residual(mdp: &Mdp, v: &[f64]) -> Result<ValueVector> {
    let tv = apply_optimal_bellman(mdp, v)?;
    Ok(v.iter().zip(&tv).map(|(a, b)| a - b).collect())
}

pub fn build_policy_system<'a>(mdp: &'a Mdp, pi: &Policy) -> Result<PolicyLinearSystem<'a>> {
    PolicyLinearSystem::new(mdp, pi.clone())
}

/// The Newton system `(I - γP^π) V = g^π`. The rows of `P^π` are copied into
/// a compact CSR block at construction so that products stream through
/// contiguous memory; entries keep the storage order of the MDP, so every
/// product is bit-identical to the corresponding Q-value of the greedy step.
#[derive(Debug, Clone)]
pub struct PolicyLinearSystem<'a> {
    mdp: &'a Mdp,
    policy: Policy,
    rhs: Vec<f64>,
    row_ptr: Vec<usize>,
    dest: Vec<u32>,
    prob: Vec<f64>,
}

impl<'a> PolicyLinearSystem<'a> {
    pub fn new(mdp: &'a Mdp, policy: Policy) -> Result<Self> {
        let pairs = mdp.policy_pairs(&policy)?;
        let k = &mdp.kernel;
        let rhs = pairs.iter().map(|&p| k.cost[p]).collect();
        let nnz: usize = pairs.iter().map(|&p| k.row_ptr[p + 1] - k.row_ptr[p]).sum();
        let mut row_ptr = Vec::with_capacity(pairs.len() + 1);
        let mut dest = Vec::with_capacity(nnz);
        let mut prob = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for &p in &pairs {
            let r = k.row_ptr[p]..k.row_ptr[p + 1];
            dest.extend_from_slice(&k.dest[r.clone()]);
            prob.extend_from_slice(&k.prob[r]);
            row_ptr.push(dest.len());
        }
        Ok(PolicyLinearSystem {
            mdp,
            policy,
            rhs,
            row_ptr,
            dest,
            prob,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    /// `g^π`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Row `s` of `P^π` as `(destination, probability)`.
    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[s]..self.row_ptr[s + 1];
        self.dest[r.clone()]
            .iter()
            .zip(&self.prob[r])
            .map(|(&d, &p)| (d as usize, p))
    }

    /// `(P^π x)_s`, accumulated in storage order like [`Mdp::greedy_backup`].
    #[inline]
    fn expected(&self, s: usize, x: &[f64]) -> f64 {
        let r = self.row_ptr[s]..self.row_ptr[s + 1];
        let mut acc = 0.0;
        for (&d, &p) in self.dest[r.clone()].iter().zip(&self.prob[r]) {
            acc += p * x[d as usize];
        }
        acc
    }

    /// `out = x - γ P^π x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let g = self.mdp.gamma;
        for (s, (o, &xs)) in out.iter_mut().zip(x).enumerate() {
            *o = xs - g * self.expected(s, x);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<ValueVector> {
        check_len(self.n(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// `out = T^π x = g^π + γ P^π x`, same expression as [`Mdp::greedy_backup`].
    pub fn sweep_into(&self, x: &[f64], out: &mut [f64]) {
        let g = self.mdp.gamma;
        for (s, (o, &b)) in out.iter_mut().zip(&self.rhs).enumerate() {
            *o = b + g * self.expected(s, x);
        }
    }

    /// `out = g^π - (I - γP^π) x`, returns its infinity norm.
    pub fn residual_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let g = self.mdp.gamma;
        let mut norm = 0.0f64;
        for (s, ((o, &xs), &b)) in out.iter_mut().zip(x).zip(&self.rhs).enumerate() {
            *o = b - (xs - g * self.expected(s, x));
            norm = norm.max(o.abs());
        }
        norm
    }

    /// `‖g^π - (I - γP^π) x‖∞`.
    pub fn residual_infnorm(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n(), x.len())?;
        let mut r = vec![0.0; x.len()];
        Ok(self.residual_into(x, &mut r))
    }

    /// Dense `P^π`.
    pub fn dense_transition(&self) -> DenseMatrix {
        let n = self.n();
        let mut p = DenseMatrix::zeros(n, n);
        for s in 0..n {
            for (d, w) in self.row(s) {
                p[(s, d)] += w;
            }
        }
        p
    }

    /// Dense `I - γP^π`.
    pub fn dense_matrix(&self) -> DenseMatrix {
        let n = self.n();
        let g = self.gamma();
        let mut a = self.dense_transition();
        for s in 0..n {
            for d in 0..n {
                a[(s, d)] *= -g;
            }
            a[(s, s)] += 1.0;
        }
        a
    }

    /// `‖I - γP^π‖∞` from the sparse rows.
    pub fn inf_norm(&self) -> f64 {
        let g = self.gamma();
        (0..self.n())
            .map(|s| {
                let mut diag = 1.0;
                let mut off = 0.0;
                for (d, p) in self.row(s) {
                    if d == s {
                        diag -= g * p;
                    } else {
                        off += g * p;
                    }
                }
                diag.abs() + off
            })
            .fold(0.0, f64::max)
    }
}

impl LinearOperator for PolicyLinearSystem<'_> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y)
    }
}

/// `x - γ P^π x` for a valid system.
pub fn system_apply(sys: &PolicyLinearSystem<'_>, x: &[f64]) -> Result<ValueVector> {
    sys.apply(x)
}

pub fn system_residual_infnorm(sys: &PolicyLinearSystem<'_>, x: &[f64]) -> Result<f64> {
    sys.residual_infnorm(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    GammaOutOfRange(f64),
    NoStates,
    NoActions,
    NoAllowedActions { state: usize },
    ActionOutOfRange { state: usize, action: usize },
    ActionsNotIncreasing { state: usize, action: usize },
    NonFiniteCost { state: usize, action: usize },
    EmptyRow { state: usize, action: usize },
    NonPositiveProbability { state: usize, action: usize, dest: usize, p: f64 },
    DestinationsNotIncreasing { state: usize, action: usize, dest: usize },
    RowSum { state: usize, action: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            GammaOutOfRange(g) => write!(f, "gamma {g} not in (0, 1)"),
            NoStates => write!(f, "n must be positive"),
            NoActions => write!(f, "m must be positive"),
            NoAllowedActions { state } => write!(f, "state {state}: no allowed actions"),
            ActionOutOfRange { state, action } => {
                write!(f, "({state}, {action}): action index out of range")
            }
            ActionsNotIncreasing { state, action } => {
                write!(f, "({state}, {action}): action listed twice")
            }
            NonFiniteCost { state, action } => write!(f, "({state}, {action}): cost not finite"),
            EmptyRow { state, action } => write!(f, "({state}, {action}): empty transition row"),
            NonPositiveProbability { state, action, dest, p } => {
                write!(f, "({state}, {action}): probability {p} to {dest} not in (0, 1]")
            }
            DestinationsNotIncreasing { state, action, dest } => write!(
                f,
                "({state}, {action}): destination {dest} out of increasing order"
            ),
            RowSum { state, action, sum } => write!(
                f,
                "({state}, {action}): probabilities sum to {sum:.17} (tolerance {ROW_SUM_TOL:e})"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut out = Vec::new();
    let k = &mdp.kernel;
    if !(mdp.gamma > 0.0 && mdp.gamma < 1.0) {
        out.push(Violation::GammaOutOfRange(mdp.gamma));
    }
    if k.n == 0 {
        out.push(Violation::NoStates);
    }
    if k.m == 0 {
        out.push(Violation::NoActions);
    }
    for s in 0..k.n {
        let pairs = mdp.pair_range(s);
        if pairs.is_empty() {
            out.push(Violation::NoAllowedActions { state: s });
        }
        let mut prev_action: Option<u32> = None;
        for pair in pairs {
            let a = k.action[pair];
            let action = a as usize;
            if action >= k.m {
                out.push(Violation::ActionOutOfRange { state: s, action });
            }
            if prev_action.is_some_and(|pa| pa >= a) {
                out.push(Violation::ActionsNotIncreasing { state: s, action });
            }
            prev_action = Some(a);
            if !k.cost[pair].is_finite() {
                out.push(Violation::NonFiniteCost { state: s, action });
            }
            let mut sum = 0.0;
            let mut prev_dest: Option<usize> = None;
            let mut empty = true;
            for (dest, p) in mdp.row(pair) {
                empty = false;
                if !(p > 0.0 && p <= 1.0) {
                    out.push(Violation::NonPositiveProbability { state: s, action, dest, p });
                }
                if prev_dest.is_some_and(|pd| pd >= dest) {
                    out.push(Violation::DestinationsNotIncreasing { state: s, action, dest });
                }
                prev_dest = Some(dest);
                sum += p;
            }
            if empty {
                out.push(Violation::EmptyRow { state: s, action });
            } else if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                out.push(Violation::RowSum { state: s, action, sum });
            }
        }
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{self, Fixture};

    fn mdp_a() -> Mdp {
        generators::make_mdp(Fixture::MdpA).unwrap()
    }

    fn mdp_b() -> Mdp {
        generators::make_mdp(Fixture::MdpB).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn validate_accepts_swap_and_flags_perturbed_row() {
        assert!(validate_mdp(&mdp_a()).is_ok());

        let mut b = MdpBuilder::new(2, 1, 0.5);
        b.add(0, 0, 1.0, [(0, 0.5 + 1e-6), (1, 0.5)]).unwrap();
        b.add(1, 0, 0.0, [(0, 1.0)]).unwrap();
        let report = validate_mdp(&b.build_unchecked());
        assert_eq!(report.violations.len(), 1);
        match report.violations[0] {
            Violation::RowSum { state, action, .. } => assert_eq!((state, action), (0, 0)),
            ref v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn validate_flags_structure() {
        let mut b = MdpBuilder::new(3, 2, 1.0);
        b.add(0, 1, 0.0, [(1, 0.5), (0, 0.5)]).unwrap();
        b.add(0, 1, 0.0, [(0, 1.0)]).unwrap();
        b.add(1, 5, f64::NAN, [(1, 1.0)]).unwrap();
        let report = validate_mdp(&b.build_unchecked());
        let v = &report.violations;
        assert!(v.contains(&Violation::GammaOutOfRange(1.0)));
        assert!(v.contains(&Violation::NoAllowedActions { state: 2 }));
        assert!(v.contains(&Violation::ActionsNotIncreasing { state: 0, action: 1 }));
        assert!(v.contains(&Violation::ActionOutOfRange { state: 1, action: 5 }));
        assert!(v.contains(&Violation::NonFiniteCost { state: 1, action: 5 }));
        assert!(v.contains(&Violation::DestinationsNotIncreasing { state: 0, action: 1, dest: 0 }));
    }

    #[test]
    fn builder_rejects_out_of_range_indices() {
        let mut b = MdpBuilder::new(2, 1, 0.5);
        assert!(b.add(2, 0, 0.0, [(0, 1.0)]).is_err());
        assert!(b.add(0, 0, 0.0, [(7, 1.0)]).is_err());
    }

    #[test]
    fn policy_bellman_on_swap() {
        let mdp = mdp_a();
        let pi = Policy::new(vec![0, 0]);
        assert_eq!(apply_policy_bellman(&mdp, &pi, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let fixed = apply_policy_bellman(&mdp, &pi, &[4.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(close(&fixed, &[4.0 / 3.0, 2.0 / 3.0], 1e-15));
        assert_eq!(apply_policy_bellman(&mdp, &pi, &[2.0, 2.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn optimal_bellman_and_greedy() {
        let b = mdp_b();
        assert_eq!(apply_optimal_bellman(&b, &[0.0]).unwrap(), vec![1.0]);
        assert_eq!(apply_optimal_bellman(&b, &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(apply_optimal_bellman(&mdp_a(), &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);

        assert_eq!(greedy_policy(&b, &[0.0]).unwrap().actions(), &[1]);
        let mut tie = MdpBuilder::new(1, 2, 0.5);
        tie.add(0, 0, 1.0, [(0, 1.0)]).unwrap();
        tie.add(0, 1, 1.0, [(0, 1.0)]).unwrap();
        assert_eq!(greedy_policy(&tie.build().unwrap(), &[0.0]).unwrap().actions(), &[0]);
        assert_eq!(greedy_policy(&mdp_a(), &[5.0, -3.0]).unwrap().actions(), &[0, 0]);
    }

    #[test]
    fn residual_values() {
        assert_eq!(bellman_residual(&mdp_b(), &[2.0]).unwrap(), vec![0.0]);
        assert_eq!(bellman_residual(&mdp_a(), &[0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        let r = bellman_residual(&mdp_a(), &[4.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(close(&r, &[0.0, 0.0], 1e-15));
    }

    #[test]
    fn policy_system_extraction_and_products() {
        let a = mdp_a();
        let sys = build_policy_system(&a, &Policy::new(vec![0, 0])).unwrap();
        assert_eq!(sys.rhs(), &[1.0, 0.0]);
        assert_eq!(sys.row(0).collect::<Vec<_>>(), vec![(1, 1.0)]);
        assert_eq!(sys.row(1).collect::<Vec<_>>(), vec![(0, 1.0)]);
        assert_eq!(system_apply(&sys, &[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(system_apply(&sys, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(system_residual_infnorm(&sys, &[4.0 / 3.0, 2.0 / 3.0]).unwrap() < 1e-15);
        assert_eq!(system_residual_infnorm(&sys, &[0.0, 0.0]).unwrap(), 1.0);

        let b = mdp_b();
        let sys = build_policy_system(&b, &Policy::new(vec![1])).unwrap();
        assert_eq!(sys.rhs(), &[1.0]);
        assert_eq!(sys.row(0).collect::<Vec<_>>(), vec![(0, 1.0)]);
        assert_eq!(system_apply(&sys, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(system_residual_infnorm(&sys, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn contract_errors() {
        let a = mdp_a();
        assert!(matches!(
            apply_optimal_bellman(&a, &[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            build_policy_system(&a, &Policy::new(vec![0, 1])),
            Err(Error::InvalidPolicy { state: 1, action: 1 })
        ));
        assert!(matches!(
            apply_policy_bellman(&a, &Policy::new(vec![0]), &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn garnet_greedy_system_rows_are_distributions() {
        let mdp = generators::generate_garnet(&generators::GarnetSpec {
            n: 30,
            m: 4,
            branching: 5,
            cost_lo: 0.0,
            cost_hi: 1.0,
            gamma: 0.9,
            seed: 11,
        })
        .unwrap();
        let pi = greedy_policy(&mdp, &vec![0.0; 30]).unwrap();
        let sys = build_policy_system(&mdp, &pi).unwrap();
        for s in 0..30 {
            let sum: f64 = sys.row(s).map(|(_, p)| p).sum();
            assert!((sum - 1.0).abs() <= ROW_SUM_TOL);
        }
    }
}

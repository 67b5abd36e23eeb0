//! Reproducible benchmark MDPs and small analytic fixtures.

use crate::eigen::eigen_spectrum;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mdp::{Mdp, MdpBuilder};
use crate::rng::SeededRng;

/// Garnet-style random MDP: every action is allowed in every state and each
/// `(s, a)` row has exactly `branching` distinct successors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarnetSpec {
    pub n: usize,
    pub m: usize,
    pub branching: usize,
    pub cost_lo: f64,
    pub cost_hi: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl GarnetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.branching == 0 || self.branching > self.n {
            return bad(format!("branch must lie in [1, n = {}], got {}", self.n, self.branching));
        }
        if !(self.cost_lo.is_finite() && self.cost_hi.is_finite()) || self.cost_lo > self.cost_hi {
            return bad(format!("cost range [{}, {}] is invalid", self.cost_lo, self.cost_hi));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} not in (0, 1)", self.gamma));
        }
        Ok(())
    }
}

/// Generates a Garnet MDP. For each `(s, a)` in state-major order the stream
/// is consumed as: `branching` distinct successors by rejection with
/// `below(n)`, then one `uniform_open_closed` weight per successor in
/// increasing successor order, then the cost `uniform(lo, hi)`. Weights are
/// normalized and any rounding remainder is added to the largest entry, so
/// every row sums to exactly `1.0` in row order.
pub fn generate_garnet(spec: &GarnetSpec) -> Result<Mdp> {
    spec.validate()?;
    let GarnetSpec { n, m, branching: b, .. } = *spec;
    let mut rng = SeededRng::new(spec.seed);
    let mut builder = MdpBuilder::with_capacity(n, m, spec.gamma, n * m, n * m * b);
    let mut succ: Vec<usize> = Vec::with_capacity(b);
    let mut weights = vec![0.0; b];
    for s in 0..n {
        for a in 0..m {
            succ.clear();
            if b == n {
                succ.extend(0..n);
            } else {
                while succ.len() < b {
                    let d = rng.below(n);
                    if !succ.contains(&d) {
                        succ.push(d);
                    }
                }
                succ.sort_unstable();
            }
            for w in weights.iter_mut() {
                *w = rng.uniform_open_closed();
            }
            normalize_exact(&mut weights);
            let cost = rng.uniform(spec.cost_lo, spec.cost_hi);
            builder.add(s, a, cost, succ.iter().copied().zip(weights.iter().copied()))?;
        }
    }
    Ok(builder.build_unchecked())
}

/// Scales to unit sum so that the left-to-right floating-point sum is exactly
/// `1.0`. The largest entry absorbs the remainder: it is set to the nearest
/// value within 16 ulps of `w_max + (1 - sum)` that makes the sum exact.
/// Intermediate rounding occasionally skips `1.0` for every such value; the
/// last entry then takes `1 - (sum of the others)`, which is always exact
/// because that entry is then at least of the magnitude of the rounding error.
pub(crate) fn normalize_exact(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let exact = |w: &[f64]| w.iter().sum::<f64>() == 1.0;
    if exact(w) {
        return;
    }
    let imax = w
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > w[best] { i } else { best });
    let sum: f64 = w.iter().sum();
    let base = w[imax] + (1.0 - sum);
    let (mut up, mut down) = (base, base);
    w[imax] = base;
    if exact(w) {
        return;
    }
    for _ in 0..16 {
        up = up.next_up();
        down = down.next_down();
        for c in [up, down] {
            w[imax] = c;
            if exact(w) {
                return;
            }
        }
    }
    w[imax] = base;
    let last = w.len() - 1;
    let head: f64 = w[..last].iter().sum();
    w[last] = 1.0 - head;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fixture {
    /// Two-state swap, one action, `g = (1, 0)`, `γ = 0.5`.
    MdpA,
    /// One state, two self-loop actions with costs `2` and `1`, `γ = 0.5`.
    MdpB,
    /// `n`-state chain driven towards a cost-free goal at `n - 1`.
    Chain { n: usize, gamma: f64 },
    /// Dense operator pair with clustered and spread spectra.
    TwoClusterEigs { n: usize },
}

#[derive(Debug, Clone)]
pub enum FixtureValue {
    Mdp(Mdp),
    Operators(OperatorPair),
}

#[derive(Debug, Clone)]
pub struct OperatorPair {
    /// `I - 0.9 P` for a random dense row-stochastic `P`.
    pub clustered: DenseMatrix,
    /// Random matrix scaled to unit spectral radius.
    pub spread: DenseMatrix,
}

pub fn make_fixture(fixture: Fixture) -> Result<FixtureValue> {
    match fixture {
        Fixture::TwoClusterEigs { n } => two_cluster_operators(n, 0).map(FixtureValue::Operators),
        other => make_mdp(other).map(FixtureValue::Mdp),
    }
}

/// The MDP fixtures; `TwoClusterEigs` is rejected.
pub fn make_mdp(fixture: Fixture) -> Result<Mdp> {
    match fixture {
        Fixture::MdpA => {
            let mut b = MdpBuilder::new(2, 1, 0.5);
            b.add(0, 0, 1.0, [(1, 1.0)])?;
            b.add(1, 0, 0.0, [(0, 1.0)])?;
            b.build()
        }
        Fixture::MdpB => {
            let mut b = MdpBuilder::new(1, 2, 0.5);
            b.add(0, 0, 2.0, [(0, 1.0)])?;
            b.add(0, 1, 1.0, [(0, 1.0)])?;
            b.build()
        }
        Fixture::Chain { n, gamma } => chain(n, gamma),
        Fixture::TwoClusterEigs { .. } => Err(Error::InvalidConfig(
            "two_cluster_eigs is an operator fixture, not an MDP".into(),
        )),
    }
}

/// Action 0 advances with probability 0.9 and slips in place with 0.1;
/// action 1 waits in place with 0.9 and falls back to state 0 with 0.1.
/// Costs are 1 (advance) and 0.5 (wait) everywhere except the goal.
fn chain(n: usize, gamma: f64) -> Result<Mdp> {
    if n < 2 {
        return Err(Error::InvalidConfig("chain needs at least 2 states".into()));
    }
    let goal = n - 1;
    let mut b = MdpBuilder::new(n, 2, gamma);
    for s in 0..n {
        let (c_adv, c_wait) = if s == goal { (0.0, 0.0) } else { (1.0, 0.5) };
        b.add(s, 0, c_adv, merge_row(&[((s + 1).min(goal), 0.9), (s, 0.1)]))?;
        b.add(s, 1, c_wait, merge_row(&[(s, 0.9), (0, 0.1)]))?;
    }
    b.build()
}

fn merge_row(entries: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    let mut sorted = entries.to_vec();
    sorted.sort_by_key(|e| e.0);
    for (d, p) in sorted {
        match row.last_mut() {
            Some(last) if last.0 == d => last.1 += p,
            _ => row.push((d, p)),
        }
    }
    row
}

/// Operator pair for the clustered-versus-spread GMRES comparison.
///
/// The spread operator has i.i.d. uniform(-1, 1) entries divided by its
/// spectral radius (computed exactly for `n ≤ 128`, otherwise the circular-law
/// estimate `sqrt(n / 3)`).
pub fn two_cluster_operators(n: usize, seed: u64) -> Result<OperatorPair> {
    if n == 0 {
        return Err(Error::InvalidConfig("operator fixture needs n ≥ 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut p = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let row = p.row_mut(i);
        row.iter_mut().for_each(|x| *x = rng.uniform_open_closed());
        normalize_exact(row);
    }
    let mut clustered = p;
    clustered.scale(-0.9);
    for i in 0..n {
        clustered[(i, i)] += 1.0;
    }

    let mut spread = DenseMatrix::zeros(n, n);
    for i in 0..n {
        spread.row_mut(i).iter_mut().for_each(|x| *x = rng.uniform(-1.0, 1.0));
    }
    let radius = if n <= crate::eigen::MAX_DIM {
        eigen_spectrum(&spread)?
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    } else {
        (n as f64 / 3.0).sqrt()
    };
    if radius > 0.0 {
        spread.scale(1.0 / radius);
    }
    Ok(OperatorPair { clustered, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::to_text;
    use crate::mdp::validate_mdp;

    fn spec(n: usize, m: usize, b: usize, seed: u64) -> GarnetSpec {
        GarnetSpec {
            n,
            m,
            branching: b,
            cost_lo: 0.0,
            cost_hi: 1.0,
            gamma: 0.9,
            seed,
        }
    }

    #[test]
    fn degenerate_garnet() {
        let mut sp = spec(2, 1, 2, 3);
        sp.cost_lo = 1.0;
        sp.cost_hi = 1.0;
        let mdp = generate_garnet(&sp).unwrap();
        assert!(validate_mdp(&mdp).is_ok());
        for s in 0..2 {
            let sum: f64 = mdp.transitions(s, 0).unwrap().map(|(_, p)| p).sum();
            assert_eq!(sum, 1.0);
            assert_eq!(mdp.cost(s, 0), Some(1.0));
        }
    }

    #[test]
    fn rows_sum_exactly_to_one() {
        let mdp = generate_garnet(&spec(200, 5, 17, 9)).unwrap();
        assert!(validate_mdp(&mdp).is_ok());
        assert_eq!(mdp.nonzeros(), 200 * 5 * 17);
        for s in 0..200 {
            for a in 0..5 {
                let sum: f64 = mdp.transitions(s, a).unwrap().map(|(_, p)| p).sum();
                assert_eq!(sum, 1.0, "row ({s}, {a})");
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let a = to_text(&generate_garnet(&spec(50, 3, 4, 77)).unwrap());
        let b = to_text(&generate_garnet(&spec(50, 3, 4, 77)).unwrap());
        let c = to_text(&generate_garnet(&spec(50, 3, 4, 78)).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn spec_violations() {
        assert!(generate_garnet(&spec(5, 2, 0, 1)).is_err());
        assert!(generate_garnet(&spec(5, 2, 6, 1)).is_err());
        let mut s = spec(5, 2, 2, 1);
        s.cost_lo = 2.0;
        assert!(generate_garnet(&s).is_err());
        s = spec(5, 2, 2, 1);
        s.gamma = 1.0;
        assert!(generate_garnet(&s).is_err());
    }

    #[test]
    fn fixtures() {
        let a = make_mdp(Fixture::MdpA).unwrap();
        assert_eq!((a.n(), a.m(), a.gamma()), (2, 1, 0.5));
        let chain = make_mdp(Fixture::Chain { n: 100, gamma: 0.95 }).unwrap();
        assert!(validate_mdp(&chain).is_ok());
        for s in 0..100 {
            for act in 0..2 {
                assert!(chain.transitions(s, act).unwrap().count() <= 3);
            }
        }
        assert!(make_mdp(Fixture::TwoClusterEigs { n: 4 }).is_err());
        assert!(matches!(
            make_fixture(Fixture::TwoClusterEigs { n: 8 }).unwrap(),
            FixtureValue::Operators(_)
        ));
    }

    #[test]
    fn normalization_is_exact() {
        let mut rng = SeededRng::new(4);
        for len in (1..40).chain(std::iter::repeat(40).take(2000)) {
            let mut w: Vec<f64> = (0..len).map(|_| rng.uniform_open_closed()).collect();
            normalize_exact(&mut w);
            assert_eq!(w.iter().sum::<f64>(), 1.0);
            assert!(w.iter().all(|&p| p > 0.0));
        }
    }
}

//! Independent oracles shared by the integration tests. Linear algebra goes
//! through nalgebra, never through the crate's own LU or GMRES.

#![allow(dead_code)]

use ipi_core::generators::{generate_garnet, GarnetSpec};
use ipi_core::{Mdp, Policy};
use nalgebra::{DMatrix, DVector};

pub fn garnet(n: usize, m: usize, branching: usize, gamma: f64, seed: u64) -> Mdp {
    generate_garnet(&GarnetSpec {
        n,
        m,
        branching,
        cost_lo: 0.0,
        cost_hi: 1.0,
        gamma,
        seed,
    })
    .unwrap()
}

/// `(I - γP^π, g^π)` assembled straight from the MDP's rows.
pub fn dense_system(mdp: &Mdp, pi: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let n = mdp.n();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut g = DVector::<f64>::zeros(n);
    for s in 0..n {
        g[s] = mdp.cost(s, pi[s]).unwrap();
        for (d, p) in mdp.transitions(s, pi[s]).unwrap() {
            a[(s, d)] -= mdp.gamma() * p;
        }
    }
    (a, g)
}

pub fn evaluate(mdp: &Mdp, pi: &[usize]) -> Vec<f64> {
    let (a, g) = dense_system(mdp, pi);
    a.lu().solve(&g).expect("policy system is nonsingular").iter().copied().collect()
}

/// Every deterministic policy, in lexicographic order.
pub fn all_policies(mdp: &Mdp) -> Vec<Vec<usize>> {
    let choices: Vec<Vec<usize>> = (0..mdp.n()).map(|s| mdp.allowed_actions(s).collect()).collect();
    let mut out = vec![Vec::new()];
    for c in &choices {
        out = out
            .into_iter()
            .flat_map(|p| {
                c.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// `V*` as the componentwise minimum of `V^π` over all policies.
pub fn brute_force_optimum(mdp: &Mdp) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; mdp.n()];
    for pi in all_policies(mdp) {
        for (b, v) in best.iter_mut().zip(evaluate(mdp, &pi)) {
            *b = b.min(v);
        }
    }
    best
}

pub fn random_policy(mdp: &Mdp, rng: &mut ipi_core::rng::SeededRng) -> Policy {
    Policy::new(
        (0..mdp.n())
            .map(|s| {
                let acts: Vec<usize> = mdp.allowed_actions(s).collect();
                acts[rng.below(acts.len())]
            })
            .collect(),
    )
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

mod common;

use common::{all_policies, brute_force_optimum, dist_inf, evaluate, garnet};
use ipi_core::bench::compute_reference;
use ipi_core::format::to_text;
use ipi_core::solvers::{inexact_policy_iteration, SweepInner};
use ipi_core::{
    exact_policy_iteration, igmres_policy_iteration, optimistic_policy_iteration, value_iteration, Forcing, SolverConfig,
    TerminatedBy,
};

fn tiny(n: usize, m: usize, gamma: f64, seed: u64) -> ipi_core::Mdp {
    garnet(n, m, n.min(2), gamma, seed)
}

#[test]
fn exact_pi_matches_enumeration_and_terminates_finitely() {
    for seed in 0..40 {
        let mdp = tiny(3, 2, 0.9, seed);
        let vstar = brute_force_optimum(&mdp);
        let cfg = SolverConfig {
            eps_outer: 0.0,
            ..SolverConfig::default()
        };
        let res = exact_policy_iteration(&mdp, &[0.0; 3], &cfg).unwrap();
        // An exactly zero residual trips the tolerance check first.
        assert!(
            matches!(res.terminated_by, TerminatedBy::PolicyFixedPoint | TerminatedBy::Tolerance),
            "seed {seed}: {:?}",
            res.terminated_by
        );
        assert!(res.trace.outer_iterations() <= 2usize.pow(3), "seed {seed}");
        assert!(dist_inf(&res.v, &vstar) <= 1e-10, "seed {seed}");
        // The returned policy is optimal: its own value is V*.
        assert!(dist_inf(&evaluate(&mdp, res.policy.actions()), &vstar) <= 1e-10);
    }
}

#[test]
fn exact_pi_residual_never_increases() {
    for seed in 0..30 {
        let mdp = garnet(4, 3, 2, 0.95, 1000 + seed);
        let cfg = SolverConfig {
            eps_outer: 0.0,
            ..SolverConfig::default()
        };
        let res = exact_policy_iteration(&mdp, &[0.0; 4], &cfg).unwrap();
        assert!(res.trace.outer_iterations() <= 3usize.pow(4));
        // From k = 1 on every iterate is the value of a policy; V_0 is arbitrary.
        for w in res.trace.records[1..].windows(2) {
            assert!(w[1].residual_inf <= w[0].residual_inf + 1e-12, "seed {seed}: {:?}", res.trace.to_csv());
        }
    }
}

#[test]
fn igmres_pi_matches_enumeration() {
    for seed in 0..40 {
        let mdp = garnet(4, 3, 2, 0.9, 2000 + seed);
        let vstar = brute_force_optimum(&mdp);
        let cfg = SolverConfig {
            alpha: 0.1,
            eps_outer: 1e-6 * (1.0 - 0.9),
            restart_len: 4,
            ..SolverConfig::default()
        };
        let res = igmres_policy_iteration(&mdp, &[0.0; 4], &cfg).unwrap();
        assert_eq!(res.terminated_by, TerminatedBy::Tolerance);
        assert!(dist_inf(&res.v, &vstar) <= 1e-6, "seed {seed}");
    }
}

#[test]
fn every_solver_agrees_on_a_moderate_instance() {
    let mdp = garnet(60, 5, 4, 0.95, 9);
    let vstar = compute_reference(&mdp).unwrap();
    let cfg = SolverConfig {
        eps_outer: 1e-10,
        ..SolverConfig::for_gamma(0.95)
    };
    let v0 = vec![0.0; 60];
    let runs = [
        value_iteration(&mdp, &v0, &SolverConfig { max_outer: 2000, ..cfg }).unwrap(),
        exact_policy_iteration(&mdp, &v0, &cfg).unwrap(),
        optimistic_policy_iteration(&mdp, &v0, 20, &cfg).unwrap(),
        igmres_policy_iteration(&mdp, &v0, &cfg).unwrap(),
        igmres_policy_iteration(&mdp, &v0, &SolverConfig { forcing: Forcing::Geometric { decay: 0.5 }, ..cfg }).unwrap(),
        inexact_policy_iteration(&mdp, &v0, &SolverConfig { max_outer: 2000, ..cfg }, SweepInner).unwrap(),
    ];
    for r in &runs {
        assert_eq!(r.terminated_by, TerminatedBy::Tolerance);
        assert!(dist_inf(&r.v, &vstar) <= 1e-10 / (1.0 - 0.95) + 1e-12);
    }
}

#[test]
fn gmres_evaluation_above_dense_cap_agrees_with_lu() {
    let mdp = garnet(50, 4, 5, 0.9, 5);
    let cfg = SolverConfig {
        eps_outer: 1e-11,
        ..SolverConfig::default()
    };
    let lu = exact_policy_iteration(&mdp, &[0.0; 50], &cfg).unwrap();
    let krylov = exact_policy_iteration(&mdp, &[0.0; 50], &SolverConfig { dense_cap: 10, ..cfg }).unwrap();
    assert_eq!(lu.policy, krylov.policy);
    assert!(dist_inf(&lu.v, &krylov.v) <= 1e-10);
    assert!(krylov.trace.total_inner() > 0);
    assert_eq!(lu.trace.total_inner(), 0);
}

#[test]
fn one_sweep_opi_is_value_iteration() {
    let mdp = garnet(30, 4, 3, 0.9, 77);
    let cfg = SolverConfig {
        eps_outer: 1e-9,
        ..SolverConfig::default()
    };
    let vi = value_iteration(&mdp, &[0.0; 30], &cfg).unwrap();
    let opi = optimistic_policy_iteration(&mdp, &[0.0; 30], 1, &cfg).unwrap();
    assert_eq!(vi.v, opi.v);
    assert_eq!(vi.trace.outer_iterations(), opi.trace.outer_iterations());
    for (a, b) in vi.trace.records.iter().zip(&opi.trace.records) {
        assert_eq!(a.residual_inf.to_bits(), b.residual_inf.to_bits());
    }
}

#[test]
fn reference_matches_enumeration() {
    for seed in 0..10 {
        let mdp = garnet(5, 3, 3, 0.99, 300 + seed);
        assert!(all_policies(&mdp).len() == 243);
        let got = compute_reference(&mdp).unwrap();
        assert!(dist_inf(&got, &brute_force_optimum(&mdp)) <= 1e-9, "seed {seed}");
    }
}

#[test]
fn stop_certificates_hold_for_both_forcing_modes() {
    let mdp = garnet(200, 6, 5, 0.97, 4);
    for forcing in [Forcing::Constant, Forcing::Geometric { decay: 0.7 }] {
        let cfg = SolverConfig {
            forcing,
            restart_len: 5,
            ..SolverConfig::for_gamma(0.97)
        };
        let res = igmres_policy_iteration(&mdp, &[0.0; 200], &cfg).unwrap();
        assert_eq!(res.terminated_by, TerminatedBy::Tolerance);
        for r in &res.trace.records[1..] {
            let c = r.certificate.expect("inexact PI records carry a certificate");
            assert!(c.holds(1e-12), "{c:?}");
        }
    }
}

#[test]
fn garnet_generation_is_seed_deterministic() {
    let a = garnet(2000, 10, 8, 0.95, 42);
    let b = garnet(2000, 10, 8, 0.95, 42);
    let c = garnet(2000, 10, 8, 0.95, 43);
    assert_eq!(a.nonzeros(), 2000 * 10 * 8);
    assert_eq!(to_text(&a), to_text(&b));
    assert_ne!(to_text(&a), to_text(&c));
}

#[test]
#[ignore = "builds an 8·10⁶-entry kernel twice; run with --ignored"]
fn benchmark_scale_garnet_is_seed_deterministic() {
    let a = garnet(10_000, 40, 20, 0.95, 42);
    let b = garnet(10_000, 40, 20, 0.95, 42);
    assert_eq!(a.nonzeros(), 8_000_000);
    assert_eq!(to_text(&a), to_text(&b));
}

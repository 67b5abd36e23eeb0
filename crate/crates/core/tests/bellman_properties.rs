//! Property checks of the Bellman operators on random Garnet MDPs.

mod common;

use common::{dense_system, dist_inf, garnet};
use ipi_core::{apply_optimal_bellman, apply_policy_bellman, bellman_residual, build_policy_system, greedy_policy};
use nalgebra::DVector;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (usize, usize, usize, f64, u64)> {
    (2usize..12, 1usize..5, 1usize..4, 0.05f64..0.99, any::<u64>())
        .prop_map(|(n, m, b, g, seed)| (n, m, b.min(n), g, seed))
}

fn vectors(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n))
}

fn with_vectors() -> impl Strategy<Value = ((usize, usize, usize, f64, u64), Vec<f64>, Vec<f64>)> {
    instance().prop_flat_map(|inst| vectors(inst.0).prop_map(move |(a, b)| (inst, a, b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_operator_is_a_gamma_contraction(((n, m, b, g, seed), v1, v2) in with_vectors()) {
        let mdp = garnet(n, m, b, g, seed);
        let t1 = apply_optimal_bellman(&mdp, &v1).unwrap();
        let t2 = apply_optimal_bellman(&mdp, &v2).unwrap();
        prop_assert!(dist_inf(&t1, &t2) <= g * dist_inf(&v1, &v2) + 1e-12);
    }

    #[test]
    fn optimal_operator_is_monotone(((n, m, b, g, seed), v1, bump) in with_vectors()) {
        let mdp = garnet(n, m, b, g, seed);
        let v2: Vec<f64> = v1.iter().zip(&bump).map(|(x, d)| x + d.abs()).collect();
        let t1 = apply_optimal_bellman(&mdp, &v1).unwrap();
        let t2 = apply_optimal_bellman(&mdp, &v2).unwrap();
        for (a, b) in t1.iter().zip(&t2) {
            prop_assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn constant_shift_moves_by_gamma_c(((n, m, b, g, seed), v, _w) in with_vectors(), c in -5.0f64..5.0) {
        let mdp = garnet(n, m, b, g, seed);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let t = apply_optimal_bellman(&mdp, &v).unwrap();
        let ts = apply_optimal_bellman(&mdp, &shifted).unwrap();
        for (a, b) in t.iter().zip(&ts) {
            prop_assert!((b - a - g * c).abs() <= 1e-10);
        }
    }

    #[test]
    fn residual_is_lipschitz(((n, m, b, g, seed), v1, v2) in with_vectors()) {
        let mdp = garnet(n, m, b, g, seed);
        let r1 = bellman_residual(&mdp, &v1).unwrap();
        let r2 = bellman_residual(&mdp, &v2).unwrap();
        prop_assert!(dist_inf(&r1, &r2) <= (1.0 + g) * dist_inf(&v1, &v2) + 1e-12);
    }

    #[test]
    fn greedy_residual_equals_policy_system_residual(((n, m, b, g, seed), v, _w) in with_vectors()) {
        // r(V) = V - T V = -(g^π - (I - γP^π) V) for the greedy π.
        let mdp = garnet(n, m, b, g, seed);
        let (pi, tv) = mdp.greedy_backup(&v).unwrap();
        prop_assert_eq!(&pi, &greedy_policy(&mdp, &v).unwrap());
        let r = bellman_residual(&mdp, &v).unwrap();
        let (a, gvec) = dense_system(&mdp, pi.actions());
        let phi = &gvec - &a * DVector::from_column_slice(&v);
        for s in 0..n {
            prop_assert!((r[s] - (v[s] - tv[s])).abs() <= 1e-12);
            prop_assert!((r[s] + phi[s]).abs() <= 1e-10 * (1.0 + v[s].abs()));
        }
        let sys = build_policy_system(&mdp, &pi).unwrap();
        let inf = sys.residual_infnorm(&v).unwrap();
        prop_assert!((inf - phi.amax()).abs() <= 1e-10 * (1.0 + phi.amax()));
    }

    #[test]
    fn policy_operator_matches_dense_model(((n, m, b, g, seed), v, _w) in with_vectors()) {
        let mdp = garnet(n, m, b, g, seed);
        let pi = greedy_policy(&mdp, &v).unwrap();
        let tv = apply_policy_bellman(&mdp, &pi, &v).unwrap();
        let (a, gvec) = dense_system(&mdp, pi.actions());
        let x = DVector::from_column_slice(&v);
        // T^π V = g + γ P V = g - (I - γP) V + V.
        let expected = &gvec - &a * &x + &x;
        for s in 0..n {
            prop_assert!((tv[s] - expected[s]).abs() <= 1e-10 * (1.0 + v[s].abs()));
        }
        let sys = build_policy_system(&mdp, &pi).unwrap();
        let jv = sys.apply(&v).unwrap();
        let dense = &a * &x;
        for s in 0..n {
            prop_assert!((jv[s] - dense[s]).abs() <= 1e-12 * (1.0 + v[s].abs()));
        }
    }
}

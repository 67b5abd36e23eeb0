//! Inexact policy iteration for finite discounted Markov decision processes.
//!
//! The crate provides a sparse MDP model with Bellman operators, a restarted
//! GMRES solver with an arbitrary stopping predicate, the outer loops (value
//! iteration, exact / optimistic / inexact policy iteration), seeded instance
//! generators, and a benchmark harness that writes CSV traces.

pub mod bench;
pub mod eigen;
pub mod error;
pub mod format;
pub mod generators;
pub mod gmres;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod solvers;
pub mod trace;

pub use error::{Error, Result};
pub use generators::{generate_garnet, make_fixture, make_mdp, Fixture, FixtureValue, GarnetSpec};
pub use gmres::{gmres_restarted, GmresParams, GmresReport, GmresTermination};
pub use mdp::{
    apply_optimal_bellman, apply_policy_bellman, bellman_residual, build_policy_system, greedy_policy, validate_mdp,
    Mdp, MdpBuilder, Policy, PolicyLinearSystem, ValidationReport, ValueVector,
};
pub use solvers::{
    exact_policy_iteration, igmres_policy_iteration, inexact_policy_iteration, optimistic_policy_iteration,
    value_iteration, Forcing, SolveResult, SolverConfig, SolverKind, TerminatedBy,
};
pub use trace::{IterationTrace, TraceRecord};

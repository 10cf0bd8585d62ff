//! Optimal transmission scheduling for a status-update link that minimizes
//! long-run average Age of Information (AoI) under an average transmission
//! budget.
//!
//! The link is slotted: a fresh update appears each slot with probability
//! `p`, each transmission fails independently with probability `gamma`, and
//! the device may idle, retransmit the last failed update, or send the fresh
//! one. The constrained problem is solved through its Lagrangian relaxation:
//!
//! - [`model`] builds the truncated state space and the transition kernel
//!   after action elimination.
//! - [`solver`] runs relative value iteration for a fixed multiplier.
//! - [`constrained`] evaluates policies exactly and searches the multiplier,
//!   returning a two-policy mixture that spends exactly the budget.
//! - [`structure`] checks the threshold shape of solved policies and
//!   compresses them to switching ages.
//! - [`sim`] replays policies slot by slot on the untruncated dynamics.
//!
//! Inner loops run on rayon when the `parallel` feature (default) is on.

pub mod constrained;
pub mod error;
pub mod exec;
pub mod model;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod structure;

pub use constrained::{
    evaluate_policy, evaluate_stationary, mixture_targets, solve_cmdp, MixturePolicy,
    MixtureTargets, PolicyEvaluation,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    allowed_actions, build_kernel, transition, Action, Kernel, ModelParams, State, StateSpace,
};
pub use policy::{DeterministicPolicy, StationaryPolicy, UniformRandomPolicy};
pub use sim::{
    calibrate_random_baseline, compare_policies, run_trial, RandomBaseline, SimConfig, SimPolicy,
    SimReport,
};
pub use solver::{q_value, rvi_solve, RviConfig, RviSolution};
pub use structure::{check_monotone_delta, check_monotone_l, extract_boundary, ThresholdBoundary};

//! Exact machinery for small tabular constrained MDPs.
//!
//! Everything here is computed with direct linear solves or value iteration,
//! which makes these routines suitable as ground truth for the learning code.
//! Constraint quantities are reported in occupancy units: `<x_pi, C_k>` is the
//! discounted probability of exhibiting behavior `k`, directly comparable to a
//! threshold in `[0, 1]`.

mod dual;
mod gda;
mod model;
mod text;

pub use dual::{dual_minimize, BestResponse, DualGrid, DualSolution, PrimalPoint, lagrangian_best_response};
pub use gda::{gda_reference, policy_gradient, GdaConfig, GdaStep, GdaTrajectory};
pub use model::{
    discounted_state_distribution, exact_return, normalizer, occupancy, profile, random_cmdp, random_policy, solve_linear,
    state_values,
    value_iteration, ReturnProfile, TabularCMDP, TabularPolicy,
};
pub use text::{parse_cmdp, write_cmdp};

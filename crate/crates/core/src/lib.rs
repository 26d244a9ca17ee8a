//! Tabular robust reinforcement learning toolkit.
//!
//! Building blocks:
//! - [`model`]: finite-horizon tabular MDPs, robust-setting configuration,
//!   empirical models, policies and trajectories;
//! - [`dual`]: the six f-divergence robust Bellman backups (ball-constrained
//!   and penalty-regularized × TV/KL/χ²), a fast greedy TV solver, and a
//!   brute-force simplex-grid oracle for cross-checking;
//! - [`learner`]: optimistic robust value iteration with exploration bonuses
//!   driven by online trajectories;
//! - [`envs`]: benchmark environments and the simulator interface;
//! - [`eval`]: exact robust evaluation, rollouts, regret curves, visitation
//!   measures and the supremal visitation ratio;
//! - [`seeding`]: the frozen replication-seed derivation rule.

pub mod divergence;
pub mod dual;
pub mod envs;
pub mod eval;
pub mod learner;
pub mod model;
pub mod seeding;

pub use model::{
    Divergence, EmpiricalModel, ModelDims, Policy, RobustSpec, TabularMDP, Trajectory,
    TransitionKernel, ValueTables,
};

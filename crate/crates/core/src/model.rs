//! Core data types for finite-horizon tabular MDPs: the nominal model, the
//! robust-setting configuration, empirical (count-based) models, policies,
//! value tables and trajectories.
//!
//! Conventions used throughout the crate:
//! - states and actions are dense `0..S` / `0..A` indices;
//! - steps are 0-based `h ∈ 0..H` internally; diagnostics print 1-based steps;
//! - transition tensors are flat row-major `[h][s][a][s']` arrays.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-sum / distribution tolerance used by validators.
pub const DIST_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory rejected: {0}")]
    BadTrajectory(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// State/action/horizon sizes of a tabular model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl ModelDims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Self {
        Self { states, actions, horizon }
    }

    #[inline]
    pub fn sa_index(&self, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(h < self.horizon && s < self.states && a < self.actions);
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn row_start(&self, h: usize, s: usize, a: usize) -> usize {
        self.sa_index(h, s, a) * self.states
    }

    pub fn n_cells(&self) -> usize {
        self.horizon * self.states * self.actions
    }
}

/// Per-step transition kernel indexed `[h][s][a] -> distribution over s'`.
///
/// Also used for worst-case kernels produced by the evaluator, where rows may
/// be any distribution (not necessarily close to a nominal model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    dims: ModelDims,
    p: Vec<f64>,
}

impl TransitionKernel {
    pub fn zeroed(dims: ModelDims) -> Self {
        Self { dims, p: vec![0.0; dims.n_cells() * dims.states] }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.dims.row_start(h, s, a);
        &self.p[start..start + self.dims.states]
    }

    #[inline]
    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let start = self.dims.row_start(h, s, a);
        &mut self.p[start..start + self.dims.states]
    }

    pub fn set_row(&mut self, h: usize, s: usize, a: usize, row: &[f64]) {
        self.row_mut(h, s, a).copy_from_slice(row);
    }

    /// Smallest strictly positive entry, if any. Used as the natural C_MP
    /// (minimal positive transition probability) of a known model.
    pub fn min_positive_entry(&self) -> Option<f64> {
        self.p
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(None, |acc, x| Some(acc.map_or(x, |m: f64| m.min(x))))
    }
}

/// Finite-horizon nominal model: transitions P, rewards r in [0,1], horizon H
/// and a fixed initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    dims: ModelDims,
    transitions: TransitionKernel,
    rewards: Vec<f64>,
    pub initial_state: usize,
}

/// One invariant violation found by [`TabularMDP::validate`].
///
/// Step indices print 1-based (the time-step convention), states and actions
/// 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { h: usize, s: usize, a: usize, sum: f64 },
    NegativeProbability { h: usize, s: usize, a: usize, next: usize, value: f64 },
    RewardRange { h: usize, s: usize, a: usize, value: f64 },
    InitialStateRange { state: usize, states: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { h, s, a, sum } => {
                write!(f, "row sum ≠ 1 at ({},{},{}): {sum}", h + 1, s, a)
            }
            Violation::NegativeProbability { h, s, a, next, value } => {
                write!(f, "negative transition probability at ({},{},{},{next}): {value}", h + 1, s, a)
            }
            Violation::RewardRange { h, s, a, value } => {
                write!(f, "reward out of [0,1] at ({},{},{}): {value}", h + 1, s, a)
            }
            Violation::InitialStateRange { state, states } => {
                write!(f, "initial state {state} out of range (S={states})")
            }
        }
    }
}

impl TabularMDP {
    /// All-zero model; the caller fills rows and rewards.
    pub fn zeroed(dims: ModelDims, initial_state: usize) -> Self {
        Self {
            dims,
            transitions: TransitionKernel::zeroed(dims),
            rewards: vec![0.0; dims.n_cells()],
            initial_state,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn transitions(&self) -> &TransitionKernel {
        &self.transitions
    }

    #[inline]
    pub fn p_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        self.transitions.row(h, s, a)
    }

    pub fn set_p_row(&mut self, h: usize, s: usize, a: usize, row: &[f64]) {
        self.transitions.set_row(h, s, a, row);
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.dims.sa_index(h, s, a)]
    }

    pub fn set_reward(&mut self, h: usize, s: usize, a: usize, r: f64) {
        let idx = self.dims.sa_index(h, s, a);
        self.rewards[idx] = r;
    }

    pub fn min_positive_transition(&self) -> Option<f64> {
        self.transitions.min_positive_entry()
    }

    /// Checks every model invariant; returns the (possibly empty) violation
    /// list. Total: never panics on finite input.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.dims;
        if self.initial_state >= d.states {
            out.push(Violation::InitialStateRange { state: self.initial_state, states: d.states });
        }
        for h in 0..d.horizon {
            for s in 0..d.states {
                for a in 0..d.actions {
                    let row = self.p_row(h, s, a);
                    let mut sum = 0.0;
                    for (next, &x) in row.iter().enumerate() {
                        if x < 0.0 {
                            out.push(Violation::NegativeProbability { h, s, a, next, value: x });
                        }
                        sum += x;
                    }
                    if (sum - 1.0).abs() > DIST_TOL {
                        out.push(Violation::RowSum { h, s, a, sum });
                    }
                    let r = self.reward(h, s, a);
                    if !(0.0..=1.0).contains(&r) {
                        out.push(Violation::RewardRange { h, s, a, value: r });
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MdpWire::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let wire: MdpWire =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidModel(e.to_string()))?;
        wire.try_into()
    }
}

/// Fixture wire form. Field names are part of the file format.
#[derive(Serialize, Deserialize)]
struct MdpWire {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<Vec<f64>>>>,
    r: Vec<Vec<Vec<f64>>>,
    initial_state: usize,
}

impl From<&TabularMDP> for MdpWire {
    fn from(m: &TabularMDP) -> Self {
        let d = m.dims;
        let p = (0..d.horizon)
            .map(|h| {
                (0..d.states)
                    .map(|s| (0..d.actions).map(|a| m.p_row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        let r = (0..d.horizon)
            .map(|h| {
                (0..d.states)
                    .map(|s| (0..d.actions).map(|a| m.reward(h, s, a)).collect())
                    .collect()
            })
            .collect();
        MdpWire { s: d.states, a: d.actions, h: d.horizon, p, r, initial_state: m.initial_state }
    }
}

impl TryFrom<MdpWire> for TabularMDP {
    type Error = ModelError;

    fn try_from(w: MdpWire) -> Result<Self, ModelError> {
        if w.s == 0 || w.a == 0 || w.h == 0 {
            return Err(ModelError::InvalidModel("S, A and H must all be ≥ 1".into()));
        }
        let dims = ModelDims::new(w.s, w.a, w.h);
        let mut m = TabularMDP::zeroed(dims, w.initial_state);
        if w.p.len() != w.h || w.r.len() != w.h {
            return Err(ModelError::DimensionMismatch("P/r outer length must equal H".into()));
        }
        for (h, (ph, rh)) in w.p.iter().zip(w.r.iter()).enumerate() {
            if ph.len() != w.s || rh.len() != w.s {
                return Err(ModelError::DimensionMismatch(format!("P/r state dim at h={}", h + 1)));
            }
            for (s, (psa, rsa)) in ph.iter().zip(rh.iter()).enumerate() {
                if psa.len() != w.a || rsa.len() != w.a {
                    return Err(ModelError::DimensionMismatch(format!(
                        "P/r action dim at (h,s)=({},{s})",
                        h + 1
                    )));
                }
                for (a, row) in psa.iter().enumerate() {
                    if row.len() != w.s {
                        return Err(ModelError::DimensionMismatch(format!(
                            "P row length at ({},{s},{a})",
                            h + 1
                        )));
                    }
                    m.set_p_row(h, s, a, row);
                    m.set_reward(h, s, a, rsa[a]);
                }
            }
        }
        Ok(m)
    }
}

/// Which robust setting is in play: a divergence-ball constraint of radius ρ
/// or a β-weighted divergence penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Tv,
    Kl,
    Chi2,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Tv => write!(f, "tv"),
            Divergence::Kl => write!(f, "kl"),
            Divergence::Chi2 => write!(f, "chi2"),
        }
    }
}

/// Robust-setting configuration. The enum shape keeps the "exactly one of
/// ρ / β is active" invariant structural.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "framework", rename_all = "lowercase")]
pub enum RobustSpec {
    Constrained { divergence: Divergence, rho: f64 },
    Regularized { divergence: Divergence, beta: f64 },
}

impl RobustSpec {
    pub fn constrained(divergence: Divergence, rho: f64) -> Self {
        RobustSpec::Constrained { divergence, rho }
    }

    pub fn regularized(divergence: Divergence, beta: f64) -> Self {
        RobustSpec::Regularized { divergence, beta }
    }

    pub fn divergence(&self) -> Divergence {
        match *self {
            RobustSpec::Constrained { divergence, .. } => divergence,
            RobustSpec::Regularized { divergence, .. } => divergence,
        }
    }

    /// ρ for constrained settings, β for regularized ones.
    pub fn level(&self) -> f64 {
        match *self {
            RobustSpec::Constrained { rho, .. } => rho,
            RobustSpec::Regularized { beta, .. } => beta,
        }
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, RobustSpec::Constrained { .. })
    }

    pub fn label(&self) -> String {
        match self {
            RobustSpec::Constrained { divergence, .. } => format!("constrained-{divergence}"),
            RobustSpec::Regularized { divergence, .. } => format!("regularized-{divergence}"),
        }
    }
}

/// Deterministic time-dependent policy: an action for every (h, s).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    states: usize,
    actions: Vec<u16>,
}

impl Policy {
    pub fn uniform(dims: ModelDims, action: usize) -> Self {
        Self {
            horizon: dims.horizon,
            states: dims.states,
            actions: vec![action as u16; dims.horizon * dims.states],
        }
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.states + s] as usize
    }

    pub fn set_action(&mut self, h: usize, s: usize, a: usize) {
        self.actions[h * self.states + s] = a as u16;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// True iff every entry is a valid action index for `dims`.
    pub fn conforms_to(&self, dims: ModelDims) -> bool {
        self.horizon == dims.horizon
            && self.states == dims.states
            && self.actions.iter().all(|&a| (a as usize) < dims.actions)
    }
}

/// Time-indexed value tables: V over (H+1) steps (terminal row zero) and Q
/// over H steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    dims: ModelDims,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTables {
    pub fn zeroed(dims: ModelDims) -> Self {
        Self {
            dims,
            v: vec![0.0; (dims.horizon + 1) * dims.states],
            q: vec![0.0; dims.n_cells()],
        }
    }

    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }

    /// The V row at step `h` (0-based; `h == H` is the terminal zero row).
    #[inline]
    pub fn v_row(&self, h: usize) -> &[f64] {
        &self.v[h * self.dims.states..(h + 1) * self.dims.states]
    }

    pub fn set_v(&mut self, h: usize, s: usize, value: f64) {
        self.v[h * self.dims.states + s] = value;
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.dims.sa_index(h, s, a)]
    }

    pub fn set_q(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let idx = self.dims.sa_index(h, s, a);
        self.q[idx] = value;
    }
}

/// One executed episode: H steps of (state, action, observed reward) plus the
/// terminal next state, so the step-H transition is recorded too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// Visit counts plus empirical rewards/transitions, stored as exact count
/// sums so that the incremental update equals the batch formula: r̂ and P̂
/// are count/sum ratios with the n∨1 convention (zero rows stay all-zero).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    dims: ModelDims,
    n: Vec<u32>,
    reward_sum: Vec<f64>,
    next_counts: Vec<u32>,
    r_hat: Vec<f64>,
    p_hat: Vec<f64>,
}

impl EmpiricalModel {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            n: vec![0; dims.n_cells()],
            reward_sum: vec![0.0; dims.n_cells()],
            next_counts: vec![0; dims.n_cells() * dims.states],
            r_hat: vec![0.0; dims.n_cells()],
            p_hat: vec![0.0; dims.n_cells() * dims.states],
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    #[inline]
    pub fn count(&self, h: usize, s: usize, a: usize) -> u32 {
        self.n[self.dims.sa_index(h, s, a)]
    }

    #[inline]
    pub fn r_hat(&self, h: usize, s: usize, a: usize) -> f64 {
        self.r_hat[self.dims.sa_index(h, s, a)]
    }

    /// Empirical transition row; all-zero while the cell is unvisited.
    #[inline]
    pub fn p_hat_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.dims.row_start(h, s, a);
        &self.p_hat[start..start + self.dims.states]
    }

    /// Folds one trajectory into the counts and running means. The
    /// trajectory is validated up front and rejected atomically on any
    /// out-of-range index or reward.
    pub fn update(&mut self, tau: &Trajectory) -> Result<(), ModelError> {
        let d = self.dims;
        if tau.steps.len() != d.horizon {
            return Err(ModelError::BadTrajectory(format!(
                "expected {} steps, got {}",
                d.horizon,
                tau.steps.len()
            )));
        }
        if tau.final_state >= d.states {
            return Err(ModelError::BadTrajectory(format!(
                "final state {} out of range",
                tau.final_state
            )));
        }
        for (h, step) in tau.steps.iter().enumerate() {
            if step.state >= d.states || step.action >= d.actions {
                return Err(ModelError::BadTrajectory(format!(
                    "index out of range at step {}: (s,a)=({},{})",
                    h + 1,
                    step.state,
                    step.action
                )));
            }
            if !(0.0..=1.0).contains(&step.reward) {
                return Err(ModelError::BadTrajectory(format!(
                    "reward {} outside [0,1] at step {}",
                    step.reward,
                    h + 1
                )));
            }
        }

        for (h, step) in tau.steps.iter().enumerate() {
            let next = if h + 1 < d.horizon { tau.steps[h + 1].state } else { tau.final_state };
            let cell = d.sa_index(h, step.state, step.action);
            self.n[cell] += 1;
            self.reward_sum[cell] += step.reward;
            let row = cell * d.states;
            self.next_counts[row + next] += 1;

            let n = self.n[cell] as f64;
            self.r_hat[cell] = self.reward_sum[cell] / n;
            for s_next in 0..d.states {
                self.p_hat[row + s_next] = self.next_counts[row + s_next] as f64 / n;
            }
        }
        Ok(())
    }

    /// Total visits per step; equals the number of folded trajectories.
    pub fn visits_at_step(&self, h: usize) -> u64 {
        let d = self.dims;
        (0..d.states)
            .flat_map(|s| (0..d.actions).map(move |a| (s, a)))
            .map(|(s, a)| self.n[d.sa_index(h, s, a)] as u64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_mdp(p: f64, r: f64) -> TabularMDP {
        let mut m = TabularMDP::zeroed(ModelDims::new(1, 1, 1), 0);
        m.set_p_row(0, 0, 0, &[p]);
        m.set_reward(0, 0, 0, r);
        m
    }

    #[test]
    fn validate_minimal_mdp_ok() {
        assert!(minimal_mdp(1.0, 0.5).validate().is_empty());
    }

    #[test]
    fn validate_flags_row_sum() {
        let violations = minimal_mdp(0.9, 0.5).validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].to_string().starts_with("row sum ≠ 1 at (1,0,0)"));
    }

    #[test]
    fn validate_flags_reward_range() {
        let violations = minimal_mdp(1.0, 1.5).validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].to_string().starts_with("reward out of [0,1] at (1,0,0)"));
    }

    #[test]
    fn json_round_trip() {
        let mut m = TabularMDP::zeroed(ModelDims::new(2, 2, 2), 1);
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    m.set_p_row(h, s, a, &[0.25, 0.75]);
                    m.set_reward(h, s, a, 0.5 * (a as f64));
                }
            }
        }
        let text = m.to_json();
        assert!(text.contains("\"S\":2") && text.contains("\"initial_state\":1"));
        assert_eq!(TabularMDP::from_json(&text).unwrap(), m);
    }

    fn traj(visits: &[(usize, usize, f64)], final_state: usize) -> Trajectory {
        Trajectory {
            steps: visits
                .iter()
                .map(|&(state, action, reward)| TrajectoryStep { state, action, reward })
                .collect(),
            final_state,
        }
    }

    #[test]
    fn empirical_single_sample() {
        let mut em = EmpiricalModel::new(ModelDims::new(2, 1, 1));
        em.update(&traj(&[(0, 0, 1.0)], 1)).unwrap();
        assert_eq!(em.count(0, 0, 0), 1);
        assert_eq!(em.r_hat(0, 0, 0), 1.0);
        assert_eq!(em.p_hat_row(0, 0, 0), &[0.0, 1.0]);
    }

    #[test]
    fn empirical_two_sample_mean() {
        let mut em = EmpiricalModel::new(ModelDims::new(2, 1, 1));
        em.update(&traj(&[(0, 0, 1.0)], 1)).unwrap();
        em.update(&traj(&[(0, 0, 0.0)], 0)).unwrap();
        assert_eq!(em.r_hat(0, 0, 0), 0.5);
        assert_eq!(em.p_hat_row(0, 0, 0), &[0.5, 0.5]);
    }

    #[test]
    fn empirical_rejects_out_of_range_atomically() {
        let mut em = EmpiricalModel::new(ModelDims::new(2, 1, 2));
        let before = em.clone();
        let bad = traj(&[(0, 0, 1.0), (5, 0, 0.0)], 1);
        assert!(em.update(&bad).is_err());
        assert_eq!(em, before);
    }

    #[test]
    fn empirical_rejects_bad_reward() {
        let mut em = EmpiricalModel::new(ModelDims::new(2, 1, 1));
        assert!(em.update(&traj(&[(0, 0, 1.5)], 1)).is_err());
    }

    #[test]
    fn zero_cells_stay_zero() {
        let em = EmpiricalModel::new(ModelDims::new(3, 2, 2));
        assert_eq!(em.r_hat(1, 2, 1), 0.0);
        assert!(em.p_hat_row(1, 2, 1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn robust_spec_serde_tagged() {
        let spec = RobustSpec::constrained(Divergence::Tv, 0.5);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"framework\":\"constrained\""));
        assert!(text.contains("\"divergence\":\"tv\""));
        let back: RobustSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}

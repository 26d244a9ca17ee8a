//! Benchmark environments and the simulator interface.
//!
//! Three builders: a six-state toy whose exploration hardness is controlled
//! by a branch probability (with its analytic worst-case model as metadata),
//! a five-state source/target pair with a tunable first-step perturbation,
//! and a slippery grid-world with an action-flip test perturbation.

mod frozen_lake;
mod gridmap;
mod simple_rmdp;
mod visit_ratio;

pub use frozen_lake::{build_frozen_lake, DEFAULT_LAKE_MAP};
pub use gridmap::{parse_map, Cell, GridMap, MapError};
pub use simple_rmdp::build_simple_rmdp;
pub use visit_ratio::{build_visit_ratio_env, VisitRatioMeta};

use crate::model::{ModelDims, TabularMDP};
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("parameter {name} = {value} outside {range}")]
    ParameterOutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("step index out of range: h={h} s={s} a={a}")]
    OutOfRange { h: usize, s: usize, a: usize },
    #[error("simulator fault: {0}")]
    Fault(String),
}

/// An environment the learner can interact with. Stateless apart from the
/// caller-provided RNG, so concurrent use just needs one RNG per thread.
pub trait Simulator: Sync {
    fn dims(&self) -> ModelDims;

    /// Initial state of an episode.
    fn reset(&self) -> usize;

    /// Samples (next state, observed reward) for taking `a` in `s` at step
    /// `h` (0-based).
    fn step(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(usize, f64), SimulatorError>;

    /// Exact tabular view, when the environment has one.
    fn model(&self) -> Option<&TabularMDP> {
        None
    }
}

/// Simulator backed by an explicit tabular model; rewards are the model's
/// (s,a) means.
#[derive(Debug, Clone)]
pub struct ModelSimulator {
    mdp: TabularMDP,
}

impl ModelSimulator {
    pub fn new(mdp: TabularMDP) -> Self {
        Self { mdp }
    }

    pub fn mdp(&self) -> &TabularMDP {
        &self.mdp
    }
}

impl Simulator for ModelSimulator {
    fn dims(&self) -> ModelDims {
        self.mdp.dims()
    }

    fn reset(&self) -> usize {
        self.mdp.initial_state
    }

    fn step(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(usize, f64), SimulatorError> {
        let d = self.mdp.dims();
        if h >= d.horizon || s >= d.states || a >= d.actions {
            return Err(SimulatorError::OutOfRange { h, s, a });
        }
        let row = self.mdp.p_row(h, s, a);
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        let mut next = None;
        for (i, &pi) in row.iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            acc += pi;
            next = Some(i);
            if u < acc {
                break;
            }
        }
        let next = next.ok_or_else(|| SimulatorError::Fault(format!("all-zero row at ({h},{s},{a})")))?;
        Ok((next, self.mdp.reward(h, s, a)))
    }

    fn model(&self) -> Option<&TabularMDP> {
        Some(&self.mdp)
    }
}

//! Five-state simulated RMDP pair: q = 0 is the source (training)
//! environment; q ∈ (0, 1] shifts first-step mass from the rewarding
//! absorbing state s4 to the dead absorbing state s3.
//!
//! Transitions (time-homogeneous, H = 3, A = 5):
//!
//! ```text
//! s0: s1 w.p. 0.4 + a/10,  s3 w.p. 0.1 + q(0.5 − a/10),  s4 w.p. (1−q)(0.5 − a/10)
//! s1: s2 w.p. a/10,        s3 w.p. 1 − a/10
//! s2: s3 w.p. 1 − a/10,    s4 w.p. a/10
//! s3, s4: absorbing
//! ```
//!
//! Rewards: a/20 at s0, s1, s2; 0 at s3; 1 at s4.

use super::{EnvError, ModelSimulator};
use crate::model::{ModelDims, TabularMDP};

const S: usize = 5;
const A: usize = 5;
const H: usize = 3;

/// Builds the model and simulator for perturbation rate `q ∈ [0, 1]`.
pub fn build_simple_rmdp(q: f64) -> Result<(TabularMDP, ModelSimulator), EnvError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(EnvError::ParameterOutOfRange { name: "q", value: q, range: "[0, 1]" });
    }
    let mut m = TabularMDP::zeroed(ModelDims::new(S, A, H), 0);
    for h in 0..H {
        for a in 0..A {
            let frac = a as f64 / 10.0;

            let mut from_s0 = [0.0; S];
            from_s0[1] = 0.4 + frac;
            from_s0[3] = 0.1 + q * (0.5 - frac);
            from_s0[4] = (1.0 - q) * (0.5 - frac);
            m.set_p_row(h, 0, a, &from_s0);

            let mut from_s1 = [0.0; S];
            from_s1[2] = frac;
            from_s1[3] = 1.0 - frac;
            m.set_p_row(h, 1, a, &from_s1);

            let mut from_s2 = [0.0; S];
            from_s2[3] = 1.0 - frac;
            from_s2[4] = frac;
            m.set_p_row(h, 2, a, &from_s2);

            let mut from_s3 = [0.0; S];
            from_s3[3] = 1.0;
            m.set_p_row(h, 3, a, &from_s3);

            let mut from_s4 = [0.0; S];
            from_s4[4] = 1.0;
            m.set_p_row(h, 4, a, &from_s4);

            for s in 0..3 {
                m.set_reward(h, s, a, a as f64 / 20.0);
            }
            m.set_reward(h, 4, a, 1.0);
        }
    }
    let sim = ModelSimulator::new(m.clone());
    Ok((m, sim))
}

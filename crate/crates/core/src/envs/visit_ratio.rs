//! Six-state toy environment whose exploration hardness is controlled by the
//! stage-1 branch probability β ∈ (0, 2/3).
//!
//! Layout (H = 3, A = 10, rewards collected on arrival-step occupancy):
//!
//! ```text
//! s0 --β--> s1 --(5/6 − ã/3)--> s3   r(s3,·) = 1
//!    \           \-(1/6 + ã/3)-> s4   r(s4,·) = 0
//!     \-(1−β)-> s2 ----1------> s5   r(s5,·) = 1/2
//! ```
//!
//! where ã = 0 for action 0 and ã = 1 for actions 1..9 (the extra actions
//! only harden exploration). The metadata carries the analytic worst-case
//! model for the canonical TV ball of radius 1/3 — the fixed target kernel
//! that shifts 1/3 probability toward the low-value branch — together with
//! the closed-form supremal visitation ratio 3 + 1/β it induces.

use super::{EnvError, ModelSimulator};
use crate::model::{Divergence, ModelDims, RobustSpec, TabularMDP};

/// Analytic companions of the environment.
#[derive(Debug, Clone)]
pub struct VisitRatioMeta {
    /// Supremal visitation ratio 3 + 1/β under the analytic worst case.
    pub c_vr: f64,
    /// The worst-case target model (same rewards, shifted transitions).
    pub worst_model: TabularMDP,
    /// The robust setting the worst-case model corresponds to.
    pub spec: RobustSpec,
}

const S: usize = 6;
const A: usize = 10;
const H: usize = 3;

fn skeleton() -> TabularMDP {
    let mut m = TabularMDP::zeroed(ModelDims::new(S, A, H), 0);
    // default: every row self-loops; builders overwrite the live rows
    for h in 0..H {
        for s in 0..S {
            for a in 0..A {
                let mut row = [0.0; S];
                row[s] = 1.0;
                m.set_p_row(h, s, a, &row);
            }
        }
    }
    for a in 0..A {
        m.set_reward(2, 3, a, 1.0);
        m.set_reward(2, 5, a, 0.5);
    }
    m
}

fn fill_stages(m: &mut TabularMDP, p_s1: f64, p_s3_a0: f64, p_s3_rest: f64) {
    for a in 0..A {
        let mut stage1 = [0.0; S];
        stage1[1] = p_s1;
        stage1[2] = 1.0 - p_s1;
        m.set_p_row(0, 0, a, &stage1);

        let p3 = if a == 0 { p_s3_a0 } else { p_s3_rest };
        let mut from_s1 = [0.0; S];
        from_s1[3] = p3;
        from_s1[4] = 1.0 - p3;
        m.set_p_row(1, 1, a, &from_s1);

        let mut from_s2 = [0.0; S];
        from_s2[5] = 1.0;
        m.set_p_row(1, 2, a, &from_s2);
    }
}

/// Builds the nominal model, its simulator, and the analytic metadata.
pub fn build_visit_ratio_env(
    beta_env: f64,
) -> Result<(TabularMDP, ModelSimulator, VisitRatioMeta), EnvError> {
    if !(beta_env > 0.0 && beta_env < 2.0 / 3.0) {
        return Err(EnvError::ParameterOutOfRange {
            name: "beta_env",
            value: beta_env,
            range: "(0, 2/3)",
        });
    }

    let mut nominal = skeleton();
    fill_stages(&mut nominal, beta_env, 5.0 / 6.0, 0.5);

    let mut worst = skeleton();
    fill_stages(&mut worst, beta_env + 1.0 / 3.0, 0.5, 1.0 / 6.0);

    let meta = VisitRatioMeta {
        c_vr: 3.0 + 1.0 / beta_env,
        worst_model: worst,
        spec: RobustSpec::constrained(Divergence::Tv, 1.0 / 3.0),
    };
    let sim = ModelSimulator::new(nominal.clone());
    Ok((nominal, sim, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_validate() {
        let (nominal, _, meta) = build_visit_ratio_env(0.25).unwrap();
        assert!(nominal.validate().is_empty());
        assert!(meta.worst_model.validate().is_empty());
    }

    #[test]
    fn c_vr_formula() {
        let (_, _, meta) = build_visit_ratio_env(0.25).unwrap();
        assert_eq!(meta.c_vr, 7.0);
    }

    #[test]
    fn beta_range_enforced() {
        assert!(build_visit_ratio_env(0.0).is_err());
        assert!(build_visit_ratio_env(2.0 / 3.0).is_err());
        assert!(build_visit_ratio_env(-0.1).is_err());
    }

    #[test]
    fn stage_rows_match_construction() {
        let beta = 0.2;
        let (nominal, _, meta) = build_visit_ratio_env(beta).unwrap();
        assert_eq!(nominal.p_row(0, 0, 4)[1], beta);
        assert_eq!(nominal.p_row(1, 1, 0)[3], 5.0 / 6.0);
        assert_eq!(nominal.p_row(1, 1, 7)[3], 0.5);
        assert_eq!(nominal.p_row(1, 2, 3)[5], 1.0);
        // worst case shifts 1/3 toward the low branch
        assert!((meta.worst_model.p_row(0, 0, 0)[1] - (beta + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(meta.worst_model.p_row(1, 1, 0)[3], 0.5);
        assert_eq!(meta.worst_model.p_row(1, 1, 9)[3], 1.0 / 6.0);
    }
}

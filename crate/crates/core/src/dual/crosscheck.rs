//! Randomized dual-vs-oracle cross-check shared by the test suite and the
//! `duals-check` command. The solver under test is injectable so a broken
//! solver can be used as a negative control.

use super::oracle::primal_oracle;
use super::{BackupInput, DualError};
use crate::model::{Divergence, RobustSpec};
use crate::seeding::replication_seed;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

pub type SolverFn = dyn Fn(&BackupInput, &RobustSpec) -> Result<f64, DualError> + Sync;

#[derive(Debug, Clone)]
pub struct SettingGap {
    pub label: String,
    pub worst_gap: f64,
    pub violations: usize,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct CrosscheckReport {
    pub samples_per_setting: usize,
    pub tolerance: f64,
    pub per_setting: Vec<SettingGap>,
}

impl CrosscheckReport {
    pub fn ok(&self) -> bool {
        self.per_setting.iter().all(|g| g.violations == 0)
    }

    pub fn total_violations(&self) -> usize {
        self.per_setting.iter().map(|g| g.violations).sum()
    }
}

const CONSTRAINED_LEVELS: [f64; 3] = [0.1, 0.3, 1.0];
const REGULARIZED_LEVELS: [f64; 3] = [0.1, 0.5, 2.0];

fn all_settings(sample: usize) -> Vec<RobustSpec> {
    let rho = CONSTRAINED_LEVELS[sample % CONSTRAINED_LEVELS.len()];
    let beta = REGULARIZED_LEVELS[sample % REGULARIZED_LEVELS.len()];
    vec![
        RobustSpec::constrained(Divergence::Tv, rho),
        RobustSpec::constrained(Divergence::Kl, rho),
        RobustSpec::constrained(Divergence::Chi2, rho),
        RobustSpec::regularized(Divergence::Tv, beta),
        RobustSpec::regularized(Divergence::Kl, beta),
        RobustSpec::regularized(Divergence::Chi2, beta),
    ]
}

/// A random instance with S ∈ {2..5}, well-conditioned p, v ∈ [0,3]^S.
pub fn random_instance(seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let s = rng.random_range(2..=5usize);
    let mut p: Vec<f64> = (0..s).map(|_| 0.05 + rng.random::<f64>()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    let v: Vec<f64> = (0..s).map(|_| rng.random::<f64>() * 3.0).collect();
    (p, v, 3.0)
}

/// Runs `samples` random instances through all six settings, comparing the
/// given solver against the simplex-grid oracle at the given resolution.
pub fn run_crosscheck(
    samples: usize,
    seed: u64,
    resolution: f64,
    tolerance: f64,
    solver: &SolverFn,
) -> Result<CrosscheckReport, DualError> {
    let labels: Vec<String> = all_settings(0).iter().map(|s| s.label()).collect();
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let (p, v, vmax) = random_instance(replication_seed(seed, i as u64));
            let input = BackupInput::new(&p, &v, vmax);
            all_settings(i)
                .iter()
                .map(|spec| {
                    let got = solver(&input, spec).unwrap_or(f64::NAN);
                    let want = primal_oracle(&input, spec, resolution).expect("oracle total");
                    let gap = (got - want).abs();
                    if gap.is_nan() {
                        f64::INFINITY
                    } else {
                        gap
                    }
                })
                .collect()
        })
        .collect();

    let per_setting = labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let mut worst = 0.0f64;
            let mut violations = 0;
            for gaps in &per_sample {
                worst = worst.max(gaps[j]);
                if gaps[j] > tolerance {
                    violations += 1;
                }
            }
            SettingGap { label: label.clone(), worst_gap: worst, violations, samples }
        })
        .collect();

    Ok(CrosscheckReport { samples_per_setting: samples, tolerance, per_setting })
}

/// The production solver binding used by the CLI and the acceptance suite.
pub fn default_solver(input: &BackupInput, spec: &RobustSpec) -> Result<f64, DualError> {
    super::robust_backup_value(input, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_crosscheck_passes() {
        let report = run_crosscheck(20, 11, 1e-3, 2e-3, &default_solver).unwrap();
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn broken_solver_is_caught() {
        let broken = |input: &BackupInput, spec: &RobustSpec| {
            default_solver(input, spec).map(|v| v + 0.05)
        };
        let report = run_crosscheck(10, 11, 1e-3, 2e-3, &broken).unwrap();
        assert!(!report.ok());
        assert!(report.total_violations() > 0);
    }

    #[test]
    fn zero_samples_is_vacuous_pass() {
        let report = run_crosscheck(0, 1, 1e-2, 2e-3, &default_solver).unwrap();
        assert!(report.ok());
        assert_eq!(report.samples_per_setting, 0);
    }
}

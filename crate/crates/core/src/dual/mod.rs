//! Robust Bellman backup solvers.
//!
//! Each solver receives a nominal next-state distribution `p`, a value vector
//! `v` and a robust level (ball radius ρ or penalty weight β) and computes
//!
//! ```text
//! constrained:  inf { E_P'[v] : D(P' ‖ p) ≤ ρ }
//! regularized:  inf { E_P'[v] + β·D(P' ‖ p) : P' ∈ Δ(S) }
//! ```
//!
//! via the 1-D dual reductions: a piecewise-linear breakpoint scan (TV ball),
//! a sort-and-two-pointer greedy (fast TV ball), a bracketed search over the
//! soft-min temperature (KL ball), a clip-level search (χ²), and closed forms
//! for the regularized TV/KL cases. On request the achieving worst-case
//! distribution is returned alongside the value.
//!
//! All solvers are pure functions; a brute-force simplex-grid oracle for
//! cross-checking lives in [`oracle`].

pub mod crosscheck;
pub mod oracle;

use crate::model::{Divergence, RobustSpec};
use thiserror::Error;

/// Absolute tolerance on 1-D dual-variable searches.
const SEARCH_TOL: f64 = 1e-9;
/// Iteration cap for 1-D searches; hitting it sets a diagnostics flag.
const SEARCH_MAX_ITER: usize = 200;
/// Grid size for the χ² clip-level scan preceding local refinement.
const CHI2_GRID: usize = 1024;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("invalid radius rho = {0}; must be > 0")]
    InvalidRadius(f64),
    #[error("invalid regularizer beta = {0}; must be > 0")]
    InvalidBeta(f64),
    #[error("invalid backup input: {0}")]
    BadInput(String),
    #[error("oracle refuses S = {0} states (max {1})")]
    StateSpaceTooLarge(usize, usize),
}

/// A nominal row, the next-step value vector, and an upper bound on the
/// values (H or H−h+1) that fixes the dual-variable ranges.
#[derive(Debug, Clone, Copy)]
pub struct BackupInput<'a> {
    pub p: &'a [f64],
    pub v: &'a [f64],
    pub vmax: f64,
}

impl<'a> BackupInput<'a> {
    pub fn new(p: &'a [f64], v: &'a [f64], vmax: f64) -> Self {
        Self { p, v, vmax }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        if self.p.is_empty() || self.p.len() != self.v.len() {
            return Err(DualError::BadInput(format!(
                "p and v must be non-empty and equal length (got {} and {})",
                self.p.len(),
                self.v.len()
            )));
        }
        let mut sum = 0.0;
        for &x in self.p {
            if x < 0.0 {
                return Err(DualError::BadInput(format!("negative probability {x}")));
            }
            sum += x;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DualError::BadInput(format!("p sums to {sum}, not 1")));
        }
        if !self.vmax.is_finite() || self.vmax < 0.0 {
            return Err(DualError::BadInput(format!("vmax = {} invalid", self.vmax)));
        }
        for &x in self.v {
            if !(-1e-9..=self.vmax + 1e-9).contains(&x) {
                return Err(DualError::BadInput(format!(
                    "value {x} outside [0, vmax={}]",
                    self.vmax
                )));
            }
        }
        Ok(())
    }
}

/// Result of a robust backup: the robust expectation (reward NOT included),
/// optionally the achieving distribution and the 1-D dual variable
/// (η for TV, ν for KL, clip level α for χ²).
#[derive(Debug, Clone, PartialEq)]
pub struct BackupOutput {
    pub value: f64,
    pub worst_dist: Option<Vec<f64>>,
    pub dual_var: Option<f64>,
    /// A 1-D search stopped on its iteration cap rather than its tolerance.
    pub capped_iterations: bool,
}

impl BackupOutput {
    fn exact(value: f64, worst_dist: Option<Vec<f64>>, dual_var: Option<f64>) -> Self {
        Self { value, worst_dist, dual_var, capped_iterations: false }
    }
}

struct GoldenResult {
    x: f64,
    fx: f64,
    capped: bool,
}

/// Golden-section minimization of a unimodal `f` over `[lo, hi]`.
fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64, max_iter: usize) -> GoldenResult {
    debug_assert!(lo <= hi);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while (b - a) > tol && iters < max_iter {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iters += 1;
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    GoldenResult { x, fx, capped: iters >= max_iter }
}

/// Indices of `v` sorted ascending by value, stable (ties keep index order).
fn argsort(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).expect("finite values"));
    order
}

fn min_value(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Constrained TV
// ---------------------------------------------------------------------------

/// TV-ball backup via exact minimization of the convex piecewise-linear dual
/// g(η) = E_p[(η−v)₊] + ρ(η−min v)₊ − η over its breakpoints {v[s]}.
pub fn tv_constrained(input: &BackupInput, rho: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if rho <= 0.0 {
        return Err(DualError::InvalidRadius(rho));
    }
    let order = argsort(input.v);
    let m = input.v[order[0]];

    // Sweep breakpoints in ascending order with prefix sums:
    // g(b) = b·P(v≤b) − Σ_{v≤b} p·v + ρ(b−m) − b.
    let mut best_eta = m;
    let mut best_g = f64::INFINITY;
    let mut mass = 0.0;
    let mut mass_value = 0.0;
    let mut k = 0;
    while k < order.len() {
        let b = input.v[order[k]];
        // absorb every state with value ≤ b (ties share a breakpoint)
        while k < order.len() && input.v[order[k]] <= b {
            mass += input.p[order[k]];
            mass_value += input.p[order[k]] * input.v[order[k]];
            k += 1;
        }
        let g = b * mass - mass_value + rho * (b - m) - b;
        if g < best_g - 0.0 {
            best_g = g;
            best_eta = b;
        }
    }
    let value = -best_g;
    let worst = if with_dist { Some(tv_greedy_shift(input.p, input.v, rho).1) } else { None };
    Ok(BackupOutput::exact(value, worst, Some(best_eta)))
}

/// Sort-then-two-pointer greedy: add up to ρ mass to the lowest-value states
/// (clamped to 1 per state), remove the same amount from the highest-value
/// states. Returns (value, distribution). Tied values resolve to the lowest
/// state index on the add side.
fn tv_greedy_shift(p: &[f64], v: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let mut q = p.to_vec();
    if p.len() == 1 {
        return (v[0], q);
    }
    let order = argsort(v);
    let budget = rho.min(1.0);
    let mut added = 0.0;
    for &i in &order {
        if budget - added <= 1e-15 {
            break;
        }
        let take = (budget - added).min(1.0 - q[i]);
        q[i] += take;
        added += take;
    }
    let mut removed = 0.0;
    for &i in order.iter().rev() {
        if added - removed <= 1e-15 {
            break;
        }
        let take = (added - removed).min(q[i]);
        q[i] -= take;
        removed += take;
    }
    let value = q.iter().zip(v).map(|(&qi, &vi)| qi * vi).sum();
    (value, q)
}

/// The greedy TV solver (the efficient path used inside training loops).
/// Must agree with [`tv_constrained`] to 1e-9 on every input; S = 1 is the
/// documented degenerate shortcut (value v[0], distribution p).
pub fn tv_constrained_fast(input: &BackupInput, rho: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if rho <= 0.0 {
        return Err(DualError::InvalidRadius(rho));
    }
    let (value, q) = tv_greedy_shift(input.p, input.v, rho);
    Ok(BackupOutput::exact(value, with_dist.then_some(q), None))
}

// ---------------------------------------------------------------------------
// Constrained KL
// ---------------------------------------------------------------------------

/// Essential infimum of v over the support of p.
fn support_min(p: &[f64], v: &[f64]) -> f64 {
    p.iter()
        .zip(v)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(_, &vi)| vi)
        .fold(f64::INFINITY, f64::min)
}

/// Stable evaluation of ν·ln E_p[e^{−v/ν}] (shifted by the support minimum).
fn kl_soft_min(p: &[f64], v: &[f64], m: f64, nu: f64) -> f64 {
    let mut acc = 0.0;
    for (&pi, &vi) in p.iter().zip(v) {
        if pi > 0.0 {
            acc += pi * (-(vi - m) / nu).exp();
        }
    }
    -m + nu * acc.ln()
}

/// KL-ball backup: value = −inf over ν ∈ [0, vmax/ρ] of
/// ν·ln E_p[e^{−v/ν}] + νρ, with the ν→0 limit handled analytically as the
/// essential infimum of v. Worst case ∝ p·e^{−v/ν*}.
pub fn kl_constrained(input: &BackupInput, rho: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if rho <= 0.0 {
        return Err(DualError::InvalidRadius(rho));
    }
    let m = support_min(input.p, input.v);
    let at_zero = -m; // lim_{ν→0⁺} of the dual objective
    let hi = input.vmax / rho;
    let lo = 1e-12;
    let mut capped = false;
    let (mut best_nu, mut best_f) = (0.0, at_zero);
    if hi > lo {
        let res = golden_min(
            |nu| kl_soft_min(input.p, input.v, m, nu) + nu * rho,
            lo,
            hi,
            SEARCH_TOL,
            SEARCH_MAX_ITER,
        );
        capped = res.capped;
        if res.fx < best_f {
            best_nu = res.x;
            best_f = res.fx;
        }
    }
    let value = -best_f;
    let worst = with_dist.then(|| {
        let mut q: Vec<f64>;
        if best_nu > 0.0 {
            q = input
                .p
                .iter()
                .zip(input.v)
                .map(|(&pi, &vi)| if pi > 0.0 { pi * (-(vi - m) / best_nu).exp() } else { 0.0 })
                .collect();
        } else {
            // ν* = 0: mass proportional to p on the argmin support.
            q = input
                .p
                .iter()
                .zip(input.v)
                .map(|(&pi, &vi)| if pi > 0.0 && vi - m <= 1e-12 { pi } else { 0.0 })
                .collect();
        }
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        q
    });
    Ok(BackupOutput { value, worst_dist: worst, dual_var: Some(best_nu), capped_iterations: capped })
}

// ---------------------------------------------------------------------------
// χ² (constrained and regularized share the clip-level machinery)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Chi2Penalty {
    /// Constrained: E[w] − √(ρ·Var(w)).
    Ball { rho: f64 },
    /// Regularized: E[w] − Var(w)/(4β).
    Weight { beta: f64 },
}

struct ClipStats {
    mean: f64,
    var: f64,
}

/// Moments of w = min(v, α) under p.
fn clip_stats(p: &[f64], v: &[f64], alpha: f64) -> ClipStats {
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for (&pi, &vi) in p.iter().zip(v) {
        let w = vi.min(alpha);
        e1 += pi * w;
        e2 += pi * w * w;
    }
    ClipStats { mean: e1, var: (e2 - e1 * e1).max(0.0) }
}

fn chi2_objective(stats: &ClipStats, penalty: Chi2Penalty) -> f64 {
    match penalty {
        Chi2Penalty::Ball { rho } => stats.mean - (rho * stats.var).sqrt(),
        Chi2Penalty::Weight { beta } => stats.mean - stats.var / (4.0 * beta),
    }
}

/// The clip-level reduction of the per-state multiplier λ(s) = (v[s]−α)₊:
/// maximize E_p[min(v,α)] minus the variance penalty over α ∈ [min v, max v],
/// via a dense grid scan followed by golden-section refinement around the
/// best grid cell (unimodality is not assumed).
fn chi2_backup(input: &BackupInput, penalty: Chi2Penalty, with_dist: bool) -> BackupOutput {
    let lo = min_value(input.v);
    let hi = input.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if hi - lo < 1e-15 {
        // constant values: Var = 0 at every clip level
        return BackupOutput::exact(lo, with_dist.then(|| input.p.to_vec()), Some(hi));
    }

    // Grid pass with prefix sums along the sorted values: for α between
    // consecutive sorted entries, E[wⁱ] = prefix + αⁱ·(remaining mass).
    let order = argsort(input.v);
    let step = (hi - lo) / (CHI2_GRID - 1) as f64;
    let mut best_alpha = hi;
    let mut best_obj = f64::NEG_INFINITY;
    let mut mass = 0.0;
    let mut pv = 0.0;
    let mut pv2 = 0.0;
    let mut k = 0;
    for i in 0..CHI2_GRID {
        let alpha = if i + 1 == CHI2_GRID { hi } else { lo + step * i as f64 };
        while k < order.len() && input.v[order[k]] <= alpha {
            let (pi, vi) = (input.p[order[k]], input.v[order[k]]);
            mass += pi;
            pv += pi * vi;
            pv2 += pi * vi * vi;
            k += 1;
        }
        let e1 = pv + alpha * (1.0 - mass);
        let e2 = pv2 + alpha * alpha * (1.0 - mass);
        let stats = ClipStats { mean: e1, var: (e2 - e1 * e1).max(0.0) };
        let obj = chi2_objective(&stats, penalty);
        if obj > best_obj {
            best_obj = obj;
            best_alpha = alpha;
        }
    }

    // Local refinement in the bracket around the winning grid cell.
    let bracket_lo = (best_alpha - step).max(lo);
    let bracket_hi = (best_alpha + step).min(hi);
    let refined = golden_min(
        |alpha| -chi2_objective(&clip_stats(input.p, input.v, alpha), penalty),
        bracket_lo,
        bracket_hi,
        SEARCH_TOL,
        SEARCH_MAX_ITER,
    );
    let mut alpha_star = best_alpha;
    let mut value = best_obj;
    if -refined.fx > best_obj {
        alpha_star = refined.x;
        value = -refined.fx;
    }

    let worst = with_dist.then(|| {
        let stats = clip_stats(input.p, input.v, alpha_star);
        if stats.var < 1e-18 {
            // Degenerate: concentrate p-proportionally on the clipped set.
            let mut q: Vec<f64> = input
                .p
                .iter()
                .zip(input.v)
                .map(|(&pi, &vi)| if pi > 0.0 && vi <= alpha_star + 1e-9 { pi } else { 0.0 })
                .collect();
            let z: f64 = q.iter().sum();
            q.iter_mut().for_each(|x| *x /= z);
            return q;
        }
        let denom = match penalty {
            Chi2Penalty::Ball { rho } => (stats.var / rho).sqrt(),
            Chi2Penalty::Weight { beta } => 2.0 * beta,
        };
        // P'(s) = p(s)·(1 − (w(s) − E[w])/denom); at the optimal clip level
        // the parenthesis is ≥ 0 up to rounding, so clamping is cosmetic.
        let mut q: Vec<f64> = input
            .p
            .iter()
            .zip(input.v)
            .map(|(&pi, &vi)| (pi * (1.0 - (vi.min(alpha_star) - stats.mean) / denom)).max(0.0))
            .collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        q
    });
    BackupOutput {
        value,
        worst_dist: worst,
        dual_var: Some(alpha_star),
        capped_iterations: refined.capped,
    }
}

/// χ²-ball backup: value = sup over clip levels of E_p[min(v,α)] − √(ρ·Var).
pub fn chi2_constrained(input: &BackupInput, rho: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if rho <= 0.0 {
        return Err(DualError::InvalidRadius(rho));
    }
    Ok(chi2_backup(input, Chi2Penalty::Ball { rho }, with_dist))
}

/// χ²-penalty backup: value = sup over clip levels of E_p[min(v,α)] − Var/(4β).
pub fn chi2_regularized(input: &BackupInput, beta: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if beta <= 0.0 {
        return Err(DualError::InvalidBeta(beta));
    }
    Ok(chi2_backup(input, Chi2Penalty::Weight { beta }, with_dist))
}

// ---------------------------------------------------------------------------
// Regularized TV / KL (closed forms)
// ---------------------------------------------------------------------------

/// TV-penalty backup, closed form:
/// value = (min v + β) − E_p[(min v + β − v)₊].
/// Worst case moves the mass of states with v > min v + β onto the
/// lowest-index argmin state.
pub fn tv_regularized(input: &BackupInput, beta: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if beta <= 0.0 {
        return Err(DualError::InvalidBeta(beta));
    }
    let m = min_value(input.v);
    let threshold = m + beta;
    let shortfall: f64 = input
        .p
        .iter()
        .zip(input.v)
        .map(|(&pi, &vi)| pi * (threshold - vi).max(0.0))
        .sum();
    let value = threshold - shortfall;
    let worst = with_dist.then(|| {
        let dest = input.v.iter().position(|&x| x <= m).expect("min exists");
        let mut q = input.p.to_vec();
        let mut moved = 0.0;
        for (i, &vi) in input.v.iter().enumerate() {
            if vi > threshold {
                moved += q[i];
                q[i] = 0.0;
            }
        }
        q[dest] += moved;
        q
    });
    Ok(BackupOutput::exact(value, worst, None))
}

/// KL-penalty backup, closed form: value = −β·ln E_p[e^{−v/β}].
/// Worst case ∝ p·e^{−v/β}.
pub fn kl_regularized(input: &BackupInput, beta: f64, with_dist: bool) -> Result<BackupOutput, DualError> {
    input.validate()?;
    if beta <= 0.0 {
        return Err(DualError::InvalidBeta(beta));
    }
    let m = support_min(input.p, input.v);
    let value = -kl_soft_min(input.p, input.v, m, beta);
    let worst = with_dist.then(|| {
        let mut q: Vec<f64> = input
            .p
            .iter()
            .zip(input.v)
            .map(|(&pi, &vi)| if pi > 0.0 { pi * (-(vi - m) / beta).exp() } else { 0.0 })
            .collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        q
    });
    Ok(BackupOutput::exact(value, worst, None))
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

/// Robust expectation for any of the six settings. The constrained-TV route
/// uses the greedy solver (identical to the breakpoint dual to 1e-9).
pub fn robust_backup(
    input: &BackupInput,
    spec: &RobustSpec,
    with_dist: bool,
) -> Result<BackupOutput, DualError> {
    match *spec {
        RobustSpec::Constrained { divergence, rho } => match divergence {
            Divergence::Tv => tv_constrained_fast(input, rho, with_dist),
            Divergence::Kl => kl_constrained(input, rho, with_dist),
            Divergence::Chi2 => chi2_constrained(input, rho, with_dist),
        },
        RobustSpec::Regularized { divergence, beta } => match divergence {
            Divergence::Tv => tv_regularized(input, beta, with_dist),
            Divergence::Kl => kl_regularized(input, beta, with_dist),
            Divergence::Chi2 => chi2_regularized(input, beta, with_dist),
        },
    }
}

/// Value-only convenience for hot loops.
pub fn robust_backup_value(input: &BackupInput, spec: &RobustSpec) -> Result<f64, DualError> {
    robust_backup(input, spec, false).map(|out| out.value)
}

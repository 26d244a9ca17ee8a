//! Brute-force primal oracle: minimize E_q[v] over a simplex grid, subject to
//! the divergence-ball constraint (constrained settings) or plus the weighted
//! divergence penalty (regularized settings).
//!
//! Deliberately independent of the dual solvers — divergences and objectives
//! are computed directly. S = 2 enumerates the full grid at the requested
//! step; S ≥ 3 runs a coarse global pass followed by coarse-to-fine boxes
//! around the best candidates (the objective is linear plus a convex term, so
//! local refinement converges). The nominal row itself is always a candidate,
//! which makes ρ = 0 return E_p[v] exactly.

use super::{BackupInput, DualError};
use crate::divergence;
use crate::model::RobustSpec;

/// The oracle refuses larger state spaces; enumeration cost explodes.
pub const MAX_ORACLE_STATES: usize = 6;

/// Number of best coarse candidates whose neighborhoods are refined.
const REFINE_CANDIDATES: usize = 3;
/// Box half-width, in grid counts, around each candidate per level. Grid
/// scale at most doubles between levels, so the incumbent's cell maps to a
/// ±2-count region; the extra margin absorbs curvature of the ball boundary.
const BOX_HALF_WIDTH: u64 = 6;

/// Objective value of a single candidate distribution, or `None` if it is
/// infeasible for the constrained setting.
fn objective(q: &[f64], input: &BackupInput, spec: &RobustSpec) -> Option<f64> {
    let expect: f64 = q.iter().zip(input.v).map(|(&qi, &vi)| qi * vi).sum();
    match *spec {
        RobustSpec::Constrained { divergence: kind, rho } => {
            let d = divergence::by_kind(kind, q, input.p);
            (d <= rho + 1e-12).then_some(expect)
        }
        RobustSpec::Regularized { divergence: kind, beta } => {
            let d = divergence::by_kind(kind, q, input.p);
            d.is_finite().then(|| expect + beta * d)
        }
    }
}

/// Enumerates integer compositions of `total` into `lo.len()` parts with
/// per-coordinate bounds, calling `visit` for each.
fn enumerate_box(total: u64, lo: &[u64], hi: &[u64], visit: &mut impl FnMut(&[u64])) {
    let n = lo.len();
    let mut suffix_lo = vec![0u64; n + 1];
    let mut suffix_hi = vec![0u64; n + 1];
    for i in (0..n).rev() {
        suffix_lo[i] = suffix_lo[i + 1] + lo[i];
        suffix_hi[i] = suffix_hi[i + 1] + hi[i];
    }
    let mut counts = vec![0u64; n];
    fn rec(
        i: usize,
        remaining: u64,
        lo: &[u64],
        hi: &[u64],
        suffix_lo: &[u64],
        suffix_hi: &[u64],
        counts: &mut Vec<u64>,
        visit: &mut impl FnMut(&[u64]),
    ) {
        let n = lo.len();
        if i == n - 1 {
            if remaining >= lo[i] && remaining <= hi[i] {
                counts[i] = remaining;
                visit(counts);
            }
            return;
        }
        let min_k = lo[i].max(remaining.saturating_sub(suffix_hi[i + 1]));
        let max_k = hi[i].min(remaining.saturating_sub(suffix_lo[i + 1]));
        let mut k = min_k;
        while k <= max_k {
            counts[i] = k;
            rec(i + 1, remaining - k, lo, hi, suffix_lo, suffix_hi, counts, visit);
            k += 1;
        }
    }
    if suffix_lo[0] <= total && total <= suffix_hi[0] {
        rec(0, total, lo, hi, &suffix_lo, &suffix_hi, &mut counts, visit);
    }
}

struct Best {
    /// Up to REFINE_CANDIDATES best distinct grid points (counts), ascending
    /// by objective.
    entries: Vec<(f64, Vec<u64>)>,
}

impl Best {
    fn new() -> Self {
        Self { entries: Vec::new() }
    }

    fn offer(&mut self, value: f64, counts: &[u64]) {
        if self.entries.iter().any(|(_, c)| c == counts) {
            return;
        }
        self.entries.push((value, counts.to_vec()));
        self.entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite objective"));
        self.entries.truncate(REFINE_CANDIDATES);
    }

    fn value(&self) -> Option<f64> {
        self.entries.first().map(|(v, _)| *v)
    }
}

fn scan_level(input: &BackupInput, spec: &RobustSpec, m: u64, boxes: &[(Vec<u64>, Vec<u64>)]) -> Best {
    let s = input.p.len();
    let mut best = Best::new();
    let mut q = vec![0.0; s];
    for (lo, hi) in boxes {
        enumerate_box(m, lo, hi, &mut |counts| {
            for (qi, &ki) in q.iter_mut().zip(counts) {
                *qi = ki as f64 / m as f64;
            }
            if let Some(value) = objective(&q, input, spec) {
                best.offer(value, counts);
            }
        });
    }
    best
}

/// Brute-force minimization of the primal objective on a simplex grid with
/// the given final step (e.g. 1e-3). Deterministic; intended for tests and
/// the `duals-check` command.
pub fn primal_oracle(input: &BackupInput, spec: &RobustSpec, resolution: f64) -> Result<f64, DualError> {
    input.validate()?;
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(DualError::BadInput(format!("oracle resolution {resolution} out of (0, 0.5]")));
    }
    let s = input.p.len();
    if s > MAX_ORACLE_STATES {
        return Err(DualError::StateSpaceTooLarge(s, MAX_ORACLE_STATES));
    }
    if let RobustSpec::Constrained { rho, .. } = spec {
        if *rho < 0.0 {
            return Err(DualError::InvalidRadius(*rho));
        }
    }
    if let RobustSpec::Regularized { beta, .. } = spec {
        if *beta <= 0.0 {
            return Err(DualError::InvalidBeta(*beta));
        }
    }

    // The nominal row is always feasible (divergence 0), so the oracle is
    // total even when no grid point lands inside a tiny ball.
    let mut best_value = objective(input.p, input, spec).expect("nominal row feasible");

    if s == 1 {
        return Ok(best_value);
    }

    let m_final = (1.0 / resolution).round().max(2.0) as u64;
    if s == 2 {
        let full = vec![(vec![0, 0], vec![m_final, m_final])];
        if let Some(v) = scan_level(input, spec, m_final, &full).value() {
            best_value = best_value.min(v);
        }
        return Ok(best_value);
    }

    let m_coarse = match s {
        3 => 100,
        4 => 48,
        5 => 28,
        _ => 14,
    }
    .min(m_final);

    let mut m = m_coarse;
    let full = vec![(vec![0; s], vec![m; s])];
    let mut best = scan_level(input, spec, m, &full);
    if let Some(v) = best.value() {
        best_value = best_value.min(v);
    }

    while m < m_final {
        let m_new = (m * 2).min(m_final);
        let boxes: Vec<(Vec<u64>, Vec<u64>)> = best
            .entries
            .iter()
            .map(|(_, counts)| {
                let lo: Vec<u64> = counts
                    .iter()
                    .map(|&k| {
                        let center = (k as f64 * m_new as f64 / m as f64).round() as u64;
                        center.saturating_sub(BOX_HALF_WIDTH)
                    })
                    .collect();
                let hi: Vec<u64> = counts
                    .iter()
                    .map(|&k| {
                        let center = (k as f64 * m_new as f64 / m as f64).round() as u64;
                        (center + BOX_HALF_WIDTH).min(m_new)
                    })
                    .collect();
                (lo, hi)
            })
            .collect();
        let level = scan_level(input, spec, m_new, &boxes);
        for (value, counts) in &level.entries {
            best.offer(*value, counts);
        }
        // Re-anchor candidates on the new grid scale: keep level results if
        // they exist, otherwise carry the incumbent forward unchanged.
        if level.value().is_some() {
            best = level;
        }
        if let Some(v) = best.value() {
            best_value = best_value.min(v);
        }
        m = m_new;
    }
    Ok(best_value)
}

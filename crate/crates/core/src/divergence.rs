//! f-divergences between discrete distributions on the same support.
//!
//! Used by the simplex-grid oracle, the evaluator's penalty terms, and the
//! feasibility checks in tests. The dual solvers never call these.

/// Total variation distance: (1/2) Σ |q - p|.
pub fn tv(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(&qi, &pi)| (qi - pi).abs()).sum::<f64>() / 2.0
}

/// KL(q ‖ p) = Σ q ln(q/p); +∞ if q puts mass where p has none.
pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi <= 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return f64::INFINITY;
        }
        acc += qi * (qi / pi).ln();
    }
    acc
}

/// χ²(q ‖ p) = Σ (q - p)² / p; +∞ if q puts mass where p has none.
pub fn chi2(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if pi <= 0.0 {
            if qi > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        acc += (qi - pi) * (qi - pi) / pi;
    }
    acc
}

pub fn by_kind(kind: crate::model::Divergence, q: &[f64], p: &[f64]) -> f64 {
    match kind {
        crate::model::Divergence::Tv => tv(q, p),
        crate::model::Divergence::Kl => kl(q, p),
        crate::model::Divergence::Chi2 => chi2(q, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_half_l1() {
        assert!((tv(&[0.9, 0.1], &[0.5, 0.5]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn kl_support_mismatch_is_infinite() {
        assert!(kl(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
        assert_eq!(kl(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn chi2_of_identical_is_zero() {
        assert_eq!(chi2(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }
}

//! Goodness-of-fit helpers.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of observed counts against expected bin probabilities.
///
/// Probabilities are renormalized over the supplied bins, so counts outside
/// the binned range should simply be left out of `observed`.
pub fn chi_square_gof(observed: &[u64], expected_prob: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected_prob.len() || observed.len() < 2 {
        return Err(invalid("observed and expected must have equal length >= 2"));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(invalid("no observations"));
    }
    let p_total: f64 = expected_prob.iter().sum();
    if !(p_total > 0.0) || expected_prob.iter().any(|p| !(*p >= 0.0)) {
        return Err(invalid("expected probabilities must be non-negative with positive sum"));
    }
    let mut statistic = 0.0;
    for (&o, &p) in observed.iter().zip(expected_prob) {
        let e = n as f64 * p / p_total;
        if e > 0.0 {
            statistic += (o as f64 - e).powi(2) / e;
        } else if o > 0 {
            statistic = f64::INFINITY;
        }
    }
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    let p_value = if statistic.is_finite() { dist.sf(statistic) } else { 0.0 };
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_match_has_p_one() {
        let r = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gross_mismatch_has_small_p() {
        let r = chi_square_gof(&[100, 0, 0, 0], &[0.25; 4]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn known_value() {
        // χ² = 4 with 1 dof: sf = erfc(√2)
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.045500263896).abs() < 1e-9);
    }
}

//! Row-support extraction and recovery scoring.
//!
//! Row indices are 0-based.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::confidence::row_norms;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    /// Sorted indices of rows whose norm exceeds the threshold.
    pub support: Vec<usize>,
    pub r0: usize,
    pub threshold_used: f64,
}

/// Rows of `x` with Euclidean norm strictly greater than `zeta`.
pub fn row_support(x: &Array2<f64>, zeta: f64) -> Result<SupportResult> {
    if !(zeta >= 0.0) {
        return Err(Error::Argument(format!("threshold must be nonnegative, got {zeta}")));
    }
    let support: Vec<usize> = row_norms(x)
        .into_iter()
        .enumerate()
        .filter(|(_, n)| *n > zeta)
        .map(|(i, _)| i)
        .collect();
    Ok(SupportResult {
        r0: support.len(),
        support,
        threshold_used: zeta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub sparsity_match: bool,
    pub pattern_match: bool,
    pub recovered: SupportResult,
    pub truth: SupportResult,
    pub frobenius_error: f64,
}

/// Compares the thresholded support of `x_star` with the exact support of
/// `truth`.
pub fn score_recovery(x_star: &Array2<f64>, truth: &Array2<f64>, zeta: f64) -> Result<RecoveryReport> {
    if x_star.dim() != truth.dim() {
        return Err(Error::Dimension(format!(
            "recovered matrix has shape {:?}, truth has {:?}",
            x_star.dim(),
            truth.dim()
        )));
    }
    let recovered = row_support(x_star, zeta)?;
    let truth_support = row_support(truth, 0.0)?;
    let frobenius_error = (x_star - truth).iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(RecoveryReport {
        sparsity_match: recovered.r0 == truth_support.r0,
        pattern_match: recovered.support == truth_support.support,
        recovered,
        truth: truth_support,
        frobenius_error,
    })
}

/// Threshold of 1% of `γ(X̃)`.
pub fn default_zeta(truth: &Array2<f64>) -> Result<f64> {
    Ok(0.01 * crate::confidence::gamma(truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn supports() {
        let z = row_support(&Array2::zeros((3, 2)), 0.5).unwrap();
        assert_eq!((z.r0, z.support.len()), (0, 0));
        let s = row_support(&array![[3.0, 4.0], [0.005, 0.0]], 0.01).unwrap();
        assert_eq!(s.support, vec![0]);
        assert_eq!(s.r0, 1);
        assert!(matches!(row_support(&array![[1.0]], -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn scoring() {
        let truth = array![[0.0, 0.0], [1.0, 2.0], [0.0, 0.0], [3.0, 0.5]];
        let same = score_recovery(&truth, &truth, 0.01).unwrap();
        assert!(same.pattern_match && same.sparsity_match);
        assert_eq!(same.frobenius_error, 0.0);

        let zeta = 0.01;
        let mut extra = truth.clone();
        extra[[0, 1]] = 2.0 * zeta;
        let r = score_recovery(&extra, &truth, zeta).unwrap();
        assert!(!r.sparsity_match && !r.pattern_match);

        let mut moved = truth.clone();
        moved.row_mut(1).fill(0.0);
        moved[[2, 0]] = 1.0;
        let r = score_recovery(&moved, &truth, zeta).unwrap();
        assert!(r.sparsity_match && !r.pattern_match);
        assert!(matches!(score_recovery(&array![[1.0]], &truth, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn default_threshold() {
        let truth = array![[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]];
        assert_eq!(default_zeta(&truth).unwrap(), 0.01);
    }
}

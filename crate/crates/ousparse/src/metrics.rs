//! Error and support-recovery metrics comparing drift estimates to the
//! generating matrix.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Default magnitude below which an estimated entry counts as zero.
/// Soft-thresholding produces exact zeros, so penalized estimators are
/// insensitive to this choice; unpenalized ones are almost never exactly
/// zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Entry classification counts against the true support.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SupportReport {
    /// Entries where truth and estimate agree on zero/nonzero status.
    pub correct: usize,
    /// True nonzeros estimated as zero.
    pub missed: usize,
    /// True zeros estimated as nonzero.
    pub spurious: usize,
}

fn check_same_shape(a_hat: &Array2<f64>, a0: &Array2<f64>) -> Result<()> {
    if a_hat.dim() != a0.dim() {
        return Err(Error::Dimension(format!(
            "shape mismatch: estimate is {:?}, truth is {:?}",
            a_hat.dim(),
            a0.dim()
        )));
    }
    Ok(())
}

/// Entrywise error norms `(‖Â−A₀‖₁, ‖Â−A₀‖₂)`.
pub fn l1_l2_errors(a_hat: &Array2<f64>, a0: &Array2<f64>) -> Result<(f64, f64)> {
    check_same_shape(a_hat, a0)?;
    let mut l1 = 0.0;
    let mut sq = 0.0;
    for (x, y) in a_hat.iter().zip(a0.iter()) {
        let diff = x - y;
        l1 += diff.abs();
        sq += diff * diff;
    }
    Ok((l1, sq.sqrt()))
}

/// Classifies every entry by comparing zero/nonzero status at the given
/// tolerance: magnitudes at or below `zero_tol` count as zero.
pub fn support_report(
    a_hat: &Array2<f64>,
    a0: &Array2<f64>,
    zero_tol: f64,
) -> Result<SupportReport> {
    check_same_shape(a_hat, a0)?;
    if !(zero_tol >= 0.0) || !zero_tol.is_finite() {
        return Err(Error::Domain(format!(
            "zero tolerance must be nonnegative and finite, got {zero_tol}"
        )));
    }
    let mut correct = 0;
    let mut missed = 0;
    let mut spurious = 0;
    for (x, y) in a_hat.iter().zip(a0.iter()) {
        let est_zero = x.abs() <= zero_tol;
        let true_zero = y.abs() <= zero_tol;
        match (true_zero, est_zero) {
            (false, true) => missed += 1,
            (true, false) => spurious += 1,
            _ => correct += 1,
        }
    }
    Ok(SupportReport {
        correct,
        missed,
        spurious,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    use crate::linalg::entrywise_norm;
    use crate::rng::stream_rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn exact_estimate_has_zero_errors() {
        let a0 = array![[0.5, 0.0], [-0.3, 1.2]];
        let (l1, l2) = l1_l2_errors(&a0, &a0).unwrap();
        close(l1, 0.0, 0.0);
        close(l2, 0.0, 0.0);
    }

    #[test]
    fn hand_difference_example() {
        let a0 = array![[0.0, 0.0], [0.0, 0.0]];
        let a_hat = array![[1.0, -1.0], [0.0, 0.0]];
        let (l1, l2) = l1_l2_errors(&a_hat, &a0).unwrap();
        close(l1, 2.0, 0.0);
        close(l2, 2f64.sqrt(), 1e-15);
    }

    #[test]
    fn errors_agree_with_entrywise_norms_of_the_difference() {
        let mut rng = stream_rng(60, 0);
        for _ in 0..20 {
            let d = rng.gen_range(1..=6usize);
            let a0 = Array2::from_shape_fn((d, d), |_| rng.gen_range(-2.0..2.0));
            let a_hat = Array2::from_shape_fn((d, d), |_| rng.gen_range(-2.0..2.0));
            let diff = &a_hat - &a0;
            let (l1, l2) = l1_l2_errors(&a_hat, &a0).unwrap();
            close(l1, entrywise_norm(&diff, 1.0).unwrap(), 1e-14);
            close(l2, entrywise_norm(&diff, 2.0).unwrap(), 1e-14);
        }
    }

    #[test]
    fn norm_equivalence_holds() {
        let mut rng = stream_rng(60, 1);
        for _ in 0..30 {
            let d = rng.gen_range(1..=7usize);
            let a0 = Array2::from_shape_fn((d, d), |_| rng.gen_range(-3.0..3.0));
            let a_hat = Array2::from_shape_fn((d, d), |_| rng.gen_range(-3.0..3.0));
            let (l1, l2) = l1_l2_errors(&a_hat, &a0).unwrap();
            assert!(l2 <= l1 + 1e-12);
            assert!(l1 <= d as f64 * l2 + 1e-12);
        }
    }

    #[test]
    fn exact_estimate_classifies_everything_correct() {
        let a0 = array![[0.5, 0.0, 0.0], [0.0, 1.1, -0.2], [0.0, 0.0, 0.9]];
        let report = support_report(&a0, &a0, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(
            report,
            SupportReport {
                correct: 9,
                missed: 0,
                spurious: 0
            }
        );
    }

    #[test]
    fn zero_estimate_misses_exactly_the_support() {
        let a0 = array![[0.5, 0.0, 0.0], [0.4, 1.1, 0.0], [0.0, -0.2, 0.9]];
        let a_hat = Array2::<f64>::zeros((3, 3));
        let report = support_report(&a_hat, &a0, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(
            report,
            SupportReport {
                correct: 9 - 5,
                missed: 5,
                spurious: 0
            }
        );
    }

    #[test]
    fn perturbation_below_tolerance_changes_nothing() {
        let mut rng = stream_rng(60, 2);
        let d = 5;
        let mut a0 = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            a0[[i, i]] = 1.0 + rng.gen_range(0.0..1.0);
        }
        a0[[0, 3]] = -0.7;
        let exact = support_report(&a0, &a0, DEFAULT_ZERO_TOL).unwrap();
        let mut perturbed = a0.clone();
        for value in perturbed.iter_mut() {
            *value += rng.gen_range(-0.9e-6..0.9e-6);
        }
        let report = support_report(&perturbed, &a0, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(report, exact);
    }

    #[test]
    fn counts_partition_the_matrix() {
        let mut rng = stream_rng(60, 3);
        for _ in 0..20 {
            let d = rng.gen_range(1..=6usize);
            let a0 = Array2::from_shape_fn((d, d), |_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.5..1.5)
                } else {
                    0.0
                }
            });
            let a_hat = Array2::from_shape_fn((d, d), |_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.5..1.5)
                } else {
                    0.0
                }
            });
            let report = support_report(&a_hat, &a0, DEFAULT_ZERO_TOL).unwrap();
            assert_eq!(report.correct + report.missed + report.spurious, d * d);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = stream_rng(60, 4);
        let d = 4;
        let a0 = Array2::from_shape_fn((d, d), |_| {
            if rng.gen_bool(0.4) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let a_hat = Array2::from_shape_fn((d, d), |_| {
            if rng.gen_bool(0.4) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let perm = [2usize, 0, 3, 1];
        let permute = |m: &Array2<f64>| {
            Array2::from_shape_fn((d, d), |(i, j)| m[[perm[i], perm[j]]])
        };
        let (l1, l2) = l1_l2_errors(&a_hat, &a0).unwrap();
        let (pl1, pl2) = l1_l2_errors(&permute(&a_hat), &permute(&a0)).unwrap();
        close(l1, pl1, 1e-15);
        close(l2, pl2, 1e-15);
        let r = support_report(&a_hat, &a0, DEFAULT_ZERO_TOL).unwrap();
        let pr = support_report(&permute(&a_hat), &permute(&a0), DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(r, pr);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(l1_l2_errors(&a, &b).is_err());
        assert!(support_report(&a, &b, DEFAULT_ZERO_TOL).is_err());
        assert!(support_report(&a, &a, f64::NAN).is_err());
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Least-squares coefficients with a flag for rank-deficient designs.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub coef: Vec<f64>,
    pub rank_deficient: bool,
}

/// Minimum-norm least-squares solution of `design · β ≈ response` via SVD.
pub fn least_squares(design: &DMatrix<f64>, response: &DVector<f64>) -> LsFit {
    let p = design.ncols();
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !(max_sv > 0.0) || !max_sv.is_finite() {
        return LsFit { coef: vec![0.0; p], rank_deficient: true };
    }
    let tol = max_sv * design.nrows().max(p) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let coef = svd
        .solve(response, tol)
        .map(|c| c.iter().cloned().collect())
        .unwrap_or_else(|_| vec![0.0; p]);
    LsFit { coef, rank_deficient: rank < p }
}

/// Jitter schedule for covariance factorization: multiples of `trace/d`
/// added to the diagonal until Cholesky succeeds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JitterSchedule {
    pub start: f64,
    pub max: f64,
}

impl Default for JitterSchedule {
    fn default() -> Self {
        Self { start: 1e-8, max: 1e-4 }
    }
}

/// Result of a (possibly regularized) Cholesky factorization.
#[derive(Debug, Clone)]
pub struct RegularizedCholesky {
    pub chol: Cholesky<f64, Dyn>,
    /// The matrix that was actually factorized.
    pub matrix: DMatrix<f64>,
    /// Relative jitter that was applied, zero if none was needed.
    pub jitter: f64,
}

/// Factorizes `sigma`, escalating a diagonal jitter on failure.
///
/// The jitter unit is `trace(sigma)/d`, or 1 when the trace is zero.
pub fn cholesky_with_jitter(sigma: &DMatrix<f64>, schedule: JitterSchedule) -> Result<RegularizedCholesky> {
    let d = sigma.nrows();
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    if let Some(chol) = Cholesky::new(sigma.clone()) {
        if chol.l_dirty().diagonal().iter().all(|v| *v > 0.0) {
            return Ok(RegularizedCholesky { chol, matrix: sigma.clone(), jitter: 0.0 });
        }
    }
    let trace = sigma.trace();
    let unit = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let mut delta = schedule.start;
    while delta <= schedule.max * (1.0 + 1e-9) {
        let mut m = sigma.clone();
        for i in 0..d {
            m[(i, i)] += delta * unit;
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(RegularizedCholesky { chol, matrix: m, jitter: delta });
        }
        delta *= 10.0;
    }
    Err(Error::SingularCovariance)
}

/// `log |Σ|` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `vᵀ Σ⁻¹ v` via a triangular solve.
pub fn quad_form_inv(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let l = chol.l();
    let z = l.solve_lower_triangular(v).expect("non-singular factor");
    z.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, -1.0, 4.0, 2.0]);
        let y = DVector::from_iterator(4, (0..4).map(|i| 0.5 * x[(i, 0)]));
        let fit = least_squares(&x, &y);
        assert!(!fit.rank_deficient);
        assert!((fit.coef[0] - 0.5).abs() < 1e-12 && fit.coef[1].abs() < 1e-12);
    }

    #[test]
    fn least_squares_rank_deficient_is_min_norm() {
        // duplicated column: minimum-norm solution splits the coefficient
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let fit = least_squares(&x, &y);
        assert!(fit.rank_deficient);
        assert!((fit.coef[0] - 1.0).abs() < 1e-10 && (fit.coef[1] - 1.0).abs() < 1e-10);
        let zero = least_squares(&DMatrix::zeros(5, 3), &DVector::zeros(5));
        assert!(zero.rank_deficient && zero.coef == vec![0.0; 3]);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let reg = cholesky_with_jitter(&z, JitterSchedule::default()).unwrap();
        assert_eq!(reg.jitter, 1e-8);
        assert!((log_det(&reg.chol) - 3.0 * 1e-8f64.ln()).abs() < 1e-9);
        let pd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(cholesky_with_jitter(&pd, JitterSchedule::default()).unwrap().jitter, 0.0);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_with_jitter(&indefinite, JitterSchedule::default()).is_err());
    }
}

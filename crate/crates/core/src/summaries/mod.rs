//! Summary statistics of observation series.

mod primitives;
mod sets;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_with_jitter, JitterSchedule};

pub use primitives::{
    autocovariance, lower_median, ordered_diff_cubic, poly_autoregression, power_regression, turning_points,
};
pub use sets::{ricker_stat_names, ricker_summaries, vole_stat_names, vole_summaries};

/// A named vector of summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    names: Arc<Vec<String>>,
    values: Vec<f64>,
    /// Set when a component regression was rank deficient.
    pub degenerate: bool,
}

impl SummaryVector {
    pub fn new(names: Arc<Vec<String>>, values: Vec<f64>, degenerate: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("summary vector must not be empty"));
        }
        if names.len() != values.len() {
            return Err(invalid("summary names and values differ in length"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::SimulationFailure {
                step: i,
                message: format!("summary statistic '{}' is not finite", names[i]),
            });
        }
        Ok(Self { names, values, degenerate })
    }

    /// Unnamed statistics `s0, s1, ...`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let names = Arc::new((0..values.len()).map(|i| format!("s{i}")).collect());
        Self::new(names, values, false)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// CSV header line for this statistic set.
    pub fn csv_header(&self) -> String {
        self.names.join(",")
    }

    /// One CSV row of values in name order.
    pub fn csv_row(&self) -> String {
        self.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Positive semi-definite weighting matrix of a squared Mahalanobis distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    a: DMatrix<f64>,
}

impl ScalingMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(invalid("scaling matrix must be square and non-empty"));
        }
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..a.nrows() {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                    return Err(invalid("scaling matrix is not symmetric"));
                }
            }
        }
        let eig = a.clone().symmetric_eigenvalues();
        if eig.iter().any(|l| *l < -1e-10 * scale) {
            return Err(invalid("scaling matrix is not positive semi-definite"));
        }
        Ok(Self { a })
    }

    pub fn identity(d: usize) -> Self {
        Self { a: DMatrix::identity(d, d) }
    }

    /// `A = Σ⁻¹`, regularizing `Σ` with the default jitter schedule when singular.
    pub fn from_covariance(sigma: &DMatrix<f64>) -> Result<Self> {
        let reg = cholesky_with_jitter(sigma, JitterSchedule::default())?;
        let inv = reg.chol.inverse();
        let sym = (&inv + inv.transpose()) * 0.5;
        Ok(Self { a: sym })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `(x - y)ᵀ A (x - y)` on raw slices.
    pub fn distance_sq(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d || y.len() != d {
            return Err(invalid(format!(
                "dimension mismatch: {} and {} against a {d}x{d} scaling matrix",
                x.len(),
                y.len()
            )));
        }
        let mut total = 0.0;
        for i in 0..d {
            let di = x[i] - y[i];
            let mut row = 0.0;
            for j in 0..d {
                row += self.a[(i, j)] * (x[j] - y[j]);
            }
            total += di * row;
        }
        Ok(total.max(0.0))
    }
}

/// Squared Mahalanobis distance between two statistic vectors.
pub fn mahalanobis_sq(s_obs: &SummaryVector, s: &SummaryVector, a: &ScalingMatrix) -> Result<f64> {
    if s_obs.dim() != s.dim() {
        return Err(invalid("statistic vectors differ in dimension"));
    }
    a.distance_sq(s_obs.values(), s.values())
}

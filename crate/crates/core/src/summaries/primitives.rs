use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{least_squares, LsFit};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Autocovariance at `lag` with the biased `1/T` normalization.
pub fn autocovariance(x: &[f64], lag: usize) -> Result<f64> {
    if lag >= x.len() {
        return Err(invalid(format!("lag {lag} needs a series longer than {}", x.len())));
    }
    let m = mean(x);
    let s: f64 = (lag..x.len()).map(|t| (x[t] - m) * (x[t - lag] - m)).sum();
    Ok(s / x.len() as f64)
}

/// Number of interior points where the series changes direction.
/// Flat steps never count.
pub fn turning_points(x: &[f64]) -> Result<usize> {
    if x.len() < 3 {
        return Err(invalid("turning points need at least 3 values"));
    }
    Ok(x.windows(3)
        .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
        .count())
}

/// Lower median: the `⌈n/2⌉`-th order statistic.
pub fn lower_median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

pub(crate) const AR_LAG: usize = 6;

/// Regression without intercept of `x[t+1]` on
/// `(x[t], x[t]², x[t-6], x[t-6]², x[t-6]³)`.
pub fn poly_autoregression(x: &[f64]) -> Result<LsFit> {
    if x.len() < 13 {
        return Err(invalid("polynomial autoregression needs at least 13 values"));
    }
    let rows = x.len() - AR_LAG - 1;
    let design = DMatrix::from_fn(rows, 5, |i, j| {
        let t = i + AR_LAG;
        match j {
            0 => x[t],
            1 => x[t] * x[t],
            2 => x[t - AR_LAG],
            3 => x[t - AR_LAG].powi(2),
            _ => x[t - AR_LAG].powi(3),
        }
    });
    let response = DVector::from_fn(rows, |i, _| x[i + AR_LAG + 1]);
    Ok(least_squares(&design, &response))
}

/// The rank grid `u_i = (i - 0.5)/m - 0.5` used as regressor for sorted differences.
pub(crate) fn rank_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|i| (i as f64 - 0.5) / m as f64 - 0.5).collect()
}

/// Cubic regression without intercept of the sorted first differences on
/// `(u, u², u³)` where `u` is the centred rank grid.
pub fn ordered_diff_cubic(x: &[f64]) -> Result<LsFit> {
    if x.len() < 5 {
        return Err(invalid("ordered-difference regression needs at least 5 values"));
    }
    let mut diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.iter().all(|d| *d == diffs[0]) {
        return Ok(LsFit { coef: vec![0.0; 3], rank_deficient: true });
    }
    diffs.sort_by(f64::total_cmp);
    let u = rank_grid(diffs.len());
    let design = DMatrix::from_fn(diffs.len(), 3, |i, j| u[i].powi(j as i32 + 1));
    Ok(least_squares(&design, &DVector::from_vec(diffs)))
}

/// Regression without intercept of `x[t+1]^0.3` on `(x[t]^0.3, x[t]^0.6)`.
pub fn power_regression(x: &[f64]) -> Result<LsFit> {
    if x.len() < 3 {
        return Err(invalid("power regression needs at least 3 values"));
    }
    if x.iter().any(|v| *v < 0.0) {
        return Err(invalid("power regression needs non-negative values"));
    }
    let rows = x.len() - 1;
    let design = DMatrix::from_fn(rows, 2, |i, j| x[i].powf(0.3 * (j + 1) as f64));
    let response = DVector::from_fn(rows, |i, _| x[i + 1].powf(0.3));
    Ok(least_squares(&design, &response))
}

//! The fixed statistic sets used for the vole and Ricker models.

use std::sync::{Arc, OnceLock};

use super::primitives::{
    autocovariance, lower_median, ordered_diff_cubic, poly_autoregression, power_regression, turning_points,
};
use super::SummaryVector;
use crate::error::{invalid, Result};

const MAX_LAG: usize = 5;

fn names(cell: &'static OnceLock<Arc<Vec<String>>>, build: fn() -> Vec<String>) -> Arc<Vec<String>> {
    Arc::clone(cell.get_or_init(|| Arc::new(build())))
}

fn acov_names() -> impl Iterator<Item = String> {
    (0..=MAX_LAG).map(|k| format!("acov{k}"))
}

/// Names of the 17 vole statistics, in order.
pub fn vole_stat_names() -> Arc<Vec<String>> {
    static CELL: OnceLock<Arc<Vec<String>>> = OnceLock::new();
    names(&CELL, || {
        let mut v: Vec<String> = acov_names().collect();
        v.push("mean".into());
        v.push("mean_minus_median".into());
        v.extend((1..=5).map(|k| format!("ar_beta{k}")));
        v.extend((1..=3).map(|k| format!("diff_cubic{k}")));
        v.push("turning_points".into());
        v
    })
}

/// Names of the 13 Ricker statistics, in order.
pub fn ricker_stat_names() -> Arc<Vec<String>> {
    static CELL: OnceLock<Arc<Vec<String>>> = OnceLock::new();
    names(&CELL, || {
        let mut v: Vec<String> = acov_names().collect();
        v.push("mean".into());
        v.push("n_zeros".into());
        v.extend((1..=3).map(|k| format!("diff_cubic{k}")));
        v.push("pow_beta1".into());
        v.push("pow_beta2".into());
        v
    })
}

fn push_acov(values: &mut Vec<f64>, y: &[f64]) -> Result<()> {
    for k in 0..=MAX_LAG {
        values.push(autocovariance(y, k)?);
    }
    Ok(())
}

/// Autocovariances at lags 0-5, mean, mean minus median, five polynomial
/// autoregression coefficients, three ordered-difference cubic coefficients
/// and the number of turning points.
pub fn vole_summaries(y: &[f64]) -> Result<SummaryVector> {
    if y.len() < 13 {
        return Err(invalid("vole statistics need at least 13 observations"));
    }
    let mut values = Vec::with_capacity(17);
    push_acov(&mut values, y)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    values.push(mean);
    values.push(mean - lower_median(y));
    let ar = poly_autoregression(y)?;
    values.extend_from_slice(&ar.coef);
    let cubic = ordered_diff_cubic(y)?;
    values.extend_from_slice(&cubic.coef);
    values.push(turning_points(y)? as f64);
    SummaryVector::new(vole_stat_names(), values, ar.rank_deficient || cubic.rank_deficient)
}

/// Autocovariances at lags 0-5, mean, number of zeros, three
/// ordered-difference cubic coefficients and the two coefficients of the
/// `y^0.3` power regression.
pub fn ricker_summaries(y: &[f64]) -> Result<SummaryVector> {
    if y.len() < 10 {
        return Err(invalid("Ricker statistics need at least 10 observations"));
    }
    let mut values = Vec::with_capacity(13);
    push_acov(&mut values, y)?;
    values.push(y.iter().sum::<f64>() / y.len() as f64);
    values.push(y.iter().filter(|v| **v == 0.0).count() as f64);
    let cubic = ordered_diff_cubic(y)?;
    values.extend_from_slice(&cubic.coef);
    let pow = power_regression(y)?;
    values.extend_from_slice(&pow.coef);
    SummaryVector::new(ricker_stat_names(), values, cubic.rank_deficient || pow.rank_deficient)
}

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};
use crate::params::ParamVec;
use crate::samplers::Chain;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the `1/(n-1)` normalization.
fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sd of each parameter over the post-burn-in draws.
pub fn posterior_summary(chain: &Chain) -> Result<Vec<ParamSummary>> {
    let post = chain.post_burn_in();
    if post.len() < 2 {
        return Err(invalid("posterior summary needs at least 2 post-burn-in draws"));
    }
    Ok(chain
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = post.iter().map(|r| r[j]).collect();
            ParamSummary { name: name.clone(), mean: mean(&col), sd: sd(&col) }
        })
        .collect())
}

/// Monte Carlo standard error of the mean of `x` by non-overlapping batch means.
/// Trailing draws that do not fill a batch are dropped.
pub fn batch_means_mcse(x: &[f64], n_batches: usize) -> Result<f64> {
    if n_batches < 2 || x.len() < n_batches {
        return Err(invalid(format!("{} draws cannot form {n_batches} batches", x.len())));
    }
    let size = x.len() / n_batches;
    let means: Vec<f64> = x.chunks_exact(size).take(n_batches).map(mean).collect();
    Ok(sd(&means) / (n_batches as f64).sqrt())
}

/// Two-sided one-sample t-test of `d` against zero.
/// All-zero differences give 1; zero spread around a nonzero mean gives 0.
pub fn paired_t_pvalue(d: &[f64]) -> Result<f64> {
    if d.len() < 2 {
        return Err(invalid("t-test needs at least 2 differences"));
    }
    let m = mean(d);
    let s = sd(d);
    if s == 0.0 {
        return Ok(if m == 0.0 { 1.0 } else { 0.0 });
    }
    let t = m / (s / (d.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

/// Error summary of one estimator for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub bias: f64,
    /// Variance (`1/n`) of the errors over squared bias; `inf` for unbiased noisy errors.
    pub var_bias_ratio: f64,
}

impl ErrorStats {
    pub fn from_errors(e: &[f64]) -> Self {
        let bias = mean(e);
        let var = e.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / e.len() as f64;
        let rmse = (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt();
        let var_bias_ratio = if var == 0.0 { 0.0 } else { var / (bias * bias) };
        Self { rmse, bias, var_bias_ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub param: String,
    pub a: ErrorStats,
    pub b: ErrorStats,
    /// Mean over datasets of `ln e_a² - ln e_b²`.
    pub mean_log_sq_diff: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n_datasets: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "param,rmse_a,rmse_b,var_bias_ratio_a,var_bias_ratio_b,mean_log_sq_diff,p_value")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.param, r.a.rmse, r.b.rmse, r.a.var_bias_ratio, r.b.var_bias_ratio, r.mean_log_sq_diff, r.p_value
            )?;
        }
        Ok(())
    }
}

fn posterior_means(chains: &[Chain], names: &[String]) -> Result<Vec<Vec<f64>>> {
    chains
        .iter()
        .map(|c| {
            if c.names != names {
                return Err(invalid(format!("chain parameters {:?} differ from {:?}", c.names, names)));
            }
            Ok(posterior_summary(c)?.into_iter().map(|s| s.mean).collect())
        })
        .collect()
}

/// Compares two estimators fitted to the same datasets (chain `i` of each
/// list belongs to dataset `i`) by the errors of their posterior means.
pub fn compare_estimators(truth: &ParamVec, chains_a: &[Chain], chains_b: &[Chain]) -> Result<ComparisonTable> {
    if chains_a.len() != chains_b.len() || chains_a.len() < 2 {
        return Err(invalid("need two equally long chain lists with at least 2 datasets"));
    }
    let names = chains_a[0].names.clone();
    let means_a = posterior_means(chains_a, &names)?;
    let means_b = posterior_means(chains_b, &names)?;
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let t = truth.require(name)?;
            let ea: Vec<f64> = means_a.iter().map(|m| m[j] - t).collect();
            let eb: Vec<f64> = means_b.iter().map(|m| m[j] - t).collect();
            let log_sq = |e: f64| (e * e).max(f64::MIN_POSITIVE).ln();
            let diff: Vec<f64> = ea.iter().zip(&eb).map(|(a, b)| log_sq(*a) - log_sq(*b)).collect();
            Ok(ComparisonRow {
                param: name.clone(),
                a: ErrorStats::from_errors(&ea),
                b: ErrorStats::from_errors(&eb),
                mean_log_sq_diff: mean(&diff),
                p_value: paired_t_pvalue(&diff)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonTable { n_datasets: chains_a.len(), rows })
}

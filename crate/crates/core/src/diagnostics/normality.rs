use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::linalg::{cholesky_with_jitter, JitterSchedule};
use crate::synlik::sample_mean_cov;

/// Normal q-q data for one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalQq {
    pub name: String,
    pub sorted: Vec<f64>,
    pub normal_quantiles: Vec<f64>,
}

/// Multivariate normality check of simulated statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    /// Squared Mahalanobis distances of the rows, sorted ascending.
    pub chi2_values: Vec<f64>,
    /// `chi2(d)` quantiles at `(i - 0.5) / M`, co-indexed with `chi2_values`.
    pub theoretical_quantiles: Vec<f64>,
    /// Squared Mahalanobis distance of the observed statistics to the sample mean.
    pub obs_mahalanobis: f64,
    pub marginal_qq: Vec<MarginalQq>,
    /// Whitened observed statistics, sorted, against standard normal quantiles.
    pub obs_qq: MarginalQq,
    /// Least-squares slope of `chi2_values` on `theoretical_quantiles`.
    pub qq_slope: f64,
    /// Relative jitter applied to the covariance, 0 if none.
    pub jitter: f64,
}

fn plotting_positions(n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |i| (i as f64 - 0.5) / n as f64)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Transforms each simulated statistic vector (row of `stats`) to its
/// squared Mahalanobis distance from the sample mean under the sample
/// covariance, which is approximately `chi2(d)` when the rows are normal.
pub fn krzanowski_report(stats: &DMatrix<f64>, names: &[String], s_obs: &[f64]) -> Result<NormalityReport> {
    let (m, d) = stats.shape();
    if names.len() != d || s_obs.len() != d {
        return Err(invalid(format!("expected {d} names and observed statistics")));
    }
    let (mu, sigma) = sample_mean_cov(stats)?;
    let reg = cholesky_with_jitter(&sigma, JitterSchedule::default())?;
    let l = reg.chol.l();
    let whiten = |v: DVector<f64>| l.solve_lower_triangular(&v).expect("non-singular factor");

    let mut chi2: Vec<f64> = (0..m)
        .map(|i| whiten(DVector::from_fn(d, |j, _| stats[(i, j)] - mu[j])).norm_squared())
        .collect();
    chi2.sort_by(f64::total_cmp);
    let dist = ChiSquared::new(d as f64).map_err(|e| invalid(e.to_string()))?;
    let theoretical: Vec<f64> = plotting_positions(m).map(|p| dist.inverse_cdf(p)).collect();

    let std_normal = Normal::standard();
    let z_m: Vec<f64> = plotting_positions(m).map(|p| std_normal.inverse_cdf(p)).collect();
    let marginal_qq = (0..d)
        .map(|j| {
            let mut sorted: Vec<f64> = stats.column(j).iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            MarginalQq { name: names[j].clone(), sorted, normal_quantiles: z_m.clone() }
        })
        .collect();

    let z_obs = whiten(DVector::from_fn(d, |j, _| s_obs[j] - mu[j]));
    let obs_mahalanobis = z_obs.norm_squared();
    let mut obs_sorted: Vec<f64> = z_obs.iter().copied().collect();
    obs_sorted.sort_by(f64::total_cmp);
    let obs_qq = MarginalQq {
        name: "observed".into(),
        sorted: obs_sorted,
        normal_quantiles: plotting_positions(d).map(|p| std_normal.inverse_cdf(p)).collect(),
    };

    Ok(NormalityReport {
        qq_slope: ols_slope(&theoretical, &chi2),
        chi2_values: chi2,
        theoretical_quantiles: theoretical,
        obs_mahalanobis,
        marginal_qq,
        obs_qq,
        jitter: reg.jitter,
    })
}

impl NormalityReport {
    /// `kind,name,sample,theoretical,log_sample,log_theoretical` rows for all q-q plots.
    pub fn write_qq_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,name,sample,theoretical,log_sample,log_theoretical")?;
        for (s, t) in self.chi2_values.iter().zip(&self.theoretical_quantiles) {
            writeln!(w, "chi2,mahalanobis,{s},{t},{},{}", s.ln(), t.ln())?;
        }
        for q in self.marginal_qq.iter().chain(std::iter::once(&self.obs_qq)) {
            let kind = if std::ptr::eq(q, &self.obs_qq) { "observed" } else { "marginal" };
            for (s, t) in q.sorted.iter().zip(&q.normal_quantiles) {
                writeln!(w, "{kind},{},{s},{t},,", q.name)?;
            }
        }
        Ok(())
    }
}

//! Gaussian synthetic likelihood.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det, quad_form_inv, JitterSchedule};
use crate::params::ParamVec;
use crate::rng::stream;
use crate::simulators::StatSimulator;
use crate::summaries::SummaryVector;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Fraction of failed simulations above which the estimate is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynlikConfig {
    /// Weight of linear shrinkage toward the diagonal, in `[0, 1]`.
    pub shrinkage: f64,
    pub jitter: JitterSchedule,
}

impl Default for SynlikConfig {
    fn default() -> Self {
        Self { shrinkage: 0.0, jitter: JitterSchedule::default() }
    }
}

/// One synthetic likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynlikFit {
    #[serde(rename = "mu")]
    pub mu_hat: Vec<f64>,
    /// Row-major covariance estimate, after optional shrinkage and before jitter.
    #[serde(rename = "sigma")]
    pub sigma_hat: Vec<Vec<f64>>,
    pub m: usize,
    pub log_sl: f64,
    /// Relative jitter needed to factorize `sigma_hat`.
    pub jitter: f64,
    pub n_failed: usize,
}

impl SynlikFit {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let d = self.mu_hat.len();
        DMatrix::from_fn(d, d, |i, j| self.sigma_hat[i][j])
    }
}

/// Sample mean and `1/(M-1)` covariance of the rows of `stats`.
pub fn sample_mean_cov(stats: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, d) = stats.shape();
    if m < d + 2 {
        return Err(Error::Budget(format!("{m} simulations cannot estimate a {d}-dimensional covariance (need {})", d + 2)));
    }
    let mu = DVector::from_fn(d, |j, _| stats.column(j).mean());
    let mut centered = stats.clone();
    for j in 0..d {
        centered.column_mut(j).add_scalar_mut(-mu[j]);
    }
    let mut sigma = centered.tr_mul(&centered) / (m as f64 - 1.0);
    // Exact symmetry regardless of summation order.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok((mu, sigma))
}

/// Multivariate normal log-density with the default jitter schedule.
pub fn gaussian_logdensity(s: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    gaussian_logdensity_with(s, mu, sigma, JitterSchedule::default()).map(|(v, _)| v)
}

/// Multivariate normal log-density; also returns the jitter that was applied.
///
/// The covariance is factorized in correlation form (`D⁻¹ Σ D⁻¹` with `D` the
/// standard deviations), which keeps statistics on very different scales
/// accurate. Jitter is therefore relative to each variance.
pub fn gaussian_logdensity_with(
    s: &[f64],
    mu: &[f64],
    sigma: &DMatrix<f64>,
    schedule: JitterSchedule,
) -> Result<(f64, f64)> {
    let d = s.len();
    if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(invalid("dimension mismatch in Gaussian log-density"));
    }
    let sd: Vec<f64> = (0..d).map(|i| if sigma[(i, i)] > 0.0 { sigma[(i, i)].sqrt() } else { 1.0 }).collect();
    let corr = DMatrix::from_fn(d, d, |i, j| sigma[(i, j)] / (sd[i] * sd[j]));
    let reg = cholesky_with_jitter(&corr, schedule)?;
    let r = DVector::from_fn(d, |i, _| (s[i] - mu[i]) / sd[i]);
    let log_det_sigma = log_det(&reg.chol) + 2.0 * sd.iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * d as f64 * LN_2PI - 0.5 * log_det_sigma - 0.5 * quad_form_inv(&reg.chol, &r);
    Ok((value, reg.jitter))
}

/// The same density as [`gaussian_logdensity`] at the sample moments of
/// `stats`, computed from a QR factorization of the centered rows. This
/// avoids forming the covariance, whose condition number is the square of
/// that of the data. `None` if the triangular factor is singular.
fn logdensity_from_rows(stats: &DMatrix<f64>, mu: &DVector<f64>, s: &[f64]) -> Option<f64> {
    let (m, d) = stats.shape();
    let scale = 1.0 / (m as f64 - 1.0).sqrt();
    let centered = DMatrix::from_fn(m, d, |i, j| (stats[(i, j)] - mu[j]) * scale);
    // Rᵀ R equals the sample covariance.
    let r = centered.qr().r();
    let diag = r.diagonal();
    if diag.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let resid = DVector::from_fn(d, |i, _| s[i] - mu[i]);
    let z = r.transpose().solve_lower_triangular(&resid)?;
    let log_det = 2.0 * diag.iter().map(|v| v.abs().ln()).sum::<f64>();
    Some(-0.5 * d as f64 * LN_2PI - 0.5 * log_det - 0.5 * z.norm_squared())
}

/// Statistics of `m` simulations at `theta`, one row per successful run,
/// plus the number of runs that failed numerically.
///
/// Replicate `i` uses the stream `(seed, i)`, so the result does not depend
/// on the thread pool.
pub fn simulate_batch<S: StatSimulator>(
    sim: &S,
    theta: &ParamVec,
    m: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, usize)> {
    let d = sim.dim();
    let runs: Vec<Result<SummaryVector>> = (0..m)
        .into_par_iter()
        .map(|i| sim.simulate_stats(theta, &mut stream(seed, &[i as u64])))
        .collect();
    let mut rows = Vec::with_capacity(m * d);
    let mut failed = 0;
    for run in runs {
        match run {
            Ok(s) => {
                if s.dim() != d {
                    return Err(invalid("simulator returned statistics of the wrong dimension"));
                }
                rows.extend_from_slice(s.values());
            }
            Err(Error::SimulationFailure { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((DMatrix::from_row_slice(rows.len() / d.max(1), d, &rows), failed))
}

/// Synthetic log-likelihood of `s_obs` at `theta` from `m` simulations.
///
/// Up to 10% of the simulations may fail; they are dropped. Beyond that the
/// call returns [`Error::TooManyFailures`].
pub fn sl_estimate<S: StatSimulator>(
    sim: &S,
    theta: &ParamVec,
    s_obs: &SummaryVector,
    m: usize,
    seed: u64,
    cfg: &SynlikConfig,
) -> Result<SynlikFit> {
    let d = s_obs.dim();
    if sim.dim() != d {
        return Err(invalid(format!("simulator has {} statistics, observed vector has {d}", sim.dim())));
    }
    if m < d + 2 {
        return Err(Error::Budget(format!("m = {m} is below d + 2 = {}", d + 2)));
    }
    if !(0.0..=1.0).contains(&cfg.shrinkage) {
        return Err(invalid("shrinkage weight must lie in [0, 1]"));
    }
    let (stats, failed) = simulate_batch(sim, theta, m, seed)?;
    if failed as f64 > MAX_FAILURE_FRACTION * m as f64 {
        return Err(Error::TooManyFailures { failed, total: m });
    }
    let (mu, mut sigma) = sample_mean_cov(&stats)?;
    if cfg.shrinkage > 0.0 {
        let w = cfg.shrinkage;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    sigma[(i, j)] *= 1.0 - w;
                }
            }
        }
    }
    let mu_hat: Vec<f64> = mu.iter().copied().collect();
    let (mut log_sl, jitter) = gaussian_logdensity_with(s_obs.values(), &mu_hat, &sigma, cfg.jitter)?;
    if jitter == 0.0 && cfg.shrinkage == 0.0 {
        if let Some(v) = logdensity_from_rows(&stats, &mu, s_obs.values()) {
            log_sl = v;
        }
    }
    Ok(SynlikFit {
        sigma_hat: (0..d).map(|i| sigma.row(i).iter().copied().collect()).collect(),
        mu_hat,
        m,
        log_sl,
        jitter,
        n_failed: failed,
    })
}

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::abc::{smc_abc, SmcAbcConfig};
use super::prior::{ricker_prior, PriorSpec};
use crate::error::{invalid, Result};
use crate::linalg::least_squares;
use crate::models::ricker::{ricker_simulate, DEFAULT_N0};
use crate::models::RickerParams;
use crate::rng::derive_seed;
use crate::simulators::RickerStats;
use crate::summaries::{ricker_summaries, ScalingMatrix};
use crate::synlik::{sample_mean_cov, simulate_batch};

/// Settings of the Ricker scaling-matrix experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingExperimentConfig {
    pub truth: RickerParams,
    pub t_len: usize,
    /// Simulations used to estimate the covariance at each grid point.
    pub n_cov_sims: usize,
    pub smc: SmcAbcConfig,
    pub prior: PriorSpec,
}

impl Default for ScalingExperimentConfig {
    fn default() -> Self {
        Self {
            truth: RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 },
            t_len: 50,
            n_cov_sims: 10_000,
            smc: SmcAbcConfig::new(200, 0.01),
            prior: ricker_prior(),
        }
    }
}

/// Final SMC-ABC tolerance reached with the scaling matrix estimated at `log r = v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub v: f64,
    pub rep: usize,
    pub final_tolerance: f64,
    pub rounds: usize,
    pub total_simulations: usize,
    pub truncated: bool,
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// For every repetition, simulates one observed Ricker series at the truth;
/// then for each `v` in `grid` estimates the statistic covariance at
/// `(v, sigma2, phi)` and runs SMC-ABC with its inverse as scaling matrix.
pub fn scaling_matrix_experiment(
    grid: &[f64],
    reps: usize,
    cfg: &ScalingExperimentConfig,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    if grid.is_empty() {
        return Err(invalid("grid is empty"));
    }
    if reps == 0 {
        return Err(invalid("at least one repetition is needed"));
    }
    let sim = RickerStats { t_len: cfg.t_len, n0: DEFAULT_N0 };
    let mut rows = Vec::with_capacity(grid.len() * reps);
    for rep in 0..reps {
        let obs = ricker_simulate(&cfg.truth, cfg.t_len, DEFAULT_N0, derive_seed(seed, &[rep as u64, 0]))?;
        let s_obs = ricker_summaries(&obs.obs)?;
        for (k, &v) in grid.iter().enumerate() {
            let theta_p = RickerParams { log_r: v, ..cfg.truth }.to_params();
            let (stats, _) = simulate_batch(&sim, &theta_p, cfg.n_cov_sims, derive_seed(seed, &[rep as u64, 1, k as u64]))?;
            let (_, sigma) = sample_mean_cov(&stats)?;
            let a = ScalingMatrix::from_covariance(&sigma)?;
            let res = smc_abc(&cfg.prior, &sim, &s_obs, &a, &cfg.smc, derive_seed(seed, &[rep as u64, 2, k as u64]))?;
            rows.push(ScalingRow {
                v,
                rep,
                final_tolerance: res.final_tolerance(),
                rounds: res.populations.len(),
                total_simulations: res.total_simulations,
                truncated: res.truncated,
            });
        }
    }
    Ok(rows)
}

/// `[c0, c1, c2]` of the least-squares fit `y ≈ c0 + c1 x + c2 x²`.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("quadratic fit needs at least 3 paired points"));
    }
    let design = DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
    let fit = least_squares(&design, &DVector::from_column_slice(y));
    Ok([fit.coef[0], fit.coef[1], fit.coef[2]])
}

/// Minimizer of `c0 + c1 x + c2 x²` over `[lo, hi]`.
pub fn quadratic_argmin(c: [f64; 3], lo: f64, hi: f64) -> f64 {
    let f = |x: f64| c[0] + c[1] * x + c[2] * x * x;
    let mut best = if f(lo) <= f(hi) { lo } else { hi };
    if c[2] > 0.0 {
        let vertex = -c[1] / (2.0 * c[2]);
        if vertex > lo && vertex < hi && f(vertex) < f(best) {
            best = vertex;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_recovers_exact_coefficients() {
        let x: Vec<f64> = (0..10).map(|i| 2.8 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v).collect();
        let c = quadratic_fit(&x, &y).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-8 && (c[1] + 2.0).abs() < 1e-8 && (c[2] - 0.5).abs() < 1e-8);
        assert!((quadratic_argmin(c, 0.0, 5.0) - 2.0).abs() < 1e-8);
        assert_eq!(quadratic_argmin([0.0, -1.0, 0.0], 2.8, 3.8), 3.8);
        assert_eq!(quadratic_argmin([0.0, 0.0, -1.0], 2.8, 3.8), 3.8);
    }

    #[test]
    fn single_point_grid_gives_one_row_per_rep() {
        let cfg = ScalingExperimentConfig {
            n_cov_sims: 200,
            smc: SmcAbcConfig::new(50, 0.2),
            ..Default::default()
        };
        let rows = scaling_matrix_experiment(&[3.8], 2, &cfg, 4).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.v == 3.8 && r.final_tolerance.is_finite() && r.rounds >= 2));
        assert!(scaling_matrix_experiment(&[], 1, &cfg, 4).is_err());
    }
}

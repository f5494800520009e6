//! Simulators that map a parameter vector straight to summary statistics.
//!
//! These are the objects consumed by synthetic likelihood and ABC: each
//! call simulates one dataset at `theta` and reduces it to a
//! [`SummaryVector`].

use std::sync::{Arc, OnceLock};

use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Result};
use crate::models::ricker::ricker_simulate_into;
use crate::models::vole::sample_initial_state;
use crate::models::{std_normal, RickerParams, VoleGrid, VoleParams};
use crate::params::ParamVec;
use crate::rng::StreamRng;
use crate::summaries::{ricker_stat_names, ricker_summaries, vole_stat_names, vole_summaries, SummaryVector};

pub trait StatSimulator: Sync {
    fn stat_names(&self) -> Arc<Vec<String>>;

    /// Simulates one dataset at `theta` and summarizes it.
    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector>;

    fn dim(&self) -> usize {
        self.stat_names().len()
    }
}

impl<S: StatSimulator + ?Sized> StatSimulator for &S {
    fn stat_names(&self) -> Arc<Vec<String>> {
        (**self).stat_names()
    }

    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector> {
        (**self).simulate_stats(theta, rng)
    }
}

/// Ricker map observed through Poisson noise, summarized by the 13-statistic set.
#[derive(Debug, Clone)]
pub struct RickerStats {
    pub t_len: usize,
    pub n0: f64,
}

impl RickerStats {
    pub fn new(t_len: usize) -> Self {
        Self { t_len, n0: crate::models::ricker::DEFAULT_N0 }
    }
}

impl StatSimulator for RickerStats {
    fn stat_names(&self) -> Arc<Vec<String>> {
        ricker_stat_names()
    }

    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector> {
        let params = RickerParams::from_params(theta)?;
        let mut obs = Vec::with_capacity(self.t_len);
        ricker_simulate_into(&params, self.t_len, self.n0, rng, None, &mut obs)?;
        ricker_summaries(&obs)
    }
}

/// Vole model on a fixed observation grid, summarized by the 17-statistic set.
/// Each dataset starts from a fresh draw of the initial-state distribution.
#[derive(Debug, Clone)]
pub struct VoleStats {
    pub grid: Arc<VoleGrid>,
}

impl VoleStats {
    pub fn new(grid: VoleGrid) -> Self {
        Self { grid: Arc::new(grid) }
    }
}

impl StatSimulator for VoleStats {
    fn stat_names(&self) -> Arc<Vec<String>> {
        vole_stat_names()
    }

    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector> {
        let params = VoleParams::from_params(theta)?;
        let init = sample_initial_state(rng);
        let mut obs = Vec::with_capacity(self.grid.n_obs());
        self.grid.simulate_obs_into(&params, init, rng, &mut obs)?;
        vole_summaries(&obs)
    }
}

/// `N` exponential draws with rate `alpha`, summarized by `s = 1 / mean`.
#[derive(Debug, Clone)]
pub struct ExponentialRateStat {
    pub n: usize,
}

impl ExponentialRateStat {
    pub const PARAM: &'static str = "alpha";

    /// Exact log-likelihood of `alpha` given the statistic, up to a constant:
    /// `N log(alpha) - alpha N / s`.
    pub fn analytic_loglik(&self, alpha: f64, s_obs: f64) -> f64 {
        let n = self.n as f64;
        n * alpha.ln() - alpha * n / s_obs
    }
}

fn single_name(cell: &'static OnceLock<Arc<Vec<String>>>, name: &str) -> Arc<Vec<String>> {
    Arc::clone(cell.get_or_init(|| Arc::new(vec![name.to_string()])))
}

impl StatSimulator for ExponentialRateStat {
    fn stat_names(&self) -> Arc<Vec<String>> {
        static CELL: OnceLock<Arc<Vec<String>>> = OnceLock::new();
        single_name(&CELL, "inv_mean")
    }

    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector> {
        let alpha = theta.require(Self::PARAM)?;
        if self.n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let dist = Exp::new(alpha).map_err(|_| invalid(format!("rate must be > 0, got {alpha}")))?;
        let sum: f64 = (0..self.n).map(|_| dist.sample(rng)).sum();
        SummaryVector::new(self.stat_names(), vec![self.n as f64 / sum], false)
    }
}

/// `s ~ N(theta, 1)`: the simplest model with a Gaussian statistic.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianToy;

impl GaussianToy {
    pub const PARAM: &'static str = "theta";
}

impl StatSimulator for GaussianToy {
    fn stat_names(&self) -> Arc<Vec<String>> {
        static CELL: OnceLock<Arc<Vec<String>>> = OnceLock::new();
        single_name(&CELL, "s")
    }

    fn simulate_stats(&self, theta: &ParamVec, rng: &mut StreamRng) -> Result<SummaryVector> {
        let t = theta.require(Self::PARAM)?;
        SummaryVector::new(self.stat_names(), vec![t + std_normal(rng)], false)
    }
}

//! Forward simulators for the population models and the linear-Gaussian
//! reference model.

pub mod exponential;
pub mod lgssm;
pub mod ricker;
pub mod vole;

use std::io::Write;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;

pub use exponential::exponential_simulate;
pub use lgssm::{kalman_loglik, lg_ssm_simulate, LgSsmFamily, LgSsmModel, LgSsmParams};
pub use ricker::{ricker_simulate, RickerFamily, RickerModel, RickerParams};
pub use vole::{
    rescale_dimensional, vole_simulate, vole_skeleton, DimensionalVoleParams, SkeletonPath,
    VoleFamily, VoleGrid, VoleModel, VoleParams, STATE_FLOOR,
};

/// Latent path and observations of one simulated (or observed) series.
///
/// `latent[i]` holds the latent state at `times[i]`, one value per entry of
/// `latent_names`. Count observations are stored as exact integers in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub latent_names: Vec<String>,
    pub latent: Vec<Vec<f64>>,
    pub obs: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks the structural invariants: increasing times, matching lengths.
    pub fn validate(&self) -> Result<()> {
        if self.obs.len() != self.times.len() || self.latent.len() != self.times.len() {
            return Err(invalid("trajectory columns have different lengths"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("trajectory times are not strictly increasing"));
        }
        Ok(())
    }

    /// Writes `time,<latent...>,obs` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.latent_names.iter().cloned());
        header.push("obs".to_string());
        wtr.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.latent[i].iter().map(|v| v.to_string()));
            row.push(self.obs[i].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A state space model with all parameters fixed.
///
/// Observation `k` (zero based) is preceded by one call to `propagate` with
/// `obs_index = k`, starting from a draw of `initial_state`.
pub trait StateSpaceModel: Sync {
    type State: Clone + Send + Sync;

    fn initial_state(&self, rng: &mut StreamRng) -> Self::State;

    fn propagate(&self, state: &mut Self::State, obs_index: usize, rng: &mut StreamRng) -> Result<()>;

    fn log_obs_density(&self, state: &Self::State, y: f64) -> f64;
}

/// A parametric family of state space models.
pub trait ModelFamily: Sync {
    type Model: StateSpaceModel;

    fn bind(&self, theta: &crate::params::ParamVec) -> Result<Self::Model>;
}

/// Draws `Y ~ Poisson(lambda)`; `lambda = 0` gives 0.
pub fn poisson_draw(lambda: f64, rng: &mut StreamRng, step: usize) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::SimulationFailure {
            step,
            message: format!("invalid Poisson mean {lambda}"),
        });
    }
    let dist = Poisson::new(lambda).map_err(|e| Error::SimulationFailure {
        step,
        message: format!("Poisson mean {lambda}: {e}"),
    })?;
    Ok(dist.sample(rng))
}

const LN_FACT_TABLE: usize = 4096;

/// `ln(y!)` for a non-negative integer-valued `y`.
pub fn ln_factorial(y: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if y >= 0.0 && y < LN_FACT_TABLE as f64 {
        let table = TABLE.get_or_init(|| {
            let mut t = vec![0.0; LN_FACT_TABLE];
            for k in 1..LN_FACT_TABLE {
                t[k] = t[k - 1] + (k as f64).ln();
            }
            t
        });
        table[y as usize]
    } else {
        statrs::function::gamma::ln_gamma(y + 1.0)
    }
}

/// Poisson log-probability of `y` given mean `lambda`.
pub fn poisson_log_pmf(y: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if !lambda.is_finite() {
        return f64::NEG_INFINITY;
    }
    y * lambda.ln() - lambda - ln_factorial(y)
}

#[inline]
pub(crate) fn std_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

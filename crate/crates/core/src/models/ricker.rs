//! Stochastic Ricker map with Poisson observations.
//!
//! `N_t = r N_{t-1} exp(-N_{t-1} + Z_t)`, `Z_t ~ N(0, sigma2)`, `Y_t ~ Poisson(phi N_t)`.

use serde::{Deserialize, Serialize};

use super::{poisson_draw, poisson_log_pmf, std_normal, ModelFamily, StateSpaceModel, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::params::ParamVec;
use crate::rng::{stream, StreamRng};

pub const DEFAULT_N0: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerParams {
    pub log_r: f64,
    pub sigma2: f64,
    pub phi: f64,
}

impl RickerParams {
    pub const NAMES: [&'static str; 3] = ["log_r", "sigma2", "phi"];

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(invalid(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(invalid(format!("phi must be > 0, got {}", self.phi)));
        }
        if !self.log_r.is_finite() {
            return Err(invalid("log_r must be finite"));
        }
        Ok(())
    }

    pub fn from_params(theta: &ParamVec) -> Result<Self> {
        let p = Self {
            log_r: theta.require("log_r")?,
            sigma2: theta.require("sigma2")?,
            phi: theta.require("phi")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_params(&self) -> ParamVec {
        ParamVec::from_pairs(&[("log_r", self.log_r), ("sigma2", self.sigma2), ("phi", self.phi)])
    }
}

#[inline]
fn ricker_step(n: f64, r: f64, z: f64, step: usize) -> Result<f64> {
    let next = r * n * (-n + z).exp();
    if !next.is_finite() {
        return Err(Error::SimulationFailure { step, message: "Ricker state overflowed".into() });
    }
    Ok(next)
}

/// Simulates `t_len` observations into `obs`, reusing its allocation.
pub fn ricker_simulate_into(
    params: &RickerParams,
    t_len: usize,
    n0: f64,
    rng: &mut StreamRng,
    latent: Option<&mut Vec<f64>>,
    obs: &mut Vec<f64>,
) -> Result<()> {
    let r = params.log_r.exp();
    let sd = params.sigma2.sqrt();
    obs.clear();
    let mut lat = latent;
    if let Some(l) = lat.as_deref_mut() {
        l.clear();
    }
    let mut n = n0;
    for t in 1..=t_len {
        let z = sd * std_normal(rng);
        n = ricker_step(n, r, z, t)?;
        obs.push(poisson_draw(params.phi * n, rng, t)?);
        if let Some(l) = lat.as_deref_mut() {
            l.push(n);
        }
    }
    Ok(())
}

/// Simulates the Ricker map for `t_len` steps from `n0`.
pub fn ricker_simulate(params: &RickerParams, t_len: usize, n0: f64, seed: u64) -> Result<Trajectory> {
    params.validate()?;
    if t_len == 0 {
        return Err(invalid("T must be at least 1"));
    }
    if !(n0 >= 0.0 && n0.is_finite()) {
        return Err(invalid("n0 must be finite and >= 0"));
    }
    let mut rng = stream(seed, &[]);
    let mut latent = Vec::with_capacity(t_len);
    let mut obs = Vec::with_capacity(t_len);
    ricker_simulate_into(params, t_len, n0, &mut rng, Some(&mut latent), &mut obs)?;
    Ok(Trajectory {
        times: (1..=t_len).map(|t| t as f64).collect(),
        latent_names: vec!["N".into()],
        latent: latent.into_iter().map(|v| vec![v]).collect(),
        obs,
        seed,
    })
}

/// Ricker map as a state space model with a fixed initial population.
#[derive(Debug, Clone)]
pub struct RickerModel {
    pub params: RickerParams,
    pub n0: f64,
}

impl StateSpaceModel for RickerModel {
    type State = f64;

    fn initial_state(&self, _rng: &mut StreamRng) -> f64 {
        self.n0
    }

    fn propagate(&self, state: &mut f64, obs_index: usize, rng: &mut StreamRng) -> Result<()> {
        let z = self.params.sigma2.sqrt() * std_normal(rng);
        *state = ricker_step(*state, self.params.log_r.exp(), z, obs_index + 1)?;
        Ok(())
    }

    fn log_obs_density(&self, state: &f64, y: f64) -> f64 {
        poisson_log_pmf(y, self.params.phi * state)
    }
}

#[derive(Debug, Clone)]
pub struct RickerFamily {
    pub n0: f64,
}

impl Default for RickerFamily {
    fn default() -> Self {
        Self { n0: DEFAULT_N0 }
    }
}

impl ModelFamily for RickerFamily {
    type Model = RickerModel;

    fn bind(&self, theta: &ParamVec) -> Result<RickerModel> {
        Ok(RickerModel { params: RickerParams::from_params(theta)?, n0: self.n0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> RickerParams {
        RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 }
    }

    #[test]
    fn scaling_experiment_truth_gives_count_series() {
        let tr = ricker_simulate(&truth(), 50, DEFAULT_N0, 1).unwrap();
        assert_eq!(tr.obs.len(), 50);
        tr.validate().unwrap();
        assert!(tr.obs.iter().all(|y| *y >= 0.0 && y.fract() == 0.0));
        assert!(tr.latent.iter().all(|l| l[0] >= 0.0));
    }

    #[test]
    fn zero_is_absorbing() {
        let p = RickerParams { log_r: 3.8, sigma2: 0.0, phi: 7.0 };
        let tr = ricker_simulate(&p, 30, 0.0, 9).unwrap();
        assert!(tr.latent.iter().all(|l| l[0] == 0.0));
        assert!(tr.obs.iter().all(|y| *y == 0.0));
    }

    #[test]
    fn noise_free_path_matches_direct_recurrence() {
        let p = RickerParams { log_r: 2.5, sigma2: 0.0, phi: 10.0 };
        let tr = ricker_simulate(&p, 40, 1.0, 3).unwrap();
        // independent recurrence
        let r = 2.5f64.exp();
        let mut n = 1.0f64;
        for t in 0..40 {
            n = r * n * (-n).exp();
            assert!((tr.latent[t][0] - n).abs() <= 1e-12 * n.max(1.0));
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = ricker_simulate(&truth(), 50, 1.0, 42).unwrap();
        let b = ricker_simulate(&truth(), 50, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = ricker_simulate(&truth(), 50, 1.0, 43).unwrap();
        assert_ne!(a.obs, c.obs);
    }

    #[test]
    fn overflow_is_reported_with_step() {
        let p = RickerParams { log_r: 800.0, sigma2: 0.0, phi: 1.0 };
        match ricker_simulate(&p, 5, 1.0, 0) {
            Err(Error::SimulationFailure { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn argument_validation() {
        assert!(ricker_simulate(&truth(), 0, 1.0, 0).is_err());
        let bad = RickerParams { phi: 0.0, ..truth() };
        assert!(ricker_simulate(&bad, 10, 1.0, 0).is_err());
        let bad = RickerParams { sigma2: -1.0, ..truth() };
        assert!(ricker_simulate(&bad, 10, 1.0, 0).is_err());
    }
}

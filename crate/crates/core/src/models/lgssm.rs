//! Scalar linear-Gaussian state space model and its exact Kalman likelihood.
//!
//! `x_0 ~ N(m0, p0)`, `x_t = a x_{t-1} + N(0, q)`, `y_t = c x_t + N(0, r)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{std_normal, ModelFamily, StateSpaceModel, Trajectory};
use crate::error::{invalid, Result};
use crate::params::ParamVec;
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgSsmParams {
    pub a_coef: f64,
    pub c_coef: f64,
    pub q_var: f64,
    pub r_var: f64,
    pub m0: f64,
    pub p0: f64,
}

impl LgSsmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q_var", self.q_var), ("r_var", self.r_var), ("p0", self.p0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.a_coef.is_finite() && self.c_coef.is_finite() && self.m0.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(())
    }

    /// Copy with any of `a`, `c`, `q`, `r`, `m0`, `p0` present in `theta` replaced.
    pub fn with_overrides(&self, theta: &ParamVec) -> Result<Self> {
        let mut p = *self;
        for (name, value) in theta.names().iter().zip(theta.values()) {
            match name.as_str() {
                "a" => p.a_coef = *value,
                "c" => p.c_coef = *value,
                "q" => p.q_var = *value,
                "r" => p.r_var = *value,
                "m0" => p.m0 = *value,
                "p0" => p.p0 = *value,
                other => return Err(invalid(format!("unknown linear-Gaussian parameter '{other}'"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

pub fn lg_ssm_simulate(params: &LgSsmParams, t_len: usize, seed: u64) -> Result<Trajectory> {
    params.validate()?;
    if t_len == 0 {
        return Err(invalid("T must be at least 1"));
    }
    let mut rng = stream(seed, &[]);
    let mut x = params.m0 + params.p0.sqrt() * std_normal(&mut rng);
    let (qs, rs) = (params.q_var.sqrt(), params.r_var.sqrt());
    let mut latent = Vec::with_capacity(t_len);
    let mut obs = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        x = params.a_coef * x + qs * std_normal(&mut rng);
        latent.push(vec![x]);
        obs.push(params.c_coef * x + rs * std_normal(&mut rng));
    }
    Ok(Trajectory {
        times: (1..=t_len).map(|t| t as f64).collect(),
        latent_names: vec!["x".into()],
        latent,
        obs,
        seed,
    })
}

/// Exact `log p(y_{1:T})` by the prediction/update recursion.
pub fn kalman_loglik(params: &LgSsmParams, y: &[f64]) -> Result<f64> {
    params.validate()?;
    let (a, c, q, r) = (params.a_coef, params.c_coef, params.q_var, params.r_var);
    let mut m = params.m0;
    let mut p = params.p0;
    let mut ll = 0.0;
    for &yt in y {
        m *= a;
        p = a * a * p + q;
        let s = c * c * p + r;
        let resid = yt - c * m;
        ll += -0.5 * ((2.0 * PI * s).ln() + resid * resid / s);
        let gain = p * c / s;
        m += gain * resid;
        p *= 1.0 - gain * c;
    }
    Ok(ll)
}

impl StateSpaceModel for LgSsmParams {
    type State = f64;

    fn initial_state(&self, rng: &mut StreamRng) -> f64 {
        self.m0 + self.p0.sqrt() * std_normal(rng)
    }

    fn propagate(&self, state: &mut f64, _obs_index: usize, rng: &mut StreamRng) -> Result<()> {
        *state = self.a_coef * *state + self.q_var.sqrt() * std_normal(rng);
        Ok(())
    }

    fn log_obs_density(&self, state: &f64, y: f64) -> f64 {
        let resid = y - self.c_coef * state;
        -0.5 * ((2.0 * PI * self.r_var).ln() + resid * resid / self.r_var)
    }
}

pub type LgSsmModel = LgSsmParams;

/// Linear-Gaussian family whose free parameters override a base setting.
#[derive(Debug, Clone)]
pub struct LgSsmFamily {
    pub base: LgSsmParams,
}

impl ModelFamily for LgSsmFamily {
    type Model = LgSsmParams;

    fn bind(&self, theta: &ParamVec) -> Result<LgSsmParams> {
        self.base.with_overrides(theta)
    }
}

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::vole::{euler_step, sample_initial_state, seasonal_sin};
use crate::models::VoleParams;
use crate::params::ParamVec;
use crate::rng::stream;
use crate::samplers::Chain;

pub const DEFAULT_DELTA0: f64 = 1e-8;
/// Skeleton integration steps per month for the vole model.
pub const STEPS_PER_MONTH: usize = 10;
pub const MIN_HORIZON_MONTHS: usize = 1200;

/// A deterministic map or discretized flow.
pub trait DynamicalSystem: Sync {
    fn dim(&self) -> usize;

    /// Advances `state` by one step; `i` is the global step index.
    fn step(&self, state: &mut [f64], i: usize) -> Result<()>;

    /// Steps per reporting time unit.
    fn steps_per_unit(&self) -> f64 {
        1.0
    }

    fn in_domain(&self, _state: &[f64]) -> bool {
        true
    }
}

/// `x -> r x (1 - x)` on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticMap {
    pub r: f64,
}

impl DynamicalSystem for LogisticMap {
    fn dim(&self) -> usize {
        1
    }

    fn step(&self, state: &mut [f64], _i: usize) -> Result<()> {
        state[0] = self.r * state[0] * (1.0 - state[0]);
        Ok(())
    }

    fn in_domain(&self, state: &[f64]) -> bool {
        (0.0..=1.0).contains(&state[0])
    }
}

/// Noise-free vole dynamics, Euler steps of `dt` years starting at time `t0`.
#[derive(Debug, Clone)]
pub struct VoleSkeleton {
    pub params: VoleParams,
    pub dt: f64,
    pub t0: f64,
}

impl VoleSkeleton {
    /// Ten steps per month.
    pub fn monthly(params: VoleParams) -> Self {
        Self { params, dt: 1.0 / (12 * STEPS_PER_MONTH) as f64, t0: 0.0 }
    }
}

impl DynamicalSystem for VoleSkeleton {
    fn dim(&self) -> usize {
        2
    }

    fn step(&self, state: &mut [f64], i: usize) -> Result<()> {
        let mut s = [state[0], state[1]];
        let t = self.t0 + i as f64 * self.dt;
        euler_step(&self.params, &mut s, seasonal_sin(t), self.dt, 0.0, i)?;
        state.copy_from_slice(&s);
        Ok(())
    }

    fn steps_per_unit(&self) -> f64 {
        1.0 / self.dt
    }

    fn in_domain(&self, state: &[f64]) -> bool {
        state.iter().all(|v| *v > 0.0)
    }
}

/// Output of the two-trajectory method for a generic system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// Exponent per time unit of the system.
    pub lambda: f64,
    /// Renormalizations at which the two trajectories had merged exactly.
    pub merged: usize,
}

/// Maximal Lyapunov exponent of the vole skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Per year.
    pub lambda_max: f64,
    /// Months discarded before measuring.
    pub transient: usize,
    /// Months over which divergence was measured.
    pub horizon: usize,
    pub merged: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn offset(sys: &impl DynamicalSystem, x: &[f64], dir: &[f64], delta0: f64) -> Vec<f64> {
    let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + delta0 * d).collect();
    if sys.in_domain(&plus) {
        plus
    } else {
        x.iter().zip(dir).map(|(a, d)| a - delta0 * d).collect()
    }
}

fn check_finite(state: &[f64], step: usize) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SimulationFailure { step, message: "trajectory became non-finite".into() })
    }
}

/// Two-trajectory estimate of the maximal Lyapunov exponent.
///
/// After `transient` steps a companion is placed `delta0` away. Every `tau`
/// steps the log growth of the separation is accumulated and the companion
/// is pulled back to distance `delta0` along the current separation.
pub fn lyapunov_exponent<D: DynamicalSystem>(
    sys: &D,
    init: &[f64],
    transient: usize,
    horizon: usize,
    tau: usize,
    delta0: f64,
) -> Result<Divergence> {
    if init.len() != sys.dim() {
        return Err(invalid("initial state has the wrong dimension"));
    }
    if horizon == 0 || tau == 0 {
        return Err(invalid("horizon and renormalization interval must be positive"));
    }
    if !(delta0 > 0.0) {
        return Err(invalid("initial separation must be > 0"));
    }
    let mut x = init.to_vec();
    for i in 0..transient {
        sys.step(&mut x, i)?;
        check_finite(&x, i)?;
    }
    let d = sys.dim();
    let mut dir = vec![1.0 / (d as f64).sqrt(); d];
    let mut y = offset(sys, &x, &dir, delta0);
    let mut total = 0.0;
    let mut merged = 0;
    let mut done = 0;
    while done < horizon {
        let block = tau.min(horizon - done);
        for j in 0..block {
            let i = transient + done + j;
            sys.step(&mut x, i)?;
            sys.step(&mut y, i)?;
            check_finite(&x, i)?;
            check_finite(&y, i)?;
        }
        done += block;
        let sep = distance(&x, &y);
        if sep > 0.0 {
            total += (sep / delta0).ln();
            dir = y.iter().zip(&x).map(|(b, a)| (b - a) / sep).collect();
        } else {
            merged += 1;
            total += f64::EPSILON.ln();
        }
        y = offset(sys, &x, &dir, delta0);
    }
    Ok(Divergence { lambda: total / (horizon as f64 / sys.steps_per_unit()), merged })
}

/// Maximal Lyapunov exponent (per year) of the vole skeleton at `params`,
/// started from a draw of the initial-state distribution, renormalizing monthly.
pub fn lyapunov_max(
    theta: &ParamVec,
    transient_months: usize,
    horizon_months: usize,
    seed: u64,
) -> Result<LyapunovResult> {
    if horizon_months < MIN_HORIZON_MONTHS {
        return Err(invalid(format!("horizon must be at least {MIN_HORIZON_MONTHS} months")));
    }
    let params = VoleParams::from_params(theta)?;
    params.validate()?;
    let init = sample_initial_state(&mut stream(seed, &[]));
    let div = lyapunov_exponent(
        &VoleSkeleton::monthly(params),
        &init,
        transient_months * STEPS_PER_MONTH,
        horizon_months * STEPS_PER_MONTH,
        STEPS_PER_MONTH,
        DEFAULT_DELTA0,
    )?;
    Ok(LyapunovResult {
        lambda_max: div.lambda,
        transient: transient_months,
        horizon: horizon_months,
        merged: div.merged,
    })
}

/// Lyapunov exponents over parameter draws of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPosterior {
    /// Post-burn-in row used for each draw.
    pub rows: Vec<usize>,
    /// `None` where the integration failed.
    pub lambdas: Vec<Option<f64>>,
}

impl LyapunovPosterior {
    pub fn values(&self) -> Vec<f64> {
        self.lambdas.iter().flatten().copied().collect()
    }

    pub fn n_failed(&self) -> usize {
        self.lambdas.iter().filter(|l| l.is_none()).count()
    }

    /// Lower median of the successful draws.
    pub fn median(&self) -> Option<f64> {
        let v = self.values();
        (!v.is_empty()).then(|| crate::summaries::lower_median(&v))
    }

    /// `draw,row,lambda`; failed draws leave `lambda` empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "draw,row,lambda")?;
        for (i, (r, l)) in self.rows.iter().zip(&self.lambdas).enumerate() {
            match l {
                Some(v) => writeln!(w, "{i},{r},{v}")?,
                None => writeln!(w, "{i},{r},")?,
            }
        }
        Ok(())
    }
}

/// Samples `n_draws` distinct post-burn-in rows of a vole chain and
/// computes the skeleton's exponent at each. Every draw starts from the same
/// initial state, taken from the stream `(seed, 1)`, so equal rows give equal exponents.
pub fn lyapunov_posterior(
    chain: &Chain,
    n_draws: usize,
    transient_months: usize,
    horizon_months: usize,
    seed: u64,
) -> Result<LyapunovPosterior> {
    let post = chain.post_burn_in();
    if n_draws == 0 || post.len() < n_draws {
        return Err(invalid(format!("chain has {} post-burn-in rows, {n_draws} requested", post.len())));
    }
    let rows = index::sample(&mut stream(seed, &[0]), post.len(), n_draws).into_vec();
    let init_seed = crate::rng::derive_seed(seed, &[1]);
    let lambdas = rows
        .par_iter()
        .map(|&r| {
            let theta = ParamVec::new(chain.names.iter().cloned(), post[r].clone()).ok()?;
            lyapunov_max(&theta, transient_months, horizon_months, init_seed).ok().map(|l| l.lambda_max)
        })
        .collect();
    Ok(LyapunovPosterior { rows, lambdas })
}

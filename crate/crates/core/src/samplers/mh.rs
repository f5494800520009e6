use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prior::PriorSpec;
use crate::error::{invalid, Error, Result};
use crate::models::{std_normal, ModelFamily};
use crate::params::ParamVec;
use crate::pfilter::averaged_loglik;
use crate::rng::{derive_seed, stream};
use crate::simulators::StatSimulator;
use crate::summaries::SummaryVector;
use crate::synlik::{sl_estimate, SynlikConfig};

const TAG_PROPOSE: u64 = 0;
const TAG_REFRESH: u64 = 1;
const TAG_KERNEL: u64 = 2;
const INIT_PATH: u64 = u64::MAX;

/// Scale on which a parameter's random walk moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
        }
    }

    /// `log |dx/dy|` at natural-scale value `x`.
    pub fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => x.ln(),
        }
    }
}

/// Gaussian random walk on the transformed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub transforms: Vec<Transform>,
    /// Per-parameter standard deviations on the transformed scale.
    pub steps: Vec<f64>,
    /// Tune the steps during burn-in and freeze them afterwards.
    #[serde(default = "default_adapt")]
    pub adapt: bool,
    #[serde(default = "default_target")]
    pub target_accept: f64,
}

fn default_adapt() -> bool {
    true
}

fn default_target() -> f64 {
    0.25
}

impl ProposalSpec {
    /// Log scale for parameters whose support is bounded below by zero or
    /// more, identity otherwise; the same step for every parameter.
    pub fn for_prior(prior: &PriorSpec, step: f64) -> Self {
        let transforms = prior
            .components()
            .iter()
            .map(|c| if c.support().0 >= 0.0 && c.support().1 == f64::INFINITY { Transform::Log } else { Transform::Identity })
            .collect();
        Self { transforms, steps: vec![step; prior.dim()], adapt: true, target_accept: default_target() }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.transforms.len() != k || self.steps.len() != k {
            return Err(invalid(format!("proposal has {} transforms and {} steps for {k} parameters", self.transforms.len(), self.steps.len())));
        }
        if self.steps.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(invalid("proposal steps must be finite and >= 0"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(invalid("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A (possibly noisy) log-likelihood evaluated with an explicit seed.
pub trait LogLikelihood: Sync {
    fn loglik(&self, theta: &ParamVec, seed: u64) -> Result<f64>;
}

/// Wraps a closure as a [`LogLikelihood`].
pub struct FnLogLik<F>(pub F);

impl<F> LogLikelihood for FnLogLik<F>
where
    F: Fn(&ParamVec, u64) -> Result<f64> + Sync,
{
    fn loglik(&self, theta: &ParamVec, seed: u64) -> Result<f64> {
        (self.0)(theta, seed)
    }
}

/// Synthetic log-likelihood from `m` simulations.
pub struct SlPlugin<'a, S> {
    pub sim: &'a S,
    pub s_obs: &'a SummaryVector,
    pub m: usize,
    pub cfg: SynlikConfig,
}

impl<S: StatSimulator> LogLikelihood for SlPlugin<'_, S> {
    fn loglik(&self, theta: &ParamVec, seed: u64) -> Result<f64> {
        match sl_estimate(self.sim, theta, self.s_obs, self.m, seed, &self.cfg) {
            Ok(fit) => Ok(fit.log_sl),
            Err(Error::TooManyFailures { .. }) | Err(Error::SingularCovariance) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Particle-filter log-likelihood, averaged over `replicates` filters.
pub struct PfPlugin<'a, F> {
    pub family: &'a F,
    pub y: &'a [f64],
    pub particles: usize,
    pub replicates: usize,
}

impl<F: ModelFamily> LogLikelihood for PfPlugin<'_, F> {
    fn loglik(&self, theta: &ParamVec, seed: u64) -> Result<f64> {
        Ok(averaged_loglik(self.family, theta, self.y, self.particles, self.replicates, seed)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    /// Re-estimate the likelihood at the current point every iteration.
    #[serde(default)]
    pub refresh_current: bool,
    pub seed: u64,
}

/// The three terms of a log acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceTerms {
    pub d_loglik: f64,
    pub d_logprior: f64,
    pub d_logjac: f64,
}

impl AcceptanceTerms {
    pub fn log_ratio(&self) -> f64 {
        let v = self.d_loglik + self.d_logprior + self.d_logjac;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// Log acceptance terms for a move from `cur` to `prop` under a symmetric
/// random walk on the transformed scale.
pub fn acceptance_terms(
    prior: &PriorSpec,
    transforms: &[Transform],
    cur: &[f64],
    cur_ll: f64,
    prop: &[f64],
    prop_ll: f64,
) -> AcceptanceTerms {
    let log_jac = |x: &[f64]| transforms.iter().zip(x).map(|(t, &v)| t.log_jacobian(v)).sum::<f64>();
    AcceptanceTerms {
        d_loglik: prop_ll - cur_ll,
        d_logprior: prior.log_density(prop) - prior.log_density(cur),
        d_logjac: log_jac(prop) - log_jac(cur),
    }
}

/// Draws, likelihood trace and acceptance record of one MH run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    /// One row per iteration, natural scale, burn-in included.
    pub draws: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub accepted: Vec<bool>,
    pub burn_in: usize,
    pub seed: u64,
    /// Steps in use after burn-in.
    pub final_steps: Vec<f64>,
    /// Proposals whose likelihood evaluation returned an error.
    pub plugin_failures: usize,
}

impl Chain {
    pub fn n_iter(&self) -> usize {
        self.draws.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len() as f64
    }

    /// Acceptance rate after burn-in.
    pub fn post_burn_in_acceptance(&self) -> f64 {
        let tail = &self.accepted[self.burn_in.min(self.accepted.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|a| **a).count() as f64 / tail.len() as f64
    }

    pub fn post_burn_in(&self) -> &[Vec<f64>] {
        &self.draws[self.burn_in.min(self.draws.len())..]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Post-burn-in draws of one parameter.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index_of(name)?;
        Some(self.post_burn_in().iter().map(|r| r[j]).collect())
    }

    /// `iter,<names>,loglik,accepted`, one row per iteration.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,{},loglik,accepted", self.names.join(","))?;
        for (i, row) in self.draws.iter().enumerate() {
            write!(w, "{i}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", self.loglik[i], u8::from(self.accepted[i]))?;
        }
        Ok(())
    }
}

fn ordered_values(prior: &PriorSpec, theta: &ParamVec) -> Result<Vec<f64>> {
    if theta.len() != prior.dim() {
        return Err(invalid(format!("expected {} parameters, got {}", prior.dim(), theta.len())));
    }
    prior.names().iter().map(|n| theta.require(n)).collect()
}

/// Sample sd; exactly 0 for a constant sequence.
fn sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let first = values.clone().next().unwrap_or(0.0);
    if values.clone().all(|v| v == first) {
        return 0.0;
    }
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Random-walk Metropolis-Hastings with a plug-in likelihood.
///
/// During burn-in, and only if `proposal.adapt` is set, a global scale is
/// tuned by Robbins-Monro toward the target acceptance rate and, halfway
/// through, the per-parameter steps are reset from the empirical spread of
/// the second quarter of burn-in. Everything is frozen once burn-in ends.
pub fn mh_chain<L: LogLikelihood>(
    plugin: &L,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    init: &ParamVec,
    cfg: &MhConfig,
) -> Result<Chain> {
    let k = prior.dim();
    proposal.validate(k)?;
    if cfg.n_iter <= cfg.burn_in {
        return Err(invalid(format!("n_iter ({}) must exceed burn_in ({})", cfg.n_iter, cfg.burn_in)));
    }
    let names = prior.names();
    let mut cur = ordered_values(prior, init)?;
    if !prior.in_support(&cur) {
        return Err(invalid("initial point lies outside the prior support"));
    }
    let to_params = |x: &[f64]| ParamVec::new(names.iter().cloned(), x.to_vec()).expect("unique names");
    let mut cur_ll = plugin
        .loglik(&to_params(&cur), derive_seed(cfg.seed, &[INIT_PATH]))
        .map_err(|e| Error::Initialization(e.to_string()))?;
    if cur_ll == f64::NEG_INFINITY || cur_ll.is_nan() {
        return Err(Error::Initialization("log-likelihood at the initial point is -inf".into()));
    }

    let tf = &proposal.transforms;
    let mut steps = proposal.steps.clone();
    let mut log_scale = 0.0f64;
    let mut chain = Chain {
        names: names.clone(),
        draws: Vec::with_capacity(cfg.n_iter),
        loglik: Vec::with_capacity(cfg.n_iter),
        accepted: Vec::with_capacity(cfg.n_iter),
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        final_steps: Vec::new(),
        plugin_failures: 0,
    };
    let rescale_at = cfg.burn_in / 2;

    for it in 0..cfg.n_iter {
        let adapting = proposal.adapt && it < cfg.burn_in;
        if adapting && it == rescale_at && rescale_at >= 40 {
            let window = &chain.draws[rescale_at / 2..rescale_at];
            let scale = 2.38 / (k as f64).sqrt();
            for j in 0..k {
                let s = sd(window.iter().map(|r| tf[j].forward(r[j])));
                if s > 0.0 && s.is_finite() {
                    steps[j] = scale * s;
                } else {
                    steps[j] *= log_scale.exp();
                }
            }
            log_scale = 0.0;
        }

        if cfg.refresh_current {
            if let Ok(v) = plugin.loglik(&to_params(&cur), derive_seed(cfg.seed, &[it as u64, TAG_REFRESH])) {
                if !v.is_nan() {
                    cur_ll = v;
                }
            }
        }

        let mut rng = stream(cfg.seed, &[it as u64, TAG_KERNEL]);
        let factor = log_scale.exp();
        let prop: Vec<f64> = (0..k)
            .map(|j| tf[j].inverse(tf[j].forward(cur[j]) + factor * steps[j] * std_normal(&mut rng)))
            .collect();
        let log_u = rng.random::<f64>().ln();

        let prop_ll = if prior.in_support(&prop) {
            match plugin.loglik(&to_params(&prop), derive_seed(cfg.seed, &[it as u64, TAG_PROPOSE])) {
                Ok(v) => v,
                Err(_) => {
                    chain.plugin_failures += 1;
                    f64::NEG_INFINITY
                }
            }
        } else {
            f64::NEG_INFINITY
        };
        let log_alpha = if prop_ll == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            acceptance_terms(prior, tf, &cur, cur_ll, &prop, prop_ll).log_ratio()
        };
        let accept = log_u < log_alpha;
        if accept {
            cur = prop;
            cur_ll = prop_ll;
        }
        if adapting {
            let p = log_alpha.min(0.0).exp();
            let gain = 1.0 / ((it + 1) as f64).powf(0.6);
            log_scale = (log_scale + gain * (p - proposal.target_accept)).clamp(-10.0, 5.0);
        }
        chain.draws.push(cur.clone());
        chain.loglik.push(cur_ll);
        chain.accepted.push(accept);
    }
    chain.final_steps = steps.iter().map(|s| s * log_scale.exp()).collect();
    Ok(chain)
}

/// MH driven by the synthetic likelihood.
#[allow(clippy::too_many_arguments)]
pub fn slmh<S: StatSimulator>(
    sim: &S,
    s_obs: &SummaryVector,
    m: usize,
    sl_cfg: SynlikConfig,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    init: &ParamVec,
    cfg: &MhConfig,
) -> Result<Chain> {
    mh_chain(&SlPlugin { sim, s_obs, m, cfg: sl_cfg }, prior, proposal, init, cfg)
}

/// Particle marginal MH: the likelihood is the average of `replicates`
/// filters sharing `particles` in total.
#[allow(clippy::too_many_arguments)]
pub fn pmmh<F: ModelFamily>(
    family: &F,
    y: &[f64],
    particles: usize,
    replicates: usize,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    init: &ParamVec,
    cfg: &MhConfig,
) -> Result<Chain> {
    mh_chain(&PfPlugin { family, y, particles, replicates }, prior, proposal, init, cfg)
}

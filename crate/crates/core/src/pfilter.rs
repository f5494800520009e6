//! Bootstrap (SIR) particle filter and likelihood estimates.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{ModelFamily, StateSpaceModel};
use crate::params::ParamVec;
use crate::rng::{derive_seed, stream, StreamRng};

/// Particles per independent random stream. Fixed so that results do not
/// depend on how work is split across threads.
const CHUNK: usize = 64;

const TAG_INIT: u64 = 0;
const TAG_PROPAGATE: u64 = 1;
const TAG_RESAMPLE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMethod {
    Sir,
    Sl,
}

/// A log-likelihood estimate and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    /// Finite, or `-inf` when the filter degenerated.
    pub value: f64,
    pub method: EstimateMethod,
    pub budget: usize,
    pub seed: u64,
    /// First observation at which every particle had zero weight.
    pub failed_at: Option<usize>,
}

/// Particle states with their weights at one observation.
#[derive(Debug, Clone)]
pub struct ParticleSet<S> {
    pub states: Vec<S>,
    /// Log of the unnormalized weights.
    pub log_weights: Vec<f64>,
    pub norm_weights: Vec<f64>,
}

impl<S> ParticleSet<S> {
    /// Unnormalized weights on the natural scale.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `1 / sum(w_i^2)` of the normalized weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.norm_weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Normalizes log-weights. Returns the normalized weights and
/// `log(mean(exp(log_w)))`, or `None` when every weight is zero.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let scaled: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let norm = scaled.iter().map(|w| w / total).collect();
    Some((norm, max + (total / log_w.len() as f64).ln()))
}

/// Draws `m` indices i.i.d. with probabilities proportional to `weights`.
pub fn multinomial_resample(weights: &[f64], m: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("resampling weights must be finite and >= 0"));
    }
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::DegenerateFilter { step: 0 });
    }
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(last)
        })
        .collect())
}

/// Per-observation filter diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub ess: f64,
    pub log_increment: f64,
}

pub fn write_diagnostics_csv<W: Write>(steps: &[StepDiagnostics], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for s in steps {
        out.serialize(s)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub estimate: LogLikEstimate,
    pub steps: Vec<StepDiagnostics>,
}

/// Runs the bootstrap filter with `m` particles on observations `y`,
/// resampling multinomially after every observation.
///
/// Particles whose propagation fails numerically get zero weight. If every
/// particle has zero weight at some observation the estimate is `-inf`.
pub fn sir_filter<M: StateSpaceModel>(model: &M, y: &[f64], m: usize, seed: u64) -> Result<FilterRun> {
    if m < 2 {
        return Err(invalid("the particle filter needs at least 2 particles"));
    }
    if y.is_empty() {
        return Err(invalid("observation series is empty"));
    }
    let mut states: Vec<M::State> = (0..m)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .enumerate()
        .flat_map_iter(|(c, idx)| {
            let mut rng = stream(seed, &[TAG_INIT, c as u64]);
            idx.iter().map(|_| model.initial_state(&mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let mut log_w = vec![0.0; m];
    let mut steps = Vec::with_capacity(y.len());
    let mut total = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        states.par_chunks_mut(CHUNK).zip(log_w.par_chunks_mut(CHUNK)).enumerate().for_each(|(c, (xs, ws))| {
            let mut rng = stream(seed, &[TAG_PROPAGATE, t as u64, c as u64]);
            for (x, w) in xs.iter_mut().zip(ws.iter_mut()) {
                *w = match model.propagate(x, t, &mut rng) {
                    Ok(()) => model.log_obs_density(x, yt),
                    Err(_) => f64::NEG_INFINITY,
                };
                if w.is_nan() {
                    *w = f64::NEG_INFINITY;
                }
            }
        });
        let Some((norm, inc)) = normalize_log_weights(&log_w) else {
            return Ok(FilterRun {
                estimate: LogLikEstimate {
                    value: f64::NEG_INFINITY,
                    method: EstimateMethod::Sir,
                    budget: m,
                    seed,
                    failed_at: Some(t),
                },
                steps,
            });
        };
        total += inc;
        let ess = 1.0 / norm.iter().map(|w| w * w).sum::<f64>();
        steps.push(StepDiagnostics { step: t, ess, log_increment: inc });
        if t + 1 < y.len() {
            let idx = multinomial_resample(&norm, m, &mut stream(seed, &[TAG_RESAMPLE, t as u64]))?;
            states = idx.iter().map(|&i| states[i].clone()).collect();
        }
    }
    Ok(FilterRun {
        estimate: LogLikEstimate { value: total, method: EstimateMethod::Sir, budget: m, seed, failed_at: None },
        steps,
    })
}

/// SIR log-likelihood estimate of `y` under the family member at `theta`.
pub fn sir_loglik<F: ModelFamily>(
    family: &F,
    theta: &ParamVec,
    y: &[f64],
    m: usize,
    seed: u64,
) -> Result<LogLikEstimate> {
    let model = family.bind(theta)?;
    Ok(sir_filter(&model, y, m, seed)?.estimate)
}

/// Average of `c` independent SIR likelihood estimates with `m_total / c`
/// particles each, taken on the natural scale. Replicate `r` runs with seed
/// `derive_seed(seed, [r])`.
pub fn averaged_loglik<F: ModelFamily>(
    family: &F,
    theta: &ParamVec,
    y: &[f64],
    m_total: usize,
    c: usize,
    seed: u64,
) -> Result<LogLikEstimate> {
    if c == 0 || m_total % c != 0 {
        return Err(invalid(format!("{c} replicates do not divide {m_total} particles")));
    }
    let model = family.bind(theta)?;
    let m = m_total / c;
    let runs: Vec<LogLikEstimate> = (0..c)
        .into_par_iter()
        .map(|r| sir_filter(&model, y, m, derive_seed(seed, &[r as u64])).map(|f| f.estimate))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let (value, failed_at) = match normalize_log_weights(&values) {
        Some((_, mean)) => (mean, None),
        None => (f64::NEG_INFINITY, runs.iter().filter_map(|r| r.failed_at).min()),
    };
    Ok(LogLikEstimate { value, method: EstimateMethod::Sir, budget: m_total, seed, failed_at })
}

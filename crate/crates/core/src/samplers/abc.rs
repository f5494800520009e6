use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prior::PriorSpec;
use crate::error::{invalid, Error, Result};
use crate::models::std_normal;
use crate::params::ParamVec;
use crate::rng::stream;
use crate::simulators::StatSimulator;
use crate::summaries::{lower_median, ScalingMatrix, SummaryVector};

const MAX_SUPPORT_RETRIES: usize = 1000;

/// Accepted draws of a rejection-ABC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcRejection {
    pub names: Vec<String>,
    pub accepted: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub n_simulated: usize,
    /// Simulations that failed numerically (never accepted).
    pub n_failed: usize,
    /// Set when nothing was accepted.
    pub empty: bool,
}

impl AbcRejection {
    pub fn accepted_params(&self) -> Vec<ParamVec> {
        self.accepted
            .iter()
            .map(|v| ParamVec::new(self.names.iter().cloned(), v.clone()).expect("unique names"))
            .collect()
    }
}

/// Outcome of one simulation attempt: `None` when the model failed.
fn simulate_distance<S: StatSimulator>(
    sim: &S,
    theta: &ParamVec,
    s_obs: &SummaryVector,
    a: &ScalingMatrix,
    rng: &mut crate::rng::StreamRng,
) -> Result<Option<f64>> {
    match sim.simulate_stats(theta, rng) {
        Ok(s) => a.distance_sq(s_obs.values(), s.values()).map(Some),
        Err(Error::SimulationFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_dims<S: StatSimulator>(sim: &S, s_obs: &SummaryVector, a: &ScalingMatrix) -> Result<()> {
    if sim.dim() != s_obs.dim() || a.dim() != s_obs.dim() {
        return Err(invalid(format!(
            "dimension mismatch: simulator {}, observed {}, scaling matrix {}",
            sim.dim(),
            s_obs.dim(),
            a.dim()
        )));
    }
    Ok(())
}

/// Rejection ABC: draw `m_total` parameters from the prior, simulate, and
/// keep those whose squared Mahalanobis distance to `s_obs` is below `h`.
/// Draw `i` uses the stream `(seed, i)`.
pub fn abc_rejection<S: StatSimulator>(
    prior: &PriorSpec,
    sim: &S,
    s_obs: &SummaryVector,
    m_total: usize,
    h: f64,
    a: &ScalingMatrix,
    seed: u64,
) -> Result<AbcRejection> {
    if h.is_nan() || h < 0.0 {
        return Err(invalid(format!("tolerance must be >= 0, got {h}")));
    }
    check_dims(sim, s_obs, a)?;
    let names = prior.names();
    let runs: Vec<(Vec<f64>, Option<f64>)> = (0..m_total)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i as u64]);
            let theta = prior.sample(&mut rng)?;
            let p = ParamVec::new(names.iter().cloned(), theta.clone())?;
            Ok((theta, simulate_distance(sim, &p, s_obs, a, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let mut out = AbcRejection {
        names,
        accepted: Vec::new(),
        distances: Vec::new(),
        n_simulated: m_total,
        n_failed: 0,
        empty: false,
    };
    for (theta, d) in runs {
        match d {
            Some(d) if d < h => {
                out.accepted.push(theta);
                out.distances.push(d);
            }
            Some(_) => {}
            None => out.n_failed += 1,
        }
    }
    out.empty = out.accepted.is_empty();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcAbcConfig {
    pub n_pop: usize,
    /// Stop once a round accepts less than this fraction of its simulations.
    pub stop_accept_ratio: f64,
    /// Hard cap on simulations in one round; `None` means `n_pop / stop_accept_ratio`.
    #[serde(default)]
    pub max_sims_per_round: Option<usize>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
}

fn default_max_rounds() -> usize {
    100
}

impl SmcAbcConfig {
    pub fn new(n_pop: usize, stop_accept_ratio: f64) -> Self {
        Self { n_pop, stop_accept_ratio, max_sims_per_round: None, max_rounds: default_max_rounds() }
    }
}

/// One weighted population of SMC-ABC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcPopulation {
    pub round: usize,
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    /// Tolerance used to generate this population (`inf` for the prior round).
    pub tolerance: f64,
    pub acceptance_ratio: f64,
    pub n_simulated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcAbcResult {
    pub names: Vec<String>,
    pub populations: Vec<AbcPopulation>,
    /// Tolerance of each completed population, strictly decreasing.
    pub tolerances: Vec<f64>,
    /// Acceptance ratio of the round that triggered termination.
    pub final_acceptance_ratio: f64,
    /// Set when a round hit the simulation cap or `max_rounds` was reached.
    pub truncated: bool,
    pub total_simulations: usize,
}

impl SmcAbcResult {
    /// Lowest tolerance reached before termination.
    pub fn final_tolerance(&self) -> f64 {
        *self.tolerances.last().expect("at least one population")
    }

    pub fn last(&self) -> &AbcPopulation {
        self.populations.last().expect("at least one population")
    }

    /// Weighted mean of the last population.
    pub fn posterior_mean(&self) -> Vec<f64> {
        weighted_moments(self.last()).0
    }

    /// `round,weight,distance,<names>`, one row per particle of every population.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "round,tolerance,weight,distance,{}", self.names.join(","))?;
        for p in &self.populations {
            for i in 0..p.particles.len() {
                write!(w, "{},{},{},{}", p.round, p.tolerance, p.weights[i], p.distances[i])?;
                for v in &p.particles[i] {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

fn weighted_moments(p: &AbcPopulation) -> (Vec<f64>, Vec<f64>) {
    let k = p.particles.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; k];
    for (x, w) in p.particles.iter().zip(&p.weights) {
        for j in 0..k {
            mean[j] += w * x[j];
        }
    }
    let mut var = vec![0.0; k];
    for (x, w) in p.particles.iter().zip(&p.weights) {
        for j in 0..k {
            var[j] += w * (x[j] - mean[j]).powi(2);
        }
    }
    (mean, var)
}

struct Attempt {
    theta: Vec<f64>,
    /// `None`: no proposal inside the support, or the model failed.
    distance: Option<f64>,
    simulated: bool,
}

/// Sequential ABC with median tolerance schedule and a Gaussian
/// perturbation kernel of twice the weighted population variance.
///
/// Round 0 samples the prior with infinite tolerance. Each later round uses
/// the median accepted distance of the previous population as tolerance.
/// Attempts are simulated in parallel batches with per-attempt streams and
/// scanned in index order, so the result is independent of the thread count.
pub fn smc_abc<S: StatSimulator>(
    prior: &PriorSpec,
    sim: &S,
    s_obs: &SummaryVector,
    a: &ScalingMatrix,
    cfg: &SmcAbcConfig,
    seed: u64,
) -> Result<SmcAbcResult> {
    if cfg.n_pop < 2 {
        return Err(invalid("population size must be at least 2"));
    }
    if !(cfg.stop_accept_ratio > 0.0) {
        return Err(invalid("stop acceptance ratio must be > 0"));
    }
    check_dims(sim, s_obs, a)?;
    let names = prior.names();
    let k = prior.dim();
    let natural_cap = (cfg.n_pop as f64 / cfg.stop_accept_ratio.min(1.0)).ceil() as usize;
    let cap = cfg.max_sims_per_round.map_or(natural_cap, |c| c.min(natural_cap)).max(1);

    let mut result = SmcAbcResult {
        names: names.clone(),
        populations: Vec::new(),
        tolerances: Vec::new(),
        final_acceptance_ratio: 1.0,
        truncated: false,
        total_simulations: 0,
    };
    let mut tolerance = f64::INFINITY;

    for round in 0..cfg.max_rounds {
        let prev = result.populations.last();
        let kernel_sd: Vec<f64> = prev.map_or(Vec::new(), |p| {
            weighted_moments(p).1.iter().map(|v| (2.0 * v).sqrt().max(1e-12)).collect()
        });
        let cdf: Vec<f64> = prev.map_or(Vec::new(), |p| {
            p.weights.iter().scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            }).collect()
        });

        let attempt = |j: usize| -> Result<Attempt> {
            let mut rng = stream(seed, &[round as u64, j as u64]);
            let theta = match prev {
                None => prior.sample(&mut rng)?,
                Some(p) => {
                    let mut found = None;
                    for _ in 0..MAX_SUPPORT_RETRIES {
                        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                        let i = cdf.partition_point(|c| *c <= u).min(p.particles.len() - 1);
                        let cand: Vec<f64> =
                            (0..k).map(|c| p.particles[i][c] + kernel_sd[c] * std_normal(&mut rng)).collect();
                        if prior.in_support(&cand) {
                            found = Some(cand);
                            break;
                        }
                    }
                    match found {
                        Some(t) => t,
                        None => return Ok(Attempt { theta: Vec::new(), distance: None, simulated: false }),
                    }
                }
            };
            let params = ParamVec::new(names.iter().cloned(), theta.clone())?;
            let distance = simulate_distance(sim, &params, s_obs, a, &mut rng)?;
            Ok(Attempt { theta, distance, simulated: true })
        };

        let mut particles = Vec::with_capacity(cfg.n_pop);
        let mut distances = Vec::with_capacity(cfg.n_pop);
        let mut simulated = 0usize;
        let mut next = 0usize;
        'fill: while particles.len() < cfg.n_pop && next < cap {
            let batch = (cfg.n_pop - particles.len()).max(64).min(cap - next);
            let results: Vec<Attempt> = (next..next + batch).into_par_iter().map(attempt).collect::<Result<_>>()?;
            for r in results {
                next += 1;
                if r.simulated {
                    simulated += 1;
                }
                if let Some(d) = r.distance {
                    if d < tolerance {
                        particles.push(r.theta);
                        distances.push(d);
                        if particles.len() == cfg.n_pop {
                            break 'fill;
                        }
                    }
                }
            }
        }
        result.total_simulations += simulated;
        let ratio = if simulated == 0 { 0.0 } else { particles.len() as f64 / simulated as f64 };
        let complete = particles.len() == cfg.n_pop;
        if !complete {
            result.final_acceptance_ratio = ratio;
            // Running out of the natural budget means the ratio fell below the stop level.
            result.truncated = next >= cap && cap < natural_cap;
            if round == 0 {
                return Err(Error::Budget(format!(
                    "only {} of {} prior draws gave usable simulations",
                    particles.len(),
                    cfg.n_pop
                )));
            }
            break;
        }

        let weights = match prev {
            None => vec![1.0 / cfg.n_pop as f64; cfg.n_pop],
            Some(p) => {
                let log_norm: f64 = kernel_sd.iter().map(|s| s.ln()).sum();
                let raw: Vec<f64> = particles
                    .par_iter()
                    .map(|x| {
                        let denom: f64 = p
                            .particles
                            .iter()
                            .zip(&p.weights)
                            .map(|(y, w)| {
                                let q: f64 = (0..k).map(|c| ((x[c] - y[c]) / kernel_sd[c]).powi(2)).sum();
                                w * (-0.5 * q - log_norm).exp()
                            })
                            .sum();
                        (prior.log_density(x)).exp() / denom
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::Budget("importance weights degenerated".into()));
                }
                raw.iter().map(|w| w / total).collect()
            }
        };
        let median = lower_median(&distances);
        result.populations.push(AbcPopulation {
            round,
            particles,
            weights,
            distances,
            tolerance,
            acceptance_ratio: ratio,
            n_simulated: simulated,
        });
        result.tolerances.push(tolerance);
        result.final_acceptance_ratio = ratio;
        if ratio < cfg.stop_accept_ratio {
            break;
        }
        if round + 1 == cfg.max_rounds {
            result.truncated = true;
            break;
        }
        if !(median < tolerance) || median <= 0.0 {
            // The schedule cannot decrease further.
            break;
        }
        tolerance = median;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::super::prior::{PriorComponent, PriorDist};
    use super::*;
    use crate::simulators::GaussianToy;

    fn toy_prior() -> PriorSpec {
        PriorSpec::new(vec![PriorComponent::new("theta", PriorDist::Normal { mean: 0.0, sd: 2.0 })]).unwrap()
    }

    #[test]
    fn zero_tolerance_accepts_nothing() {
        let s_obs = SummaryVector::from_values(vec![0.5]).unwrap();
        let r = abc_rejection(&toy_prior(), &GaussianToy, &s_obs, 500, 0.0, &ScalingMatrix::identity(1), 3).unwrap();
        assert!(r.empty && r.accepted.is_empty());
        assert_eq!(r.n_simulated, 500);
    }

    #[test]
    fn stop_ratio_one_ends_after_first_resampled_round() {
        let s_obs = SummaryVector::from_values(vec![0.5]).unwrap();
        let cfg = SmcAbcConfig::new(100, 1.0);
        let r = smc_abc(&toy_prior(), &GaussianToy, &s_obs, &ScalingMatrix::identity(1), &cfg, 1).unwrap();
        assert_eq!(r.populations.len(), 1);
        assert!(r.final_acceptance_ratio < 1.0);
        assert_eq!(r.total_simulations, 200);
    }

    #[test]
    fn tolerances_strictly_decrease_and_weights_normalize() {
        let s_obs = SummaryVector::from_values(vec![0.5]).unwrap();
        let cfg = SmcAbcConfig::new(200, 0.05);
        let r = smc_abc(&toy_prior(), &GaussianToy, &s_obs, &ScalingMatrix::identity(1), &cfg, 2).unwrap();
        assert!(r.populations.len() >= 3);
        assert!(r.tolerances.windows(2).all(|w| w[1] < w[0]));
        for p in &r.populations {
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.distances.iter().all(|d| *d < p.tolerance));
        }
        let again = smc_abc(&toy_prior(), &GaussianToy, &s_obs, &ScalingMatrix::identity(1), &cfg, 2).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn simulation_cap_sets_flag() {
        let s_obs = SummaryVector::from_values(vec![0.5]).unwrap();
        let cfg = SmcAbcConfig { max_sims_per_round: Some(300), ..SmcAbcConfig::new(200, 0.001) };
        let r = smc_abc(&toy_prior(), &GaussianToy, &s_obs, &ScalingMatrix::identity(1), &cfg, 2).unwrap();
        assert!(r.truncated);
    }
}

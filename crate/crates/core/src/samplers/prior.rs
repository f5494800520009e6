use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::params::ParamVec;
use crate::rng::StreamRng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MAX_REJECTIONS: usize = 100_000;

/// One-dimensional prior distribution, before truncation to the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum PriorDist {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    /// Improper flat prior on `[lower, inf)`.
    UniformHalfLine { lower: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl PriorDist {
    fn natural_support(&self) -> (f64, f64) {
        match *self {
            PriorDist::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorDist::Exponential { .. } | PriorDist::Gamma { .. } => (0.0, f64::INFINITY),
            PriorDist::UniformHalfLine { lower } => (lower, f64::INFINITY),
            PriorDist::Uniform { lower, upper } => (lower, upper),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            PriorDist::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            PriorDist::Gamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            PriorDist::UniformHalfLine { lower } => lower.is_finite(),
            PriorDist::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid prior hyperparameters: {self:?}")))
        }
    }

    /// Log-density of the untruncated distribution; 0 for the improper flat prior.
    fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorDist::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            PriorDist::Exponential { rate } => rate.ln() - rate * x,
            PriorDist::Gamma { shape, scale } => {
                -ln_gamma(shape) - shape * scale.ln() + (shape - 1.0) * x.ln() - x / scale
            }
            PriorDist::UniformHalfLine { .. } => 0.0,
            PriorDist::Uniform { lower, upper } => -(upper - lower).ln(),
        }
    }

    fn is_proper(&self) -> bool {
        !matches!(self, PriorDist::UniformHalfLine { .. })
    }

    fn mean(&self) -> Option<f64> {
        match *self {
            PriorDist::Normal { mean, .. } => Some(mean),
            PriorDist::Exponential { rate } => Some(1.0 / rate),
            PriorDist::Gamma { shape, scale } => Some(shape * scale),
            PriorDist::UniformHalfLine { .. } => None,
            PriorDist::Uniform { lower, upper } => Some(0.5 * (lower + upper)),
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<f64> {
        let x = match *self {
            PriorDist::Normal { mean, sd } => Normal::new(mean, sd).map_err(|e| invalid(e.to_string()))?.sample(rng),
            PriorDist::Exponential { rate } => Exp::new(rate).map_err(|e| invalid(e.to_string()))?.sample(rng),
            PriorDist::Gamma { shape, scale } => {
                Gamma::new(shape, scale).map_err(|e| invalid(e.to_string()))?.sample(rng)
            }
            PriorDist::Uniform { lower, upper } => rng.random_range(lower..upper),
            PriorDist::UniformHalfLine { .. } => return Err(invalid("cannot sample from an improper prior")),
        };
        Ok(x)
    }
}

/// A named parameter's prior: a distribution restricted to the open
/// interval `(lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorComponent {
    pub name: String,
    #[serde(flatten)]
    pub dist: PriorDist,
    #[serde(rename = "support_lower", default = "neg_inf", skip_serializing_if = "is_neg_inf")]
    pub lower: f64,
    #[serde(rename = "support_upper", default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub upper: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}
/// Infinite bounds are left out of JSON, which has no infinities.
fn is_neg_inf(v: &f64) -> bool {
    *v == f64::NEG_INFINITY
}
fn is_pos_inf(v: &f64) -> bool {
    *v == f64::INFINITY
}

impl PriorComponent {
    pub fn new(name: &str, dist: PriorDist) -> Self {
        let (lower, upper) = dist.natural_support();
        Self { name: name.to_string(), dist, lower, upper }
    }

    /// Restricts the support to `x > lower`.
    pub fn positive(mut self) -> Self {
        self.lower = self.lower.max(0.0);
        self
    }

    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.dist.natural_support();
        (self.lower.max(lo), self.upper.min(hi))
    }

    pub fn in_support(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x > lo && x < hi
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if self.in_support(x) {
            self.dist.log_density(x)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Independent priors over a named parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    components: Vec<PriorComponent>,
}

impl PriorSpec {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("prior has no components"));
        }
        for (i, c) in components.iter().enumerate() {
            c.dist.validate()?;
            let (lo, hi) = c.support();
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err(invalid(format!("empty support for '{}'", c.name)));
            }
            if components[..i].iter().any(|o| o.name == c.name) {
                return Err(invalid(format!("duplicate prior for '{}'", c.name)));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_proper(&self) -> bool {
        self.components.iter().all(|c| c.dist.is_proper())
    }

    /// Sum of the component log-densities (untruncated normalization);
    /// `-inf` off the support.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.len() != self.components.len() {
            return f64::NEG_INFINITY;
        }
        self.components.iter().zip(x).map(|(c, &v)| c.log_density(v)).sum()
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.components.len() && self.components.iter().zip(x).all(|(c, &v)| c.in_support(v))
    }

    /// Draws from the prior, truncating by rejection.
    pub fn sample(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| {
                for _ in 0..MAX_REJECTIONS {
                    let x = c.dist.sample(rng)?;
                    if c.in_support(x) {
                        return Ok(x);
                    }
                }
                Err(invalid(format!("prior for '{}' puts negligible mass on its support", c.name)))
            })
            .collect()
    }

    pub fn sample_params(&self, rng: &mut StreamRng) -> Result<ParamVec> {
        ParamVec::new(self.names(), self.sample(rng)?)
    }

    /// Prior means where proper, 1.0 otherwise (moved into the support if needed).
    pub fn default_init(&self) -> ParamVec {
        let values = self
            .components
            .iter()
            .map(|c| {
                let v = c.dist.mean().unwrap_or(1.0);
                if c.in_support(v) {
                    v
                } else {
                    let (lo, _) = c.support();
                    lo.max(0.0) + 1.0
                }
            })
            .collect();
        ParamVec::new(self.names(), values).expect("unique names")
    }
}

/// Priors of the nine vole parameters.
///
/// The Gamma prior on `h` uses scale 1/40 (prior mean 0.1).
pub fn vole_prior() -> PriorSpec {
    use PriorDist::*;
    PriorSpec::new(vec![
        PriorComponent::new("r", Normal { mean: 5.0, sd: 1.0 }).positive(),
        PriorComponent::new("e", Normal { mean: 1.0, sd: 1.0 }),
        PriorComponent::new("g", Exponential { rate: 7.0 }),
        PriorComponent::new("h", Gamma { shape: 4.0, scale: 1.0 / 40.0 }),
        PriorComponent::new("a", Normal { mean: 15.0, sd: 15.0 }).positive(),
        PriorComponent::new("d", Normal { mean: 0.04, sd: 0.04 }).positive(),
        PriorComponent::new("s", Normal { mean: 1.25, sd: 0.5 }).positive(),
        PriorComponent::new("sigma", UniformHalfLine { lower: 0.5 }),
        PriorComponent::new("phi", UniformHalfLine { lower: 0.0 }).positive(),
    ])
    .expect("valid vole prior")
}

/// Uniform priors for the Ricker parameters used in the scaling-matrix experiment.
pub fn ricker_prior() -> PriorSpec {
    use PriorDist::Uniform;
    PriorSpec::new(vec![
        PriorComponent::new("log_r", Uniform { lower: 2.0, upper: 5.0 }),
        PriorComponent::new("sigma2", Uniform { lower: 0.01, upper: 1.0 }),
        PriorComponent::new("phi", Uniform { lower: 2.0, upper: 20.0 }),
    ])
    .expect("valid Ricker prior")
}

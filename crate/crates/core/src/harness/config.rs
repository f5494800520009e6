use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::VoleParams;
use crate::params::ParamVec;

pub const SCHEMA_VERSION: u32 = 1;

/// A complete, seeded experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(invalid(format!("unknown preset '{other}' (desk, full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    RickerScaling(RickerScalingSpec),
    ExpSlDemo(ExpSlDemoSpec),
    VoleSimCompare(VoleCompareSpec),
    KilpisjarviFit(FitSpec),
    LyapunovPosterior(LyapunovSpec),
    LgssmOracle(LgssmOracleSpec),
}

pub const EXPERIMENT_KINDS: [&str; 6] =
    ["ricker-scaling", "exp-sl-demo", "vole-sim-compare", "kilpisjarvi-fit", "lyapunov-posterior", "lgssm-oracle"];

/// Scaling-matrix sensitivity of SMC-ABC on the Ricker model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RickerScalingSpec {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub reps: usize,
    pub t_len: usize,
    pub n_cov_sims: usize,
    pub n_pop: usize,
    pub stop_accept_ratio: f64,
    pub max_sims_per_round: Option<usize>,
}

impl Default for RickerScalingSpec {
    fn default() -> Self {
        Self {
            grid_lo: 2.8,
            grid_hi: 3.8,
            grid_points: 10,
            reps: 2,
            t_len: 50,
            n_cov_sims: 10_000,
            n_pop: 200,
            stop_accept_ratio: 0.01,
            max_sims_per_round: None,
        }
    }
}

impl RickerScalingSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.grid_points == 1 {
            return vec![self.grid_lo];
        }
        let step = (self.grid_hi - self.grid_lo) / (self.grid_points - 1) as f64;
        (0..self.grid_points).map(|k| self.grid_lo + k as f64 * step).collect()
    }
}

/// Synthetic versus exact likelihood for the rate of exponential data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpSlDemoSpec {
    pub sample_sizes: Vec<usize>,
    pub alpha_true: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha_step: f64,
    pub m: usize,
}

impl Default for ExpSlDemoSpec {
    fn default() -> Self {
        Self { sample_sizes: vec![10, 200], alpha_true: 1.0, alpha_lo: 0.5, alpha_hi: 2.0, alpha_step: 0.05, m: 10_000 }
    }
}

impl ExpSlDemoSpec {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.alpha_hi - self.alpha_lo) / self.alpha_step).round() as usize;
        (0..=n).map(|i| self.alpha_lo + i as f64 * self.alpha_step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Slmh,
    Pmmh,
    Both,
}

impl FitMethod {
    pub fn runs_sl(self) -> bool {
        matches!(self, FitMethod::Slmh | FitMethod::Both)
    }

    pub fn runs_pf(self) -> bool {
        matches!(self, FitMethod::Pmmh | FitMethod::Both)
    }
}

/// MCMC budgets shared by the vole fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcBudget {
    pub iterations: usize,
    pub burn_in: usize,
    /// Simulations per SL evaluation and particles per filter.
    pub budget: usize,
    /// Independent filters averaged at each PMMH step (sharing `budget` particles).
    pub replicates: usize,
    /// Initial proposal sd on the transformed scale.
    pub step: f64,
    pub adapt: bool,
}

impl Default for McmcBudget {
    fn default() -> Self {
        Self { iterations: 3000, burn_in: 600, budget: 500, replicates: 1, step: 0.02, adapt: true }
    }
}

impl McmcBudget {
    fn full(iterations: usize, burn_in: usize) -> Self {
        Self { iterations, burn_in, budget: 1000, ..Self::default() }
    }
}

/// SLMH versus PMMH on datasets simulated at known parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoleCompareSpec {
    pub datasets: usize,
    pub truth: VoleParams,
    /// Initial state `(n, p)` of the simulated datasets.
    pub init_state: [f64; 2],
    /// Chain starting point; defaults to the truth.
    pub init: Option<ParamVec>,
    pub mcmc: McmcBudget,
}

impl Default for VoleCompareSpec {
    fn default() -> Self {
        Self {
            datasets: 3,
            truth: VoleParams::simulation_truth(),
            init_state: [0.5, 0.1],
            init: None,
            mcmc: McmcBudget::default(),
        }
    }
}

/// Posterior fit of an observed vole series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    /// CSV with `year,season,index` rows.
    pub data: PathBuf,
    pub method: FitMethod,
    /// Chain starting point; defaults to the prior-based initial values.
    pub init: Option<ParamVec>,
    pub mcmc: McmcBudget,
    /// Statistics simulated at the first chain's posterior mean for the
    /// normality check; 0 skips it.
    pub normality_sims: usize,
    /// Posterior draws used for Lyapunov exponents; 0 skips them.
    pub lyapunov_draws: usize,
    pub transient_months: usize,
    pub horizon_months: usize,
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            data: PathBuf::from("voles.csv"),
            method: FitMethod::Both,
            init: None,
            mcmc: McmcBudget::default(),
            normality_sims: 10_000,
            lyapunov_draws: 0,
            transient_months: 12_000,
            horizon_months: 2_400,
        }
    }
}

/// Lyapunov exponents of the vole skeleton over posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSpec {
    /// A chain CSV; when absent, `params` is used for every draw.
    pub chain: Option<PathBuf>,
    /// Only rows with this `method` value are used, if the file has that column.
    pub method: Option<String>,
    pub burn_in: usize,
    pub params: ParamVec,
    pub n_draws: usize,
    pub transient_months: usize,
    pub horizon_months: usize,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            chain: None,
            method: None,
            burn_in: 0,
            params: VoleParams::kilpisjarvi_slmh_means().to_params(),
            n_draws: 50,
            transient_months: 12_000,
            horizon_months: 2_400,
        }
    }
}

/// SIR log-likelihood estimates against the Kalman filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgssmOracleSpec {
    pub a: f64,
    pub c: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
    pub t_len: usize,
    pub n_seeds: usize,
    pub particles: usize,
}

impl Default for LgssmOracleSpec {
    fn default() -> Self {
        Self { a: 0.9, c: 1.0, q: 0.5, r: 0.8, m0: 0.0, p0: 1.0, t_len: 50, n_seeds: 100, particles: 2000 }
    }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::RickerScaling(_) => "ricker-scaling",
            Experiment::ExpSlDemo(_) => "exp-sl-demo",
            Experiment::VoleSimCompare(_) => "vole-sim-compare",
            Experiment::KilpisjarviFit(_) => "kilpisjarvi-fit",
            Experiment::LyapunovPosterior(_) => "lyapunov-posterior",
            Experiment::LgssmOracle(_) => "lgssm-oracle",
        }
    }

    /// Named budget presets. Desk presets are the defaults of each spec.
    pub fn preset(kind: &str, preset: Preset) -> Result<Self> {
        let desk = preset == Preset::Desk;
        Ok(match kind {
            "ricker-scaling" => Experiment::RickerScaling(if desk {
                RickerScalingSpec::default()
            } else {
                RickerScalingSpec { grid_points: 50, reps: 7, ..Default::default() }
            }),
            "exp-sl-demo" => Experiment::ExpSlDemo(ExpSlDemoSpec::default()),
            "vole-sim-compare" => Experiment::VoleSimCompare(if desk {
                VoleCompareSpec::default()
            } else {
                VoleCompareSpec { datasets: 24, mcmc: McmcBudget::full(25_000, 5_000), ..Default::default() }
            }),
            "kilpisjarvi-fit" => Experiment::KilpisjarviFit(if desk {
                FitSpec::default()
            } else {
                FitSpec { mcmc: McmcBudget::full(150_000, 10_000), lyapunov_draws: 1000, ..Default::default() }
                    .with_full_lyapunov()
            }),
            "lyapunov-posterior" => Experiment::LyapunovPosterior(if desk {
                LyapunovSpec::default()
            } else {
                LyapunovSpec { n_draws: 1000, transient_months: 100_000, horizon_months: 10_000, ..Default::default() }
            }),
            "lgssm-oracle" => Experiment::LgssmOracle(LgssmOracleSpec::default()),
            other => return Err(invalid(format!("unknown experiment '{other}' (one of {})", EXPERIMENT_KINDS.join(", ")))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(invalid(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        let mcmc = |b: &McmcBudget| -> Result<()> {
            positive("iterations", b.iterations)?;
            positive("budget", b.budget)?;
            positive("replicates", b.replicates)?;
            if b.burn_in >= b.iterations {
                return Err(invalid("burn_in must be below iterations"));
            }
            if !(b.step >= 0.0 && b.step.is_finite()) {
                return Err(invalid("step must be finite and >= 0"));
            }
            Ok(())
        };
        match self {
            Experiment::RickerScaling(s) => {
                positive("grid_points", s.grid_points)?;
                positive("reps", s.reps)?;
                positive("t_len", s.t_len)?;
                positive("n_cov_sims", s.n_cov_sims)?;
                positive("n_pop", s.n_pop)?;
                if !(s.grid_lo <= s.grid_hi) {
                    return Err(invalid("grid_lo must not exceed grid_hi"));
                }
            }
            Experiment::ExpSlDemo(s) => {
                positive("m", s.m)?;
                if s.sample_sizes.is_empty() || s.sample_sizes.contains(&0) {
                    return Err(invalid("sample_sizes must be non-empty and positive"));
                }
                if !(s.alpha_lo > 0.0 && s.alpha_lo < s.alpha_hi && s.alpha_step > 0.0 && s.alpha_true > 0.0) {
                    return Err(invalid("need 0 < alpha_lo < alpha_hi, alpha_step > 0 and alpha_true > 0"));
                }
            }
            Experiment::VoleSimCompare(s) => {
                if s.datasets < 2 {
                    return Err(invalid("at least 2 datasets are needed for the comparison"));
                }
                s.truth.validate()?;
                mcmc(&s.mcmc)?;
            }
            Experiment::KilpisjarviFit(s) => {
                mcmc(&s.mcmc)?;
                if s.lyapunov_draws > 0 && s.horizon_months < crate::diagnostics::MIN_HORIZON_MONTHS {
                    return Err(invalid("Lyapunov horizon is too short"));
                }
            }
            Experiment::LyapunovPosterior(s) => {
                positive("n_draws", s.n_draws)?;
                if s.horizon_months < crate::diagnostics::MIN_HORIZON_MONTHS {
                    return Err(invalid("Lyapunov horizon is too short"));
                }
            }
            Experiment::LgssmOracle(s) => {
                positive("t_len", s.t_len)?;
                positive("particles", s.particles)?;
                if s.n_seeds < 2 {
                    return Err(invalid("n_seeds must be at least 2"));
                }
            }
        }
        Ok(())
    }
}

impl FitSpec {
    fn with_full_lyapunov(self) -> Self {
        Self { transient_months: 100_000, horizon_months: 10_000, ..self }
    }
}

impl ExperimentConfig {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        Self { schema_version: SCHEMA_VERSION, seed, out_dir: None, experiment }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.experiment.validate()
    }
}

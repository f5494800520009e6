use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::chain_io::{read_chain_csv, write_chains_csv};
use super::config::*;
use super::data::load_voles_csv;
use crate::diagnostics::{compare_estimators, krzanowski_report, lyapunov_posterior, posterior_summary};
use crate::error::{invalid, Result};
use crate::models::exponential::exponential_simulate;
use crate::models::lgssm::{kalman_loglik, lg_ssm_simulate, LgSsmParams};
use crate::models::vole::{simulate_on_grid, VoleFamily, VoleGrid, DEFAULT_DT, DEFAULT_WARMUP_YEARS};
use crate::params::ParamVec;
use crate::pfilter::sir_filter;
use crate::rng::derive_seed;
use crate::samplers::{
    pmmh, quadratic_argmin, quadratic_fit, scaling_matrix_experiment, slmh, vole_prior, write_scaling_csv, Chain,
    MhConfig, ProposalSpec, ScalingExperimentConfig, SmcAbcConfig,
};
use crate::simulators::{ExponentialRateStat, StatSimulator, VoleStats};
use crate::summaries::{vole_summaries, SummaryVector};
use crate::synlik::{simulate_batch, sl_estimate, SynlikConfig};

pub const TOOL_NAME: &str = "popdyn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Error,
}

/// Record of one experiment run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
    pub artifacts: Vec<Artifact>,
    /// Named counters such as failed Lyapunov draws.
    pub counts: BTreeMap<String, usize>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct Run {
    dir: PathBuf,
    root: u64,
    seeds: Vec<SeedRecord>,
    artifacts: Vec<Artifact>,
    counts: BTreeMap<String, usize>,
}

impl Run {
    fn seed(&mut self, label: impl Into<String>, path: &[u64]) -> u64 {
        let seed = derive_seed(self.root, path);
        self.seeds.push(SeedRecord { label: label.into(), seed });
        seed
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        std::fs::write(self.dir.join(name), &buf)?;
        let digest = Sha256::digest(&buf);
        self.artifacts.push(Artifact {
            file: name.to_string(),
            bytes: buf.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

/// Runs the experiment, writing artifacts and `manifest.json` into `out_dir`.
///
/// Artifact files depend only on the configuration (including its seed).
/// On failure the manifest is still written, with the error recorded.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut run = Run {
        dir: out_dir.to_path_buf(),
        root: cfg.seed,
        seeds: vec![SeedRecord { label: "root".into(), seed: cfg.seed }],
        artifacts: Vec::new(),
        counts: BTreeMap::new(),
    };
    let outcome = cfg.validate().and_then(|()| match &cfg.experiment {
        Experiment::RickerScaling(s) => ricker_scaling(&mut run, s),
        Experiment::ExpSlDemo(s) => exp_sl_demo(&mut run, s),
        Experiment::VoleSimCompare(s) => vole_sim_compare(&mut run, s),
        Experiment::KilpisjarviFit(s) => kilpisjarvi_fit(&mut run, s),
        Experiment::LyapunovPosterior(s) => lyapunov_experiment(&mut run, s),
        Experiment::LgssmOracle(s) => lgssm_oracle(&mut run, s),
    });
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: cfg.experiment.kind().into(),
        config: cfg.clone(),
        seeds: run.seeds,
        artifacts: run.artifacts,
        counts: run.counts,
        status: if outcome.is_ok() { RunStatus::Ok } else { RunStatus::Error },
        error: outcome.as_ref().err().map(|e| e.to_string()),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out_dir.join("manifest.json"), text)?;
    outcome.map(|()| manifest)
}

/// Re-runs the configuration recorded in a manifest.
pub fn rerun_from_manifest(manifest: impl AsRef<Path>, out_dir: &Path) -> Result<Manifest> {
    run_experiment(&Manifest::load(manifest)?.config, out_dir)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// `exp(l - max l)`: a log-likelihood curve on the natural scale.
fn relative_likelihood(l: &[f64]) -> Vec<f64> {
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    l.iter().map(|v| (v - top).exp()).collect()
}

fn argmax(grid: &[f64], values: &[f64]) -> f64 {
    let i = (0..values.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best });
    grid[i]
}

fn ricker_scaling(run: &mut Run, s: &RickerScalingSpec) -> Result<()> {
    let grid = s.grid();
    let cfg = ScalingExperimentConfig {
        t_len: s.t_len,
        n_cov_sims: s.n_cov_sims,
        smc: SmcAbcConfig { max_sims_per_round: s.max_sims_per_round, ..SmcAbcConfig::new(s.n_pop, s.stop_accept_ratio) },
        ..Default::default()
    };
    for rep in 0..s.reps as u64 {
        run.seed(format!("rep {rep} observed series"), &[rep, 0]);
        for k in 0..grid.len() as u64 {
            run.seed(format!("rep {rep} grid {k} covariance"), &[rep, 1, k]);
            run.seed(format!("rep {rep} grid {k} smc-abc"), &[rep, 2, k]);
        }
    }
    let rows = scaling_matrix_experiment(&grid, s.reps, &cfg, run.root)?;
    run.write("scaling.csv", |buf| write_scaling_csv(&rows, buf))?;
    let x: Vec<f64> = rows.iter().map(|r| r.v).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.final_tolerance).collect();
    let mean_at = |v: f64| {
        let t: Vec<f64> = rows.iter().filter(|r| r.v == v).map(|r| r.final_tolerance).collect();
        t.iter().sum::<f64>() / t.len() as f64
    };
    let mean_tolerance: Vec<_> = grid.iter().map(|v| json!({ "v": v, "mean_tolerance": mean_at(*v) })).collect();
    let fit = if grid.len() >= 3 { Some(quadratic_fit(&x, &y)?) } else { None };
    run.counts.insert("truncated_runs".into(), rows.iter().filter(|r| r.truncated).count());
    run.write_json(
        "summary.json",
        &json!({
            "quadratic_coefficients": fit,
            "quadratic_argmin": fit.map(|c| quadratic_argmin(c, s.grid_lo, s.grid_hi)),
            "mean_tolerance": mean_tolerance,
        }),
    )
}

fn exp_sl_demo(run: &mut Run, s: &ExpSlDemoSpec) -> Result<()> {
    let grid = s.grid();
    let mut curves = Vec::new();
    let mut report = Vec::new();
    for (k, &n) in s.sample_sizes.iter().enumerate() {
        let data_seed = run.seed(format!("N={n} observed sample"), &[k as u64, 0]);
        let sl_seed = run.seed(format!("N={n} synthetic likelihood (common to all alpha)"), &[k as u64, 1]);
        let x = exponential_simulate(s.alpha_true, n, data_seed)?;
        let stat = n as f64 / x.iter().sum::<f64>();
        let sim = ExponentialRateStat { n };
        let s_obs = SummaryVector::from_values(vec![stat])?;
        let sl: Vec<f64> = grid
            .iter()
            .map(|a| {
                let theta = ParamVec::from_pairs(&[(ExponentialRateStat::PARAM, *a)]);
                Ok(sl_estimate(&sim, &theta, &s_obs, s.m, sl_seed, &SynlikConfig::default())?.log_sl)
            })
            .collect::<Result<_>>()?;
        let exact: Vec<f64> = grid.iter().map(|a| sim.analytic_loglik(*a, stat)).collect();
        report.push(json!({
            "n": n,
            "s_obs": stat,
            "sl_argmax": argmax(&grid, &sl),
            "analytic_argmax": argmax(&grid, &exact),
            "correlation": pearson(&sl, &exact),
            "likelihood_correlation": pearson(&relative_likelihood(&sl), &relative_likelihood(&exact)),
        }));
        curves.push((n, sl, exact));
    }
    run.write("sl_curve.csv", |buf| {
        writeln!(buf, "n,alpha,log_sl,analytic")?;
        for (n, sl, exact) in &curves {
            for i in 0..grid.len() {
                writeln!(buf, "{n},{},{},{}", grid[i], sl[i], exact[i])?;
            }
        }
        Ok(())
    })?;
    run.write_json("summary.json", &json!({ "curves": report }))
}

fn proposal_for(b: &McmcBudget) -> ProposalSpec {
    ProposalSpec { adapt: b.adapt, ..ProposalSpec::for_prior(&vole_prior(), b.step) }
}

/// Runs the requested chains on one vole series. Seeds are drawn from
/// `path + [0]` (SLMH) and `path + [1]` (PMMH).
#[allow(clippy::too_many_arguments)]
fn fit_vole(
    run: &mut Run,
    label: &str,
    path: &[u64],
    grid: VoleGrid,
    y: &[f64],
    method: FitMethod,
    init: &ParamVec,
    b: &McmcBudget,
) -> Result<Vec<(&'static str, Chain)>> {
    let prior = vole_prior();
    let proposal = proposal_for(b);
    let mut chains = Vec::new();
    let with = |extra: u64| [path, &[extra]].concat();
    if method.runs_sl() {
        let seed = run.seed(format!("{label} slmh chain"), &with(0));
        let s_obs = vole_summaries(y)?;
        let cfg = MhConfig { n_iter: b.iterations, burn_in: b.burn_in, refresh_current: false, seed };
        let sim = VoleStats::new(grid.clone());
        chains.push(("slmh", slmh(&sim, &s_obs, b.budget, SynlikConfig::default(), &prior, &proposal, init, &cfg)?));
    }
    if method.runs_pf() {
        let seed = run.seed(format!("{label} pmmh chain"), &with(1));
        let cfg = MhConfig { n_iter: b.iterations, burn_in: b.burn_in, refresh_current: false, seed };
        let family = VoleFamily::new(grid);
        chains.push(("pmmh", pmmh(&family, y, b.budget, b.replicates, &prior, &proposal, init, &cfg)?));
    }
    Ok(chains)
}

fn chain_report(method: &str, dataset: Option<usize>, c: &Chain) -> Result<serde_json::Value> {
    Ok(json!({
        "method": method,
        "dataset": dataset,
        "acceptance": c.post_burn_in_acceptance(),
        "plugin_failures": c.plugin_failures,
        "final_steps": c.final_steps,
        "posterior": posterior_summary(c)?,
    }))
}

fn vole_sim_compare(run: &mut Run, s: &VoleCompareSpec) -> Result<()> {
    let grid = VoleGrid::standard();
    let init = s.init.clone().unwrap_or_else(|| s.truth.to_params());
    let mut datasets = Vec::new();
    let mut all = Vec::new();
    for i in 0..s.datasets {
        let seed = run.seed(format!("dataset {i} simulation"), &[i as u64, 0]);
        let traj = simulate_on_grid(&grid, &s.truth, s.init_state, seed)?;
        let chains =
            fit_vole(run, &format!("dataset {i}"), &[i as u64, 1], grid.clone(), &traj.obs, FitMethod::Both, &init, &s.mcmc)?;
        datasets.push(traj);
        all.extend(chains.into_iter().map(|(m, c)| (m, i, c)));
    }
    run.write("datasets.csv", |buf| {
        writeln!(buf, "dataset,time,obs")?;
        for (i, t) in datasets.iter().enumerate() {
            for (time, y) in t.times.iter().zip(&t.obs) {
                writeln!(buf, "{i},{time},{y}")?;
            }
        }
        Ok(())
    })?;
    let labelled: Vec<(&str, Option<usize>, &Chain)> = all.iter().map(|(m, i, c)| (*m, Some(*i), c)).collect();
    run.write("chain.csv", |buf| write_chains_csv(&labelled, buf))?;
    let sl: Vec<Chain> = all.iter().filter(|x| x.0 == "slmh").map(|x| x.2.clone()).collect();
    let pf: Vec<Chain> = all.iter().filter(|x| x.0 == "pmmh").map(|x| x.2.clone()).collect();
    let table = compare_estimators(&s.truth.to_params(), &sl, &pf)?;
    run.write("comparison.csv", |buf| table.write_csv(buf))?;

    let truth = s.truth.to_params();
    let mut coverage = BTreeMap::new();
    for (method, chains) in [("slmh", &sl), ("pmmh", &pf)] {
        let mut per_param = BTreeMap::new();
        for name in ["r", "e", "s"] {
            let t = truth.require(name)?;
            let mut hits = 0;
            for c in chains.iter() {
                let p = posterior_summary(c)?;
                let q = p.iter().find(|q| q.name == name).ok_or_else(|| invalid("missing parameter"))?;
                hits += usize::from((q.mean - t).abs() <= 2.0 * q.sd);
            }
            per_param.insert(name, hits);
        }
        coverage.insert(method, per_param);
    }
    let chains: Vec<_> = all.iter().map(|(m, i, c)| chain_report(m, Some(*i), c)).collect::<Result<_>>()?;
    run.write_json(
        "summary.json",
        &json!({
            "truth": truth,
            "chains": chains,
            "comparison": table,
            "within_two_sd": coverage,
        }),
    )
}

fn kilpisjarvi_fit(run: &mut Run, s: &FitSpec) -> Result<()> {
    let series = load_voles_csv(&s.data)?;
    let grid = VoleGrid::new(series.obs_times(), DEFAULT_DT, DEFAULT_WARMUP_YEARS)?;
    let y = series.obs();
    let init = s.init.clone().unwrap_or_else(|| vole_prior().default_init());
    let chains = fit_vole(run, "fit", &[0], grid.clone(), &y, s.method, &init, &s.mcmc)?;
    let labelled: Vec<(&str, Option<usize>, &Chain)> = chains.iter().map(|(m, c)| (*m, None, c)).collect();
    run.write("chain.csv", |buf| write_chains_csv(&labelled, buf))?;

    let mut normality = None;
    if s.normality_sims > 0 {
        let (method, chain) = &chains[0];
        let means: Vec<f64> = posterior_summary(chain)?.iter().map(|p| p.mean).collect();
        let theta = ParamVec::new(chain.names.iter().cloned(), means)?;
        let seed = run.seed(format!("normality statistics at {method} posterior mean"), &[1]);
        let sim = VoleStats::new(grid);
        let (stats, failed) = simulate_batch(&sim, &theta, s.normality_sims, seed)?;
        run.counts.insert("normality_failed_sims".into(), failed);
        let s_obs = vole_summaries(&y)?;
        let report = krzanowski_report(&stats, sim.stat_names().as_slice(), s_obs.values())?;
        run.write("qq.csv", |buf| report.write_qq_csv(buf))?;
        normality = Some(json!({
            "at": method,
            "obs_mahalanobis": report.obs_mahalanobis,
            "qq_slope": report.qq_slope,
            "jitter": report.jitter,
        }));
    }

    let mut lyapunov = Vec::new();
    if s.lyapunov_draws > 0 {
        let mut posts = Vec::new();
        for (k, (method, chain)) in chains.iter().enumerate() {
            let seed = run.seed(format!("{method} lyapunov draws"), &[2, k as u64]);
            let post = lyapunov_posterior(chain, s.lyapunov_draws, s.transient_months, s.horizon_months, seed)?;
            *run.counts.entry("lyapunov_missing".into()).or_default() += post.n_failed();
            lyapunov.push(json!({ "method": method, "median": post.median(), "missing": post.n_failed() }));
            posts.push((*method, post));
        }
        run.write("lyapunov.csv", |buf| {
            writeln!(buf, "method,draw,row,lambda")?;
            for (method, post) in &posts {
                for (i, (r, l)) in post.rows.iter().zip(&post.lambdas).enumerate() {
                    writeln!(buf, "{method},{i},{r},{}", l.map_or(String::new(), |v| v.to_string()))?;
                }
            }
            Ok(())
        })?;
    }
    let reports: Vec<_> = chains.iter().map(|(m, c)| chain_report(m, None, c)).collect::<Result<_>>()?;
    run.write_json(
        "summary.json",
        &json!({
            "n_obs": series.len(),
            "chains": reports,
            "normality": normality,
            "lyapunov": lyapunov,
        }),
    )
}

fn lyapunov_experiment(run: &mut Run, s: &LyapunovSpec) -> Result<()> {
    let chain = match &s.chain {
        Some(path) => read_chain_csv(path, s.method.as_deref(), s.burn_in)?,
        None => Chain {
            names: s.params.names().to_vec(),
            draws: vec![s.params.values().to_vec(); s.n_draws],
            loglik: vec![0.0; s.n_draws],
            accepted: vec![false; s.n_draws],
            burn_in: 0,
            seed: 0,
            final_steps: Vec::new(),
            plugin_failures: 0,
        },
    };
    let seed = run.seed("lyapunov draws", &[0]);
    let post = lyapunov_posterior(&chain, s.n_draws, s.transient_months, s.horizon_months, seed)?;
    run.counts.insert("lyapunov_missing".into(), post.n_failed());
    run.write("lyapunov.csv", |buf| post.write_csv(buf))?;
    run.write_json(
        "summary.json",
        &json!({ "median": post.median(), "missing": post.n_failed(), "n_draws": s.n_draws }),
    )
}

fn lgssm_oracle(run: &mut Run, s: &LgssmOracleSpec) -> Result<()> {
    let params = LgSsmParams { a_coef: s.a, c_coef: s.c, q_var: s.q, r_var: s.r, m0: s.m0, p0: s.p0 };
    let data_seed = run.seed("observations", &[0]);
    let y = lg_ssm_simulate(&params, s.t_len, data_seed)?.obs;
    let exact = kalman_loglik(&params, &y)?;
    let seeds: Vec<u64> = (0..s.n_seeds).map(|i| run.seed(format!("filter {i}"), &[1, i as u64])).collect();
    let estimates: Vec<f64> = seeds
        .par_iter()
        .map(|seed| Ok(sir_filter(&params, &y, s.particles, *seed)?.estimate.value))
        .collect::<Result<_>>()?;
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mcse = sd / n.sqrt();
    run.write("pf_estimates.csv", |buf| {
        writeln!(buf, "replicate,seed,loglik")?;
        for (i, (seed, v)) in seeds.iter().zip(&estimates).enumerate() {
            writeln!(buf, "{i},{seed},{v}")?;
        }
        Ok(())
    })?;
    run.write_json(
        "summary.json",
        &json!({
            "kalman_loglik": exact,
            "mean_estimate": mean,
            "sd_estimate": sd,
            "mcse": mcse,
            "z": (mean - exact) / mcse,
            "within_3_mcse": (mean - exact).abs() <= 3.0 * mcse,
        }),
    )
}

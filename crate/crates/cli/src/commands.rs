use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use popdyn_infer::diagnostics::krzanowski_report;
use popdyn_infer::error::Error;
use popdyn_infer::harness::{
    rerun_from_manifest, run_experiment, Experiment, ExperimentConfig, FitMethod, FitSpec, LyapunovSpec, Manifest,
    ObservedSeries, Preset, RunStatus, Season,
};
use popdyn_infer::models::lgssm::lg_ssm_simulate;
use popdyn_infer::models::ricker::DEFAULT_N0;
use popdyn_infer::models::vole::{sample_initial_state, simulate_on_grid, DEFAULT_DT, DEFAULT_WARMUP_YEARS};
use popdyn_infer::models::{
    ricker_simulate, LgSsmFamily, LgSsmParams, ModelFamily, RickerFamily, RickerParams, VoleFamily, VoleGrid,
    VoleParams,
};
use popdyn_infer::pfilter::{averaged_loglik, sir_filter, write_diagnostics_csv};
use popdyn_infer::rng::{derive_seed, stream};
use popdyn_infer::samplers::{ricker_prior, smc_abc, SmcAbcConfig};
use popdyn_infer::simulators::{RickerStats, StatSimulator, VoleStats};
use popdyn_infer::summaries::{ricker_summaries, vole_summaries, ScalingMatrix, SummaryVector};
use popdyn_infer::synlik::{sample_mean_cov, simulate_batch, sl_estimate, SynlikConfig};
use popdyn_infer::{ParamVec, Result};
use serde_json::json;

use crate::series::{load_series, Series};
use crate::{Cli, Command, DiagnoseKind, Method, Model};

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn require_seed(cli: &Cli) -> Result<u64> {
    cli.seed.ok_or_else(|| usage("--seed is required for this command"))
}

fn no_config(cli: &Cli) -> Result<()> {
    match cli.config {
        Some(_) => Err(usage("--config is only used by `experiment` and `mcmc`")),
        None => Ok(()),
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn lgssm_base() -> LgSsmParams {
    LgSsmParams { a_coef: 0.9, c_coef: 1.0, q_var: 0.5, r_var: 0.8, m0: 0.0, p0: 1.0 }
}

/// Default parameters of `model` with the `name=value` overrides applied.
fn model_params(model: Model, overrides: &str) -> Result<ParamVec> {
    let mut theta = match model {
        Model::Ricker => RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 }.to_params(),
        Model::Vole => VoleParams::simulation_truth().to_params(),
        Model::Lgssm => ParamVec::from_pairs(&[("a", 0.9), ("c", 1.0), ("q", 0.5), ("r", 0.8)]),
    };
    theta.merge(&ParamVec::parse_assignments(overrides)?)?;
    Ok(theta)
}

fn vole_grid(series: &Series) -> Result<VoleGrid> {
    match &series.times {
        Some(t) => VoleGrid::new(t.clone(), DEFAULT_DT, DEFAULT_WARMUP_YEARS),
        None => Err(usage("vole data needs observation times (`year,season,index` or a `time` column)")),
    }
}

fn summaries(model: Model, y: &[f64]) -> Result<SummaryVector> {
    match model {
        Model::Ricker => ricker_summaries(y),
        Model::Vole => vole_summaries(y),
        Model::Lgssm => Err(usage("the linear-Gaussian model has no summary statistics")),
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a.model, &a.params, a.t_len),
        Command::Summarize(a) => summarize(cli, a.model, &a.data),
        Command::SlEval(a) => sl_eval(cli, a),
        Command::PfEval(a) => pf_eval(cli, a),
        Command::Mcmc(a) => mcmc(cli, a),
        Command::Abc(a) => abc(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Diagnose(a) => diagnose(cli, &a.kind),
    }
}

fn simulate(cli: &Cli, model: Model, params: &str, t_len: Option<usize>) -> Result<()> {
    no_config(cli)?;
    let seed = require_seed(cli)?;
    let dir = out_dir(cli)?;
    let theta = model_params(model, params)?;
    let traj = match model {
        Model::Ricker => ricker_simulate(&RickerParams::from_params(&theta)?, t_len.unwrap_or(50), DEFAULT_N0, seed)?,
        Model::Lgssm => lg_ssm_simulate(&lgssm_base().with_overrides(&theta)?, t_len.unwrap_or(50), seed)?,
        Model::Vole => {
            let n = t_len.unwrap_or(90);
            let year: Vec<i32> = (0..n).map(|i| 1952 + (i / 2) as i32).collect();
            let season: Vec<Season> =
                (0..n).map(|i| if i % 2 == 0 { Season::Spring } else { Season::Autumn }).collect();
            let times: Vec<f64> = year.iter().zip(&season).map(|(y, s)| *y as f64 + s.year_fraction()).collect();
            let grid = VoleGrid::new(times, DEFAULT_DT, DEFAULT_WARMUP_YEARS)?;
            let init = sample_initial_state(&mut stream(seed, &[0]));
            let traj = simulate_on_grid(&grid, &VoleParams::from_params(&theta)?, init, derive_seed(seed, &[1]))?;
            let counts = traj.obs.iter().map(|y| *y as u64).collect();
            let mut w = create(&dir, "voles.csv")?;
            ObservedSeries::from_counts(year, season, counts)?.write_csv(&mut w)?;
            w.flush()?;
            traj
        }
    };
    let mut w = create(&dir, "series.csv")?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {} observations to {}", traj.len(), dir.display());
    Ok(())
}

fn summarize(cli: &Cli, model: Model, data: &Path) -> Result<()> {
    no_config(cli)?;
    let s = summaries(model, &load_series(data)?.obs)?;
    let dir = out_dir(cli)?;
    let mut w = create(&dir, "summaries.csv")?;
    writeln!(w, "name,value")?;
    for (name, v) in s.names().iter().zip(s.values()) {
        writeln!(w, "{name},{v}")?;
        println!("{name:>12} {v:.6}");
    }
    w.flush()?;
    Ok(())
}

fn sl_eval(cli: &Cli, a: &crate::SlEvalArgs) -> Result<()> {
    no_config(cli)?;
    let seed = require_seed(cli)?;
    let series = load_series(&a.data)?;
    let theta = model_params(a.model, &a.params)?;
    let s_obs = summaries(a.model, &series.obs)?;
    let cfg = SynlikConfig { shrinkage: a.shrinkage, ..Default::default() };
    fn eval<S: StatSimulator>(sim: &S, t: &ParamVec, s: &SummaryVector, m: usize, seed: u64, c: &SynlikConfig) -> Result<popdyn_infer::synlik::SynlikFit> {
        sl_estimate(sim, t, s, m, seed, c)
    }
    let fit = match a.model {
        Model::Ricker => eval(&RickerStats::new(series.obs.len()), &theta, &s_obs, a.m, seed, &cfg)?,
        Model::Vole => eval(&VoleStats::new(vole_grid(&series)?), &theta, &s_obs, a.m, seed, &cfg)?,
        Model::Lgssm => unreachable!("rejected by summaries"),
    };
    println!("log synthetic likelihood: {}", fit.log_sl);
    write_json(&out_dir(cli)?, "sl.json", &json!({ "theta": theta, "seed": seed, "fit": fit }))
}

fn pf_eval(cli: &Cli, a: &crate::PfEvalArgs) -> Result<()> {
    no_config(cli)?;
    let seed = require_seed(cli)?;
    let series = load_series(&a.data)?;
    let theta = model_params(a.model, &a.params)?;
    let dir = out_dir(cli)?;
    fn run<F: ModelFamily>(f: &F, theta: &ParamVec, y: &[f64], a: &crate::PfEvalArgs, seed: u64, dir: &Path) -> Result<f64> {
        let estimate = if a.replicates == 1 {
            let r = sir_filter(&f.bind(theta)?, y, a.particles, seed)?;
            let mut w = create(dir, "pf_steps.csv")?;
            write_diagnostics_csv(&r.steps, &mut w)?;
            w.flush()?;
            r.estimate
        } else {
            averaged_loglik(f, theta, y, a.particles, a.replicates, seed)?
        };
        write_json(dir, "pf.json", &json!({ "theta": theta, "replicates": a.replicates, "estimate": estimate }))?;
        Ok(estimate.value)
    }
    let value = match a.model {
        Model::Ricker => run(&RickerFamily::default(), &theta, &series.obs, a, seed, &dir)?,
        Model::Vole => run(&VoleFamily::new(vole_grid(&series)?), &theta, &series.obs, a, seed, &dir)?,
        Model::Lgssm => run(&LgSsmFamily { base: lgssm_base() }, &theta, &series.obs, a, seed, &dir)?,
    };
    println!("log-likelihood estimate: {value}");
    Ok(())
}

fn print_manifest(m: &Manifest, dir: &Path) {
    println!("{} finished in {:.1}s; outputs in {}", m.kind, m.wall_time_secs, dir.display());
    for a in &m.artifacts {
        println!("  {} ({} bytes)", a.file, a.bytes);
    }
}

/// Reads a config file and applies `--seed` on top of it.
fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if let (Some(seed), Some(obj)) = (seed, value.as_object_mut()) {
        obj.insert("seed".into(), json!(seed));
    }
    ExperimentConfig::from_json(&value.to_string())
}

fn run_config(cli: &Cli, cfg: &ExperimentConfig) -> Result<Manifest> {
    let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let m = run_experiment(cfg, &dir)?;
    print_manifest(&m, &dir);
    Ok(m)
}

fn mcmc(cli: &Cli, a: &crate::McmcArgs) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, cli.seed)?,
        None => ExperimentConfig::new(require_seed(cli)?, Experiment::preset("kilpisjarvi-fit", Preset::Desk)?),
    };
    let Experiment::KilpisjarviFit(spec) = &mut cfg.experiment else {
        return Err(usage("mcmc expects a kilpisjarvi-fit configuration"));
    };
    apply_fit_overrides(spec, a);
    if cli.config.is_none() && a.data.is_none() {
        return Err(usage("--data is required without --config"));
    }
    cfg.validate()?;
    let m = run_config(cli, &cfg)?;
    let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    if m.status == RunStatus::Ok {
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
        for chain in summary["chains"].as_array().into_iter().flatten() {
            println!("{} (acceptance {:.3})", chain["method"].as_str().unwrap_or("?"), chain["acceptance"].as_f64().unwrap_or(f64::NAN));
            for p in chain["posterior"].as_array().into_iter().flatten() {
                println!(
                    "  {:>6} {:>12.4} ({:.4})",
                    p["name"].as_str().unwrap_or("?"),
                    p["mean"].as_f64().unwrap_or(f64::NAN),
                    p["sd"].as_f64().unwrap_or(f64::NAN)
                );
            }
        }
    }
    Ok(())
}

fn apply_fit_overrides(spec: &mut FitSpec, a: &crate::McmcArgs) {
    if let Some(d) = &a.data {
        spec.data = d.clone();
    }
    if let Some(m) = a.method {
        spec.method = match m {
            Method::Slmh => FitMethod::Slmh,
            Method::Pmmh => FitMethod::Pmmh,
            Method::Both => FitMethod::Both,
        };
    }
    if let Some(n) = a.iterations {
        spec.mcmc.iterations = n;
    }
    if let Some(n) = a.burn_in {
        spec.mcmc.burn_in = n;
    }
    if let Some(n) = a.budget {
        spec.mcmc.budget = n;
    }
    if let Some(n) = a.normality_sims {
        spec.normality_sims = n;
    }
}

fn abc(cli: &Cli, a: &crate::AbcArgs) -> Result<()> {
    no_config(cli)?;
    let seed = require_seed(cli)?;
    let series = load_series(&a.data)?;
    let s_obs = ricker_summaries(&series.obs)?;
    let prior = ricker_prior();
    let mut theta_p = prior.default_init();
    theta_p.merge(&ParamVec::parse_assignments(&a.scaling_at)?)?;
    let sim = RickerStats::new(series.obs.len());
    let (stats, _) = simulate_batch(&sim, &theta_p, a.cov_sims, derive_seed(seed, &[0]))?;
    let (_, sigma) = sample_mean_cov(&stats)?;
    let scaling = ScalingMatrix::from_covariance(&sigma)?;
    let cfg = SmcAbcConfig { max_rounds: a.max_rounds, ..SmcAbcConfig::new(a.n_pop, a.stop) };
    let res = smc_abc(&prior, &sim, &s_obs, &scaling, &cfg, derive_seed(seed, &[1]))?;
    let dir = out_dir(cli)?;
    let mut w = create(&dir, "populations.csv")?;
    res.write_csv(&mut w)?;
    w.flush()?;
    println!("{} populations, final tolerance {}", res.populations.len(), res.final_tolerance());
    write_json(
        &dir,
        "summary.json",
        &json!({
            "scaling_at": theta_p,
            "tolerances": res.tolerances,
            "final_acceptance_ratio": res.final_acceptance_ratio,
            "truncated": res.truncated,
            "total_simulations": res.total_simulations,
            "posterior_mean": ParamVec::new(res.names.clone(), res.posterior_mean())?,
        }),
    )
}

fn experiment(cli: &Cli, a: &crate::ExperimentArgs) -> Result<()> {
    if let Some(manifest) = &a.rerun {
        let dir = cli.out.clone().ok_or_else(|| usage("--out is required with --rerun"))?;
        let m = rerun_from_manifest(manifest, &dir)?;
        print_manifest(&m, &dir);
        return Ok(());
    }
    let cfg = match (&cli.config, &a.kind) {
        (Some(path), None) => load_config(path, cli.seed)?,
        (None, Some(kind)) => {
            ExperimentConfig::new(require_seed(cli)?, Experiment::preset(kind, a.preset.parse()?)?)
        }
        (Some(_), Some(_)) => return Err(usage("use either --config or --kind")),
        (None, None) => return Err(usage("one of --config, --kind or --rerun is required")),
    };
    run_config(cli, &cfg).map(|_| ())
}

fn diagnose(cli: &Cli, kind: &DiagnoseKind) -> Result<()> {
    no_config(cli)?;
    let seed = require_seed(cli)?;
    match kind {
        DiagnoseKind::Normality { data, params, m } => {
            let series = load_series(data)?;
            let theta = model_params(Model::Vole, params)?;
            let sim = VoleStats::new(vole_grid(&series)?);
            let (stats, failed) = simulate_batch(&sim, &theta, *m, seed)?;
            let s_obs = vole_summaries(&series.obs)?;
            let report = krzanowski_report(&stats, sim.stat_names().as_slice(), s_obs.values())?;
            let dir = out_dir(cli)?;
            let mut w = create(&dir, "qq.csv")?;
            report.write_qq_csv(&mut w)?;
            w.flush()?;
            println!("q-q slope {:.4}, observed distance {:.4}", report.qq_slope, report.obs_mahalanobis);
            write_json(
                &dir,
                "normality.json",
                &json!({
                    "theta": theta,
                    "failed_sims": failed,
                    "qq_slope": report.qq_slope,
                    "obs_mahalanobis": report.obs_mahalanobis,
                    "jitter": report.jitter,
                }),
            )
        }
        DiagnoseKind::Lyapunov { chain, method, burn_in, params, draws, transient, horizon } => {
            let mut fixed = VoleParams::kilpisjarvi_slmh_means().to_params();
            fixed.merge(&ParamVec::parse_assignments(params)?)?;
            let spec = LyapunovSpec {
                chain: chain.clone(),
                method: method.clone(),
                burn_in: *burn_in,
                params: fixed,
                n_draws: *draws,
                transient_months: *transient,
                horizon_months: *horizon,
            };
            run_config(cli, &ExperimentConfig::new(seed, Experiment::LyapunovPosterior(spec))).map(|_| ())
        }
    }
}

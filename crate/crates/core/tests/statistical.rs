//! Monte Carlo checks against analytic or independently computed values.

use rand_distr::{Distribution, StandardNormal};

use popdyn_infer::diagnostics::{
    batch_means_mcse, compare_estimators, lyapunov_exponent, lyapunov_posterior, posterior_summary, LogisticMap,
    DEFAULT_DELTA0,
};
use popdyn_infer::models::{
    lg_ssm_simulate, ricker_simulate, vole::default_obs_times, vole_simulate, LgSsmFamily, LgSsmParams, RickerParams,
    VoleParams,
};
use popdyn_infer::pfilter::{averaged_loglik, multinomial_resample};
use popdyn_infer::rng::stream;
use popdyn_infer::samplers::{
    abc_rejection, mh_chain, ricker_prior, slmh, smc_abc, Chain, FnLogLik, MhConfig, PriorComponent, PriorDist,
    PriorSpec, ProposalSpec, SmcAbcConfig,
};
use popdyn_infer::simulators::{GaussianToy, RickerStats, StatSimulator};
use popdyn_infer::summaries::{
    autocovariance, ordered_diff_cubic, power_regression, ricker_summaries, vole_summaries, ScalingMatrix,
};
use popdyn_infer::synlik::{sl_estimate, SynlikConfig};
use popdyn_infer::ParamVec;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn lgssm() -> LgSsmParams {
    LgSsmParams { a_coef: 0.9, c_coef: 1.0, q_var: 0.5, r_var: 0.8, m0: 0.0, p0: 1.0 }
}

fn uniform_prior(name: &str, lower: f64, upper: f64) -> PriorSpec {
    PriorSpec::new(vec![PriorComponent::new(name, PriorDist::Uniform { lower, upper })]).unwrap()
}

fn iid_chain(name: &str, x: Vec<f64>) -> Chain {
    let n = x.len();
    Chain {
        names: vec![name.into()],
        draws: x.into_iter().map(|v| vec![v]).collect(),
        loglik: vec![0.0; n],
        accepted: vec![true; n],
        burn_in: 0,
        seed: 0,
        final_steps: vec![0.0],
        plugin_failures: 0,
    }
}

// ---- summaries ----

#[test]
fn ricker_set_equals_primitives() {
    let tr = ricker_simulate(&RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 }, 50, 1.0, 11).unwrap();
    let y = &tr.obs;
    let s = ricker_summaries(y).unwrap();
    for k in 0..=5 {
        assert_eq!(s.values()[k], autocovariance(y, k).unwrap());
    }
    assert_eq!(s.get("mean").unwrap(), y.iter().sum::<f64>() / y.len() as f64);
    assert_eq!(s.get("n_zeros").unwrap(), y.iter().filter(|v| **v == 0.0).count() as f64);
    assert_eq!(&s.values()[8..11], ordered_diff_cubic(y).unwrap().coef.as_slice());
    assert_eq!(&s.values()[11..13], power_regression(y).unwrap().coef.as_slice());
}

#[test]
fn statistics_are_finite_over_many_runs() {
    let rp = RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 };
    let vp = VoleParams::simulation_truth();
    let times = default_obs_times();
    for seed in 0..1000 {
        let y = ricker_simulate(&rp, 50, 1.0, seed).unwrap().obs;
        let s = ricker_summaries(&y).unwrap();
        assert_eq!(s.dim(), 13);
        assert!(s.values().iter().all(|v| v.is_finite()), "Ricker seed {seed}");
        let y = vole_simulate(&vp, &times, 0.01, 10.0, (0.5, 0.1), seed).unwrap().obs;
        let s = vole_summaries(&y).unwrap();
        assert_eq!(s.dim(), 17);
        assert!(s.values().iter().all(|v| v.is_finite()), "vole seed {seed}");
    }
}

#[test]
fn lag_zero_autocovariance_dominates_on_ar1() {
    // x_t = 0.7 x_{t-1} + e_t: gamma_k = 0.7^k / (1 - 0.49).
    let mut rng = stream(3, &[]);
    let mut x = vec![0.0; 20_000];
    for t in 1..x.len() {
        let e: f64 = StandardNormal.sample(&mut rng);
        x[t] = 0.7 * x[t - 1] + e;
    }
    let g0 = autocovariance(&x, 0).unwrap();
    assert!(g0 >= 0.0);
    assert!((g0 - 1.0 / 0.51).abs() < 0.1, "{g0}");
    for k in 1..=5 {
        assert!(g0 >= autocovariance(&x, k).unwrap().abs());
    }
}

// ---- synthetic likelihood ----

#[test]
fn sl_variance_falls_with_budget() {
    let sim = RickerStats::new(50);
    let truth = RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 }.to_params();
    let s_obs = sim.simulate_stats(&truth, &mut stream(1, &[])).unwrap();
    let cfg = SynlikConfig::default();
    let spread = |m: usize| {
        let v: Vec<f64> = (0..50).map(|k| sl_estimate(&sim, &truth, &s_obs, m, 100 + k, &cfg).unwrap().log_sl).collect();
        var(&v)
    };
    let (v100, v1000) = (spread(100), spread(1000));
    assert!(v1000 < v100, "{v100} vs {v1000}");
}

// ---- particle filter ----

#[test]
fn offspring_counts_are_unbiased() {
    let w = [0.05, 0.1, 0.15, 0.3, 0.4];
    let (m, reps) = (10usize, 10_000usize);
    let mut totals = [0usize; 5];
    let mut rng = stream(8, &[]);
    for _ in 0..reps {
        for i in multinomial_resample(&w, m, &mut rng).unwrap() {
            totals[i] += 1;
        }
    }
    for (i, wi) in w.iter().enumerate() {
        let avg = totals[i] as f64 / reps as f64;
        let se = (m as f64 * wi * (1.0 - wi) / reps as f64).sqrt();
        assert!((avg - m as f64 * wi).abs() < 3.0 * se, "particle {i}: {avg} vs {}", m as f64 * wi);
    }
}

#[test]
fn likelihood_estimate_is_unbiased_on_natural_scale() {
    let p = lgssm();
    let y = lg_ssm_simulate(&p, 10, 4).unwrap().obs;
    let exact = popdyn_infer::models::kalman_loglik(&p, &y).unwrap();
    let family = LgSsmFamily { base: p };
    let none = ParamVec::new(Vec::<String>::new(), vec![]).unwrap();
    for c in [1usize, 4] {
        let ratios: Vec<f64> = (0..200)
            .map(|k| (averaged_loglik(&family, &none, &y, 100 * c, c, 1000 + k).unwrap().value - exact).exp())
            .collect();
        let se = (var(&ratios) / ratios.len() as f64).sqrt();
        assert!((mean(&ratios) - 1.0).abs() < 3.0 * se, "c = {c}: {} +- {se}", mean(&ratios));
    }
}

// ---- samplers ----

#[test]
fn mh_recovers_standard_normal_moments() {
    let target = FnLogLik(|t: &ParamVec, _| Ok(-0.5 * t.values()[0].powi(2)));
    let prior = uniform_prior("x", -1e6, 1e6);
    let proposal = ProposalSpec::for_prior(&prior, 2.4);
    let init = ParamVec::from_pairs(&[("x", 0.0)]);
    let cfg = MhConfig { n_iter: 105_000, burn_in: 5_000, refresh_current: false, seed: 17 };
    let chain = mh_chain(&target, &prior, &proposal, &init, &cfg).unwrap();
    let x: Vec<f64> = chain.post_burn_in().iter().map(|r| r[0]).collect();
    let mcse = batch_means_mcse(&x, 50).unwrap();
    assert!(mean(&x).abs() < 3.0 * mcse, "{} +- {mcse}", mean(&x));
    assert!((var(&x) - 1.0).abs() < 0.1, "{}", var(&x));
    let acc = chain.post_burn_in_acceptance();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn rejection_abc_at_infinite_tolerance_returns_prior() {
    let prior = ricker_prior();
    let sim = RickerStats::new(50);
    let s_obs = sim.simulate_stats(&RickerParams { log_r: 3.8, sigma2: 0.3, phi: 10.0 }.to_params(), &mut stream(0, &[])).unwrap();
    let n = 10_000;
    let res = abc_rejection(&prior, &sim, &s_obs, n, f64::INFINITY, &ScalingMatrix::identity(13), 21).unwrap();
    assert_eq!(res.accepted.len() + res.n_failed, n);
    for (j, comp) in prior.components().iter().enumerate() {
        let (lo, hi) = comp.support();
        let x: Vec<f64> = res.accepted.iter().map(|p| p[j]).collect();
        assert!(x.iter().all(|v| (lo..=hi).contains(v)));
        let k = x.len() as f64;
        let w = hi - lo;
        let (mu, sigma2) = ((lo + hi) / 2.0, w * w / 12.0);
        let mu4 = w.powi(4) / 80.0;
        assert!((mean(&x) - mu).abs() < 3.0 * (sigma2 / k).sqrt(), "{}: mean {}", comp.name, mean(&x));
        assert!((var(&x) - sigma2).abs() < 3.0 * ((mu4 - sigma2 * sigma2) / k).sqrt(), "{}: var {}", comp.name, var(&x));
    }
}

#[test]
fn slmh_matches_conjugate_posterior() {
    // theta ~ N(0, 2²), s | theta ~ N(theta, 1), s_obs = 0.5:
    // posterior N(0.4, 0.8).
    let prior =
        PriorSpec::new(vec![PriorComponent::new(GaussianToy::PARAM, PriorDist::Normal { mean: 0.0, sd: 2.0 })]).unwrap();
    let s_obs = popdyn_infer::summaries::SummaryVector::new(GaussianToy.stat_names(), vec![0.5], false).unwrap();
    let proposal = ProposalSpec::for_prior(&prior, 2.0);
    let init = ParamVec::from_pairs(&[(GaussianToy::PARAM, 0.0)]);
    let cfg = MhConfig { n_iter: 22_000, burn_in: 2_000, refresh_current: false, seed: 5 };
    let chain = slmh(&GaussianToy, &s_obs, 200, SynlikConfig::default(), &prior, &proposal, &init, &cfg).unwrap();
    let x: Vec<f64> = chain.post_burn_in().iter().map(|r| r[0]).collect();
    let mcse = batch_means_mcse(&x, 40).unwrap();
    assert!((mean(&x) - 0.4).abs() < 3.0 * mcse, "{} +- {mcse}", mean(&x));
    assert!((var(&x) - 0.8).abs() < 0.1, "{}", var(&x));
}

#[test]
fn smc_abc_concentrates_on_gaussian_posterior() {
    // Flat prior on [-5, 5]: the exact posterior is N(s_obs, 1).
    let prior = uniform_prior(GaussianToy::PARAM, -5.0, 5.0);
    let s_obs = popdyn_infer::summaries::SummaryVector::new(GaussianToy.stat_names(), vec![1.2], false).unwrap();
    let res = smc_abc(&prior, &GaussianToy, &s_obs, &ScalingMatrix::identity(1), &SmcAbcConfig::new(500, 0.02), 9).unwrap();
    let last = res.last();
    let m: f64 = last.particles.iter().zip(&last.weights).map(|(p, w)| p[0] * w).sum();
    let v: f64 = last.particles.iter().zip(&last.weights).map(|(p, w)| (p[0] - m).powi(2) * w).sum();
    assert!(res.final_tolerance() < 0.05, "{}", res.final_tolerance());
    assert!((m - 1.2).abs() < 0.2, "{m}");
    assert!((v - 1.0).abs() < 0.3, "{v}");
}

// ---- diagnostics ----

#[test]
fn posterior_summary_of_iid_normal() {
    let mut rng = stream(12, &[]);
    let n = 100_000;
    let x: Vec<f64> = (0..n).map(|_| { let e: f64 = StandardNormal.sample(&mut rng); 5.0 + e }).collect();
    let s = &posterior_summary(&iid_chain("x", x)).unwrap()[0];
    assert!((s.mean - 5.0).abs() < 3.0 / (n as f64).sqrt());
    assert!((s.sd - 1.0).abs() < 3.0 / (2.0 * n as f64).sqrt());
    let flat = &posterior_summary(&iid_chain("x", vec![2.5; 10])).unwrap()[0];
    assert_eq!((flat.mean, flat.sd), (2.5, 0.0));
}

#[test]
fn comparison_rmse_of_unbiased_noise() {
    // Posterior means scattered around the truth with variance v.
    let v: f64 = 0.04;
    let n = 24;
    let mut rng = stream(30, &[]);
    let mut draw = |shift: f64| -> Vec<Chain> {
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                iid_chain("x", vec![1.0 + shift + v.sqrt() * e; 3])
            })
            .collect()
    };
    let (a, b) = (draw(0.0), draw(0.5));
    let truth = ParamVec::from_pairs(&[("x", 1.0)]);
    let row = &compare_estimators(&truth, &a, &b).unwrap().rows[0];
    assert!((row.a.rmse.powi(2) - v).abs() < 3.0 * v * (2.0 / n as f64).sqrt(), "{}", row.a.rmse);
    assert!(row.a.var_bias_ratio > 1.0, "{}", row.a.var_bias_ratio);
    assert!(row.b.var_bias_ratio < 1.0);
    assert!(row.mean_log_sq_diff < 0.0 && row.p_value < 0.01, "{row:?}");
}

#[test]
fn logistic_exponent_does_not_depend_on_renormalization_interval() {
    let l: Vec<f64> = [1, 5, 10]
        .iter()
        .map(|&tau| lyapunov_exponent(&LogisticMap { r: 4.0 }, &[0.3], 1000, 100_000, tau, DEFAULT_DELTA0).unwrap().lambda)
        .collect();
    for v in &l {
        assert!((v - l[0]).abs() < 0.01, "{l:?}");
    }
}

#[test]
fn identical_rows_give_identical_exponents() {
    let theta = VoleParams::kilpisjarvi_slmh_means().to_params();
    let chain = Chain {
        names: theta.names().to_vec(),
        draws: vec![theta.values().to_vec(); 4],
        loglik: vec![0.0; 4],
        accepted: vec![true; 4],
        burn_in: 0,
        seed: 0,
        final_steps: vec![0.0; 9],
        plugin_failures: 0,
    };
    let post = lyapunov_posterior(&chain, 3, 120, 1200, 7).unwrap();
    let v = post.values();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|x| x.to_bits() == v[0].to_bits()), "{v:?}");
}

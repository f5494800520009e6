//! Dimensionless vole-weasel model with Brownian noise on the prey equation.
//!
//! ```text
//! dn = [r(1 - e sin 2πt) n - r n² - g n²/(n² + h²) - a n p/(n + d)] dt + n σ dW
//! dp = [s(1 - e sin 2πt) p - s p²/n] dt
//! Y  ~ Poisson(φ n)
//! ```
//!
//! Integrated by Euler-Maruyama on a fixed grid that hits every observation
//! time exactly. Both states are floored at [`STATE_FLOOR`] after every step.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{poisson_draw, poisson_log_pmf, std_normal, ModelFamily, StateSpaceModel, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::params::ParamVec;
use crate::rng::{stream, StreamRng};

/// Lower bound applied to both states after every Euler step.
pub const STATE_FLOOR: f64 = 1e-6;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_WARMUP_YEARS: f64 = 10.0;
/// Support of the uniform initial-state distribution for both `n0` and `p0`.
pub const INIT_RANGE: (f64, f64) = (0.01, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoleParams {
    pub r: f64,
    pub e: f64,
    pub g: f64,
    pub h: f64,
    pub a: f64,
    pub d: f64,
    pub s: f64,
    pub sigma: f64,
    pub phi: f64,
}

impl VoleParams {
    pub const NAMES: [&'static str; 9] = ["r", "e", "g", "h", "a", "d", "s", "sigma", "phi"];

    /// Parameters used to generate the simulated datasets of the comparison study.
    pub fn simulation_truth() -> Self {
        Self { r: 4.5, e: 0.8, g: 0.2, h: 0.15, a: 8.0, d: 0.06, s: 1.0, sigma: 1.5, phi: 100.0 }
    }

    /// Posterior means reported for the Kilpisjarvi fit with synthetic likelihood.
    pub fn kilpisjarvi_slmh_means() -> Self {
        Self { r: 4.85, e: 0.78, g: 0.11, h: 0.1, a: 8.0, d: 0.07, s: 1.04, sigma: 8.4, phi: 270.5 }
    }

    /// Posterior means reported for the Kilpisjarvi fit with the particle filter.
    pub fn kilpisjarvi_pmmh_means() -> Self {
        Self { r: 5.11, e: 0.84, g: 0.14, h: 0.1, a: 6.3, d: 0.08, s: 1.04, sigma: 14.8, phi: 184.2 }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r", self.r),
            ("h", self.h),
            ("a", self.a),
            ("d", self.d),
            ("s", self.s),
            ("sigma", self.sigma),
            ("phi", self.phi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(invalid(format!("g must be >= 0, got {}", self.g)));
        }
        if !self.e.is_finite() {
            return Err(invalid("e must be finite"));
        }
        Ok(())
    }

    pub fn from_params(theta: &ParamVec) -> Result<Self> {
        let v = |n| theta.require(n);
        let p = Self {
            r: v("r")?,
            e: v("e")?,
            g: v("g")?,
            h: v("h")?,
            a: v("a")?,
            d: v("d")?,
            s: v("s")?,
            sigma: v("sigma")?,
            phi: v("phi")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_params(&self) -> ParamVec {
        ParamVec::new(
            Self::NAMES,
            vec![self.r, self.e, self.g, self.h, self.a, self.d, self.s, self.sigma, self.phi],
        )
        .expect("static names")
    }

    /// Inverse of [`rescale_dimensional`] for a given carrying capacity and
    /// prey-per-predator ratio.
    pub fn to_dimensional(&self, k: f64, q: f64) -> Result<DimensionalVoleParams> {
        if !(k > 0.0) {
            return Err(invalid("carrying capacity K must be > 0"));
        }
        Ok(DimensionalVoleParams {
            r: self.r,
            e: self.e,
            s: self.s,
            sigma: self.sigma,
            k,
            g: self.g * k,
            h: self.h * k,
            c: self.a * k,
            d: self.d * k,
            q,
            phi: self.phi / k,
        })
    }
}

/// Vole-weasel parameters on the original (dimensional) scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalVoleParams {
    pub r: f64,
    pub e: f64,
    pub s: f64,
    pub sigma: f64,
    pub k: f64,
    pub g: f64,
    pub h: f64,
    pub c: f64,
    pub d: f64,
    pub q: f64,
    pub phi: f64,
}

/// Maps dimensional parameters onto the reduced system.
pub fn rescale_dimensional(p: &DimensionalVoleParams) -> Result<VoleParams> {
    if !(p.k > 0.0 && p.k.is_finite()) {
        return Err(invalid(format!("carrying capacity K must be > 0, got {}", p.k)));
    }
    Ok(VoleParams {
        r: p.r,
        e: p.e,
        g: p.g / p.k,
        h: p.h / p.k,
        a: p.c / p.k,
        d: p.d / p.k,
        s: p.s,
        sigma: p.sigma,
        phi: p.phi * p.k,
    })
}

/// Spring and autumn trapping times for 1952-1996 (90 points).
pub fn default_obs_times() -> Vec<f64> {
    (1952..=1996)
        .flat_map(|y| [y as f64 + 0.45, y as f64 + 0.70])
        .collect()
}

#[inline]
pub(crate) fn seasonal_sin(t: f64) -> f64 {
    (2.0 * PI * (t - t.floor())).sin()
}

/// One Euler-Maruyama step; `noise` is the already scaled increment `ΔW`.
/// Returns whether a state was floored.
#[inline]
pub(crate) fn euler_step(
    p: &VoleParams,
    state: &mut [f64; 2],
    sin_t: f64,
    dt: f64,
    noise: f64,
    step: usize,
) -> Result<bool> {
    let [n, q] = *state;
    let season = 1.0 - p.e * sin_t;
    let n2 = n * n;
    let drift_n = p.r * season * n - p.r * n2 - p.g * n2 / (n2 + p.h * p.h) - p.a * n * q / (n + p.d);
    let drift_p = p.s * season * q - p.s * q * q / n;
    let mut n_new = n + drift_n * dt;
    if noise != 0.0 {
        n_new += n * p.sigma * noise;
    }
    let mut p_new = q + drift_p * dt;
    if !(n_new.is_finite() && p_new.is_finite()) {
        return Err(Error::SimulationFailure { step, message: "vole state became non-finite".into() });
    }
    let mut clamped = false;
    if n_new < STATE_FLOOR {
        n_new = STATE_FLOOR;
        clamped = true;
    }
    if p_new < STATE_FLOOR {
        p_new = STATE_FLOOR;
        clamped = true;
    }
    *state = [n_new, p_new];
    Ok(clamped)
}

#[derive(Debug, Clone, Copy)]
struct GridStep {
    dt: f64,
    sqrt_dt: f64,
    sin_t: f64,
}

/// Integration grid: a warm-up segment followed by one segment per
/// inter-observation gap, each split into equal Euler steps close to `dt`.
#[derive(Debug, Clone)]
pub struct VoleGrid {
    obs_times: Vec<f64>,
    dt: f64,
    warmup: f64,
    steps: Vec<GridStep>,
    /// `segments[k]..segments[k + 1]` are the steps taken before observation `k`.
    segments: Vec<usize>,
}

impl VoleGrid {
    pub fn new(obs_times: Vec<f64>, dt: f64, warmup: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be > 0, got {dt}")));
        }
        if obs_times.is_empty() {
            return Err(invalid("observation times are empty"));
        }
        if obs_times.windows(2).any(|w| w[1] <= w[0]) || obs_times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("observation times must be finite and strictly increasing"));
        }
        if !(warmup >= 0.0 && warmup.is_finite()) {
            return Err(invalid("warm-up must be >= 0"));
        }
        let mut steps = Vec::new();
        let mut segments = vec![0];
        let push_segment = |start: f64, length: f64, steps: &mut Vec<GridStep>| {
            if length > 0.0 {
                let n = ((length / dt).round() as usize).max(1);
                let h = length / n as f64;
                for i in 0..n {
                    let t = start + i as f64 * h;
                    steps.push(GridStep { dt: h, sqrt_dt: h.sqrt(), sin_t: seasonal_sin(t) });
                }
            }
        };
        push_segment(obs_times[0] - warmup, warmup, &mut steps);
        segments.push(steps.len());
        for w in obs_times.windows(2) {
            push_segment(w[0], w[1] - w[0], &mut steps);
            segments.push(steps.len());
        }
        Ok(Self { obs_times, dt, warmup, steps, segments })
    }

    /// Default grid: the canonical 90 trapping times, `dt = 0.01`, 10 years warm-up.
    pub fn standard() -> Self {
        Self::new(default_obs_times(), DEFAULT_DT, DEFAULT_WARMUP_YEARS).expect("valid default grid")
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn n_obs(&self) -> usize {
        self.obs_times.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn warmup(&self) -> f64 {
        self.warmup
    }

    /// Total number of Euler steps over the grid.
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Integrates the segment preceding observation `k`. `noise(sqrt_dt)`
    /// supplies each Brownian increment.
    pub fn integrate_segment(
        &self,
        params: &VoleParams,
        state: &mut [f64; 2],
        k: usize,
        noise: &mut impl FnMut(f64) -> f64,
    ) -> Result<bool> {
        let mut clamped = false;
        for (i, st) in self.steps[self.segments[k]..self.segments[k + 1]].iter().enumerate() {
            let dw = noise(st.sqrt_dt);
            clamped |= euler_step(params, state, st.sin_t, st.dt, dw, self.segments[k] + i)?;
        }
        Ok(clamped)
    }

    /// Latent states at each observation time with the given noise source.
    pub fn latent_path(
        &self,
        params: &VoleParams,
        init: [f64; 2],
        noise: &mut impl FnMut(f64) -> f64,
    ) -> Result<Vec<[f64; 2]>> {
        let mut state = init;
        let mut out = Vec::with_capacity(self.n_obs());
        for k in 0..self.n_obs() {
            self.integrate_segment(params, &mut state, k, noise)?;
            out.push(state);
        }
        Ok(out)
    }

    /// Noise-free path sampled at the observation times.
    pub fn skeleton_path(&self, params: &VoleParams, init: [f64; 2]) -> Result<Vec<[f64; 2]>> {
        self.latent_path(params, init, &mut |_| 0.0)
    }

    /// Simulates counts at every observation time into `obs`.
    pub fn simulate_obs_into(
        &self,
        params: &VoleParams,
        init: [f64; 2],
        rng: &mut StreamRng,
        obs: &mut Vec<f64>,
    ) -> Result<()> {
        obs.clear();
        let mut state = init;
        for k in 0..self.n_obs() {
            // The noise closure borrows the rng mutably, so the Poisson draw comes after.
            self.integrate_segment(params, &mut state, k, &mut |sq| sq * std_normal(rng))?;
            obs.push(poisson_draw(params.phi * state[0], rng, self.segments[k + 1])?);
        }
        Ok(())
    }
}

/// Draw from the initial-state distribution.
pub fn sample_initial_state(rng: &mut StreamRng) -> [f64; 2] {
    let (lo, hi) = INIT_RANGE;
    [rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

/// Simulates one dataset of the vole model.
pub fn vole_simulate(
    params: &VoleParams,
    obs_times: &[f64],
    dt: f64,
    warmup: f64,
    init: (f64, f64),
    seed: u64,
) -> Result<Trajectory> {
    params.validate()?;
    if !(init.0 > 0.0 && init.1 > 0.0) {
        return Err(invalid("initial states must be > 0"));
    }
    let grid = VoleGrid::new(obs_times.to_vec(), dt, warmup)?;
    simulate_on_grid(&grid, params, [init.0, init.1], seed)
}

/// As [`vole_simulate`] on a prebuilt grid.
pub fn simulate_on_grid(grid: &VoleGrid, params: &VoleParams, init: [f64; 2], seed: u64) -> Result<Trajectory> {
    let mut rng = stream(seed, &[]);
    let mut state = init;
    let mut latent = Vec::with_capacity(grid.n_obs());
    let mut obs = Vec::with_capacity(grid.n_obs());
    for k in 0..grid.n_obs() {
        grid.integrate_segment(params, &mut state, k, &mut |sq| sq * std_normal(&mut rng))?;
        obs.push(poisson_draw(params.phi * state[0], &mut rng, grid.segments[k + 1])?);
        latent.push(state.to_vec());
    }
    Ok(Trajectory {
        times: grid.obs_times.clone(),
        latent_names: vec!["n".into(), "p".into()],
        latent,
        obs,
        seed,
    })
}

/// Noise-free path of the reduced system.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonPath {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    /// Set when any step hit the state floor.
    pub clamped: bool,
}

/// Integrates the deterministic skeleton from `init` at `t0` over `horizon`
/// years with steps close to `dt`.
pub fn vole_skeleton(params: &VoleParams, init: [f64; 2], t0: f64, horizon: f64, dt: f64) -> Result<SkeletonPath> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(invalid("dt must be > 0"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon must be >= 0"));
    }
    let n = if horizon == 0.0 { 0 } else { ((horizon / dt).round() as usize).max(1) };
    let h = if n == 0 { 0.0 } else { horizon / n as f64 };
    let mut state = init;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(t0);
    states.push(state);
    let mut clamped = false;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        clamped |= euler_step(params, &mut state, seasonal_sin(t), h, 0.0, i)?;
        times.push(t0 + (i + 1) as f64 * h);
        states.push(state);
    }
    Ok(SkeletonPath { times, states, clamped })
}

/// The vole model with fixed parameters on a shared grid.
#[derive(Debug, Clone)]
pub struct VoleModel {
    pub grid: Arc<VoleGrid>,
    pub params: VoleParams,
}

impl StateSpaceModel for VoleModel {
    type State = [f64; 2];

    fn initial_state(&self, rng: &mut StreamRng) -> [f64; 2] {
        sample_initial_state(rng)
    }

    fn propagate(&self, state: &mut [f64; 2], obs_index: usize, rng: &mut StreamRng) -> Result<()> {
        self.grid
            .integrate_segment(&self.params, state, obs_index, &mut |sq| sq * std_normal(rng))?;
        Ok(())
    }

    fn log_obs_density(&self, state: &[f64; 2], y: f64) -> f64 {
        poisson_log_pmf(y, self.params.phi * state[0])
    }
}

#[derive(Debug, Clone)]
pub struct VoleFamily {
    pub grid: Arc<VoleGrid>,
}

impl VoleFamily {
    pub fn new(grid: VoleGrid) -> Self {
        Self { grid: Arc::new(grid) }
    }
}

impl ModelFamily for VoleFamily {
    type Model = VoleModel;

    fn bind(&self, theta: &ParamVec) -> Result<VoleModel> {
        Ok(VoleModel { grid: Arc::clone(&self.grid), params: VoleParams::from_params(theta)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_study_dataset_shape() {
        let times = default_obs_times();
        assert_eq!(times.len(), 90);
        let tr = vole_simulate(&VoleParams::simulation_truth(), &times, DEFAULT_DT, DEFAULT_WARMUP_YEARS, (0.5, 0.1), 3)
            .unwrap();
        tr.validate().unwrap();
        assert_eq!(tr.obs.len(), 90);
        assert!(tr.obs.iter().all(|y| *y >= 0.0 && y.fract() == 0.0));
        assert!(tr.latent.iter().flatten().all(|v| *v >= STATE_FLOOR));
        assert!(tr.obs.iter().any(|y| *y > 0.0));
    }

    #[test]
    fn single_euler_step_by_hand() {
        let p = VoleParams { sigma: 1.0, ..VoleParams::simulation_truth() };
        let (n, q, dt) = (0.5f64, 0.1f64, 0.01);
        // at t = 0, sin(2πt) = 0 so the seasonal factor is 1
        let dn = 4.5 * n - 4.5 * n * n - 0.2 * n * n / (n * n + 0.15 * 0.15) - 8.0 * n * q / (n + 0.06);
        let dp = 1.0 * q - 1.0 * q * q / n;
        let grid = VoleGrid::new(vec![0.01], dt, 0.01).unwrap();
        assert_eq!(grid.n_steps(), 1);
        let path = grid.skeleton_path(&p, [n, q]).unwrap();
        assert!((path[0][0] - (n + dn * dt)).abs() < 1e-15);
        assert!((path[0][1] - (q + dp * dt)).abs() < 1e-15);
        // dn = 2.25 - 1.125 - 0.1834862 - 0.7142857 = 0.2272280, dp = 0.1 - 0.02
        assert!((path[0][0] - 0.50227228048).abs() < 1e-10);
        assert!((path[0][1] - 0.1008).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_matches_skeleton_on_grid() {
        let grid = VoleGrid::standard();
        let p = VoleParams::simulation_truth();
        let a = grid.latent_path(&p, [0.4, 0.2], &mut |_| 0.0).unwrap();
        let b = grid.skeleton_path(&p, [0.4, 0.2]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() <= 1e-12 && (x[1] - y[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_noise_grid_path_matches_standalone_skeleton() {
        // one-year gaps so the two integrators walk the same time points
        let times: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let p = VoleParams::simulation_truth();
        let grid = VoleGrid::new(times, 0.01, 1.0).unwrap();
        let a = grid.skeleton_path(&p, [0.3, 0.2]).unwrap();
        let sk = vole_skeleton(&p, [0.3, 0.2], 0.0, 20.0, 0.01).unwrap();
        for (k, s) in a.iter().enumerate() {
            let b = sk.states[(k + 1) * 100];
            assert!((s[0] - b[0]).abs() < 1e-9 && (s[1] - b[1]).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn skeleton_zero_horizon_returns_init() {
        let sk = vole_skeleton(&VoleParams::simulation_truth(), [0.3, 0.7], 0.0, 0.0, 0.01).unwrap();
        assert_eq!(sk.states, vec![[0.3, 0.7]]);
        assert!(!sk.clamped);
    }

    #[test]
    fn skeleton_is_first_order() {
        // smooth, non-oscillating configuration over a short horizon
        let p = VoleParams { r: 1.0, e: 0.3, g: 0.1, h: 0.5, a: 0.5, d: 0.5, s: 0.5, sigma: 1.0, phi: 1.0 };
        let end = |dt: f64| *vole_skeleton(&p, [0.3, 0.1], 0.0, 1.0, dt).unwrap().states.last().unwrap();
        let (a, b, c) = (end(0.01), end(0.005), end(0.0025));
        let e1 = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let e2 = ((b[0] - c[0]).powi(2) + (b[1] - c[1]).powi(2)).sqrt();
        let ratio = e1 / e2;
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn table_means_skeleton_stays_bounded() {
        let p = VoleParams::kilpisjarvi_slmh_means();
        let sk = vole_skeleton(&p, [0.5, 0.1], 0.0, 1e4 / 12.0, 1.0 / 120.0).unwrap();
        let tail = &sk.states[sk.states.len() / 2..];
        assert!(tail.iter().all(|s| s[0].is_finite() && s[0] < 10.0 && s[1] < 10.0));
        let (lo, hi) = tail.iter().fold((f64::MAX, 0.0f64), |(lo, hi), s| (lo.min(s[0]), hi.max(s[0])));
        assert!(hi / lo > 2.0, "path should oscillate, got range {lo}..{hi}");
    }

    #[test]
    fn rescaling() {
        let dim = DimensionalVoleParams {
            r: 4.5, e: 0.8, s: 1.0, sigma: 1.5, k: 1.0, g: 0.3, h: 0.2, c: 5.0, d: 0.1, q: 2.0, phi: 50.0,
        };
        let red = rescale_dimensional(&dim).unwrap();
        assert_eq!((red.g, red.h, red.a, red.d, red.phi), (0.3, 0.2, 5.0, 0.1, 50.0));

        let k = 250.0;
        let dim = DimensionalVoleParams { k, g: 0.2 * k, h: 0.15 * k, c: 8.0 * k, d: 0.06 * k, phi: 100.0 / k, ..dim };
        let red = rescale_dimensional(&dim).unwrap();
        for (x, y) in [(red.g, 0.2), (red.h, 0.15), (red.a, 8.0), (red.d, 0.06), (red.phi, 100.0)] {
            assert!((x - y).abs() < 1e-12);
        }
        let back = red.to_dimensional(k, dim.q).unwrap();
        for (x, y) in [(back.g, dim.g), (back.h, dim.h), (back.c, dim.c), (back.d, dim.d), (back.phi, dim.phi)] {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
        assert!(rescale_dimensional(&DimensionalVoleParams { k: 0.0, ..dim }).is_err());
    }

    #[test]
    fn argument_errors() {
        let p = VoleParams::simulation_truth();
        assert!(vole_simulate(&p, &[], 0.01, 1.0, (0.5, 0.5), 0).is_err());
        assert!(vole_simulate(&p, &[1.0, 2.0], 0.0, 1.0, (0.5, 0.5), 0).is_err());
        assert!(vole_simulate(&p, &[2.0, 1.0], 0.01, 1.0, (0.5, 0.5), 0).is_err());
        assert!(vole_simulate(&p, &[1.0, 2.0], 0.01, 1.0, (0.0, 0.5), 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = VoleParams::simulation_truth();
        let t = default_obs_times();
        let a = vole_simulate(&p, &t, 0.01, 10.0, (0.5, 0.1), 77).unwrap();
        let b = vole_simulate(&p, &t, 0.01, 10.0, (0.5, 0.1), 77).unwrap();
        assert_eq!(a, b);
    }
}

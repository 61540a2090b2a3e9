//! State-space models whose transition function is a fitted Gaussian process.
//!
//! The state holds the last `d` values `(x_n, ..., x_{n-d+1})`, where `d` is
//! the GP input dimension. A step draws
//! `x_{n+1} ~ N(mu(x) + u_{n+1}, var(x) + process_var)` and shifts the lags.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::Kernel;
use crate::optim::{nelder_mead_max, FitReport, OptProblem, Transform};
use crate::particle::{particle_rng, pf_run, PfOptions, PfRun, StateSpaceModel};
use crate::rng::StreamRng;
use crate::systems::{gaussian_log_density, Observation};

/// Known observation function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsFunction {
    Builtin(Observation),
    /// Piecewise-linear through `(xs, ys)`, constant beyond the ends.
    /// `xs` must be strictly increasing.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl ObsFunction {
    pub fn validate(&self) -> Result<()> {
        if let ObsFunction::Tabulated { xs, ys } = self {
            if xs.is_empty() || xs.len() != ys.len() {
                return Err(Error::Dimension(format!(
                    "tabulated observation needs matching nonempty grids, got {} and {}",
                    xs.len(),
                    ys.len()
                )));
            }
            if xs.iter().chain(ys).any(|v| !v.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "tabulated observation grid must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ObsFunction::Builtin(o) => o.eval(x),
            ObsFunction::Tabulated { xs, ys } => {
                let last = xs.len() - 1;
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= xs[last] {
                    return ys[last];
                }
                let j = xs.partition_point(|&v| v <= x);
                let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
                ys[j - 1] + t * (ys[j] - ys[j - 1])
            }
        }
    }
}

impl From<Observation> for ObsFunction {
    fn from(o: Observation) -> Self {
        ObsFunction::Builtin(o)
    }
}

/// Additive forcing on the transition, indexed by step (from 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExogenousInput {
    #[default]
    None,
    /// `amp * cos(freq * n)`
    Cosine { amp: f64, freq: f64 },
    /// `u[n - 1]` at step `n`, aligned with the observations.
    Series(Vec<f64>),
}

impl ExogenousInput {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            ExogenousInput::None => 0.0,
            ExogenousInput::Cosine { amp, freq } => amp * (freq * step as f64).cos(),
            ExogenousInput::Series(u) => step.checked_sub(1).and_then(|i| u.get(i)).copied().unwrap_or(0.0),
        }
    }

    /// Values at steps `1..=len`, aligned with a series `x_1..x_N`.
    pub fn values(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|n| self.at(n)).collect()
    }
}

impl std::str::FromStr for ExogenousInput {
    type Err = Error;

    /// Parses `none` or `cos:amp=8,freq=1.2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(ExogenousInput::None);
        }
        let body = s
            .strip_prefix("cos:")
            .ok_or_else(|| Error::InvalidParameter(format!("unknown input spec '{s}'")))?;
        let (mut amp, mut freq) = (None, None);
        for part in body.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in '{part}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number in '{part}'")))?;
            match k.trim() {
                "amp" => amp = Some(v),
                "freq" => freq = Some(v),
                other => return Err(Error::InvalidParameter(format!("unknown input key '{other}'"))),
            }
        }
        match (amp, freq) {
            (Some(amp), Some(freq)) if amp.is_finite() && freq.is_finite() => {
                Ok(ExogenousInput::Cosine { amp, freq })
            }
            _ => Err(Error::InvalidParameter(format!("cosine input needs finite amp and freq: '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpSsm {
    pub gp: GpModel,
    pub process_var: f64,
    pub obs: ObsFunction,
    pub obs_var: f64,
    pub input: ExogenousInput,
    pub initial_mean: f64,
    pub initial_var: f64,
}

impl GpSsm {
    pub fn new(gp: GpModel, process_var: f64, obs: impl Into<ObsFunction>, obs_var: f64) -> Result<Self> {
        let m = GpSsm {
            gp,
            process_var,
            obs: obs.into(),
            obs_var,
            input: ExogenousInput::None,
            initial_mean: 0.0,
            initial_var: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_input(mut self, input: ExogenousInput) -> Self {
        self.input = input;
        self
    }

    pub fn with_initial(mut self, mean: f64, var: f64) -> Self {
        self.initial_mean = mean;
        self.initial_var = var;
        self
    }

    pub fn lag(&self) -> usize {
        self.gp.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gp.is_empty() {
            return Err(Error::InvalidParameter("transition GP has no training points".into()));
        }
        if !matches!(self.lag(), 1 | 2) {
            return Err(Error::Dimension(format!("lag order must be 1 or 2, got {}", self.lag())));
        }
        for (name, v) in [("process variance", self.process_var), ("observation variance", self.obs_var)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.initial_mean.is_finite() && self.initial_var.is_finite() && self.initial_var >= 0.0) {
            return Err(Error::InvalidParameter("initial state distribution is invalid".into()));
        }
        self.obs.validate()
    }

    fn check_series(&self, y: &[f64]) -> Result<()> {
        self.validate()?;
        if let ExogenousInput::Series(u) = &self.input {
            if u.len() < y.len() {
                return Err(Error::Dimension(format!("input has {} values, series {}", u.len(), y.len())));
            }
        }
        Ok(())
    }

    #[inline]
    fn shift_into(prev: &[f64], new: f64, out: &mut [f64]) {
        out[0] = new;
        let d = out.len();
        out[1..d].copy_from_slice(&prev[..d - 1]);
    }
}

impl StateSpaceModel for GpSsm {
    fn state_dim(&self) -> usize {
        self.lag()
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let sd = self.initial_var.sqrt();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = self.initial_mean + sd * z;
        }
    }

    fn sample_transition(&self, prev: &[f64], step: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let p = self.gp.predict(prev).unwrap_or(crate::gp::Prediction { mean: f64::NAN, variance: f64::NAN });
        let z: f64 = StandardNormal.sample(rng);
        let new = p.mean + self.input.at(step) + (p.variance + self.process_var).sqrt() * z;
        Self::shift_into(prev, new, out);
    }

    fn obs_log_density(&self, state: &[f64], y: f64, _: usize) -> f64 {
        gaussian_log_density(y, self.obs.eval(state[0]), self.obs_var)
    }

    fn propagate(&self, prev: &[f64], step: usize, step_seed: u64, out: &mut [f64]) -> Result<()> {
        use rayon::prelude::*;
        let d = self.lag();
        let m = prev.len() / d;
        let mut means = vec![0.0; m];
        let mut vars = vec![0.0; m];
        self.gp.predict_flat(prev, &mut means, &mut vars)?;
        let u = self.input.at(step);
        prev.par_chunks_exact(d)
            .zip(out.par_chunks_exact_mut(d))
            .zip(means.par_iter().zip(&vars))
            .enumerate()
            .with_min_len(512)
            .for_each(|(i, ((p, o), (mean, var)))| {
                let z: f64 = StandardNormal.sample(&mut particle_rng(step_seed, i));
                Self::shift_into(p, mean + u + (var + self.process_var).sqrt() * z, o);
            });
        Ok(())
    }
}

/// One draw of the next state given the current lag vector `x`.
pub fn gp_transition_sample(model: &GpSsm, x: &[f64], step: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    model.validate()?;
    let p = model.gp.predict(x)?;
    let z: f64 = StandardNormal.sample(rng);
    let mut out = vec![0.0; x.len()];
    GpSsm::shift_into(x, p.mean + model.input.at(step) + (p.variance + model.process_var).sqrt() * z, &mut out);
    Ok(out)
}

pub fn gpssm_filter(model: &GpSsm, y: &[f64], opts: &PfOptions) -> Result<PfRun> {
    model.check_series(y)?;
    pf_run(model, y, opts)
}

/// Likelihood as an optimizer objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoglikEval {
    /// `-inf` when the filter collapsed.
    pub value: f64,
    pub collapsed: bool,
}

/// Particle-filter log-likelihood. Collapse is reported as `-inf` with a flag
/// rather than as an error; other failures propagate.
pub fn gpssm_loglik(model: &GpSsm, y: &[f64], particles: usize, seed: u64) -> Result<LoglikEval> {
    match gpssm_filter(model, y, &PfOptions::new(particles, seed).loglik_only()) {
        Ok(run) => Ok(LoglikEval { value: run.loglik, collapsed: false }),
        Err(Error::Collapse { .. }) => Ok(LoglikEval { value: f64::NEG_INFINITY, collapsed: true }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSsmFitOptions {
    pub particles: usize,
    pub seed: u64,
    pub max_evals: usize,
    /// Also fit the kernel hyperparameters and the GP noise variance.
    pub fit_gp: bool,
}

impl Default for GpSsmFitOptions {
    fn default() -> Self {
        GpSsmFitOptions { particles: 1000, seed: 0, max_evals: 400, fit_gp: true }
    }
}

#[derive(Debug, Clone)]
pub struct GpSsmFit {
    pub model: GpSsm,
    pub report: FitReport,
    /// Objective evaluations that collapsed or failed to factorize.
    pub failed_evals: usize,
}

/// Maximizes the particle-filter likelihood over the variances and, if
/// requested, the kernel hyperparameters, starting from `start`. The seed is
/// held fixed across evaluations.
pub fn fit_gpssm(start: &GpSsm, y: &[f64], opts: &GpSsmFitOptions) -> Result<GpSsmFit> {
    start.check_series(y)?;
    let kernel = start.gp.kernel().clone();
    let k_names = kernel.param_names();
    let k_count = if opts.fit_gp { k_names.len() } else { 0 };

    let mut names: Vec<String> = Vec::new();
    let mut transforms = Vec::new();
    let mut initial = Vec::new();
    if opts.fit_gp {
        names.extend(k_names);
        transforms.extend(std::iter::repeat_n(Transform::Identity, k_count));
        initial.extend(kernel.params());
        names.push("gp_noise_var".into());
        transforms.push(Transform::Log);
        initial.push(start.gp.noise_var().max(1e-8));
    }
    names.extend(["process_var".to_string(), "obs_var".to_string()]);
    transforms.extend([Transform::Log, Transform::Log]);
    initial.extend([start.process_var, start.obs_var]);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let problem = OptProblem::new(&name_refs, &transforms, &initial).with_budget(opts.max_evals);

    let build = |theta: &[f64]| -> Result<GpSsm> {
        let mut m = start.clone();
        let rest = if opts.fit_gp {
            let k = kernel.with_params(&theta[..k_count])?;
            m.gp = start.gp.refit(k, theta[k_count])?;
            &theta[k_count + 1..]
        } else {
            theta
        };
        m.process_var = rest[0];
        m.obs_var = rest[1];
        m.validate()?;
        Ok(m)
    };

    let mut failed = 0usize;
    let result = nelder_mead_max(&problem, |theta| {
        let v = build(theta).and_then(|m| gpssm_loglik(&m, y, opts.particles, opts.seed));
        match v {
            Ok(e) if !e.collapsed => e.value,
            _ => {
                failed += 1;
                f64::NEG_INFINITY
            }
        }
    })?;
    let model = build(&result.params)?;
    let label = format!("gpssm({})", kernel);
    let report = FitReport::new(&label, &problem, &result, Some(opts.seed), Some(opts.particles));
    Ok(GpSsmFit { model, report, failed_evals: failed })
}

/// Trend GP-SSM plus a fixed seasonal pattern from GP regression over time.
#[derive(Debug, Clone)]
pub struct AdditiveGpSsm {
    pub trend: GpSsm,
    /// Kernel over the time index, normally periodic.
    pub seasonal_kernel: Kernel,
    pub seasonal_noise_var: f64,
    /// Window of the moving average removed before the seasonal regression.
    pub period: usize,
}

impl AdditiveGpSsm {
    /// Seasonal kernel `exp(theta1 cos(2 pi d / period))`.
    pub fn new(trend: GpSsm, period: usize, theta1: f64, seasonal_noise_var: f64) -> Result<Self> {
        if period < 2 {
            return Err(Error::InvalidParameter(format!("period must be at least 2, got {period}")));
        }
        let kernel = Kernel::cosine_periodic(theta1, period as f64 / (2.0 * std::f64::consts::PI))?;
        let m = AdditiveGpSsm { trend, seasonal_kernel: kernel, seasonal_noise_var, period };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.trend.validate()?;
        self.seasonal_kernel.validate()?;
        if !(self.seasonal_noise_var.is_finite() && self.seasonal_noise_var >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "seasonal noise variance must be nonnegative, got {}",
                self.seasonal_noise_var
            )));
        }
        if self.period < 2 {
            return Err(Error::InvalidParameter(format!("period must be at least 2, got {}", self.period)));
        }
        Ok(())
    }
}

/// Centered moving average over `window` points (a 2 x window average for
/// even windows), using whatever neighbours exist near the ends.
pub fn centered_moving_average(y: &[f64], window: usize) -> Vec<f64> {
    let n = y.len() as isize;
    let half = (window / 2) as isize;
    let even = window.is_multiple_of(2);
    (0..n)
        .map(|i| {
            let (mut sum, mut wsum) = (0.0, 0.0);
            for k in -half..=half {
                let j = i + k;
                if j < 0 || j >= n {
                    continue;
                }
                let w = if even && k.abs() == half { 0.5 } else { 1.0 };
                sum += w * y[j as usize];
                wsum += w;
            }
            sum / wsum
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditiveRun {
    pub trend: Vec<f64>,
    pub trend_sd: Vec<f64>,
    /// `trend[n] - trend[n-1]`; NaN at the first step.
    pub trend_delta: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub loglik: f64,
    pub run: PfRun,
}

/// Fits the seasonal pattern to `y` minus its moving-average trend, then
/// filters the trend GP-SSM on the seasonally adjusted series.
pub fn additive_gpssm_filter(model: &AdditiveGpSsm, y: &[f64], opts: &PfOptions) -> Result<AdditiveRun> {
    model.validate()?;
    if y.len() < 2 {
        return Err(Error::Data("series is too short".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("series has missing or non-finite values".into()));
    }
    let smooth = centered_moving_average(y, model.period);
    let detrended: Vec<f64> = y.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    let times: Vec<Vec<f64>> = (1..=y.len()).map(|n| vec![n as f64]).collect();
    let sgp = GpModel::fit(times.clone(), detrended, model.seasonal_kernel.clone(), model.seasonal_noise_var)?;
    let seasonal: Vec<f64> = sgp.predict_batch(&times)?.into_iter().map(|p| p.mean).collect();

    let adjusted: Vec<f64> = y.iter().zip(&seasonal).map(|(a, s)| a - s).collect();
    let opts = if opts.summaries { opts.clone() } else { PfOptions { summaries: true, ..opts.clone() } };
    let run = gpssm_filter(&model.trend, &adjusted, &opts)?;
    let trend: Vec<f64> = run.summaries.iter().map(|s| s.mean).collect();
    let trend_sd = run.summaries.iter().map(|s| s.sd).collect();
    let trend_delta = std::iter::once(f64::NAN)
        .chain(trend.windows(2).map(|w| w[1] - w[0]))
        .collect();
    let residual = adjusted.iter().zip(&trend).map(|(a, t)| a - t).collect();
    Ok(AdditiveRun { trend, trend_sd, trend_delta, seasonal, residual, loglik: run.loglik, run })
}

//! Synthetic benchmark systems and AR baselines.
//!
//! All systems are scalar: `x_n = f(x_{n-1}, n) + v_n`, `y_n = g(x_n) + w_n`
//! with `v_n ~ N(0, tau^2)`, `w_n ~ N(0, sigma^2)` and `x_0 ~ N(0, 1)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_ssm::{kalman_filter, LinearSsm};
use crate::optim::{nelder_mead_max, OptProblem, OptResult, Transform};
use crate::particle::{pf_run, PfOptions, StateSpaceModel};
use crate::rng::{substream, StreamRng};

/// Parameters of the sign-dependent rational map
/// `f(x) = 2 b x / (x^2 + c^2)` with `(b, c^2)` chosen by the sign of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalParams {
    pub b1: f64,
    pub c1_sq: f64,
    pub b2: f64,
    pub c2_sq: f64,
}

impl Default for RationalParams {
    /// `b1 = 5, c1^2 = 5, b2 = 10, c2^2 = 20`.
    fn default() -> Self {
        RationalParams { b1: 5.0, c1_sq: 5.0, b2: 10.0, c2_sq: 20.0 }
    }
}

impl RationalParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.b1, self.c1_sq, self.b2, self.c2_sq];
        if all.iter().any(|v| !v.is_finite()) || self.c1_sq <= 0.0 || self.c2_sq <= 0.0 {
            return Err(Error::InvalidParameter("rational map needs finite b and positive c^2".into()));
        }
        Ok(())
    }
}

pub fn eval_rational(p: &RationalParams, x: f64) -> f64 {
    if x < 0.0 {
        2.0 * p.b1 * x / (x * x + p.c1_sq)
    } else {
        2.0 * p.b2 * x / (x * x + p.c2_sq)
    }
}

/// Input-free part of the growth map, `x/2 + 25 x / (x^2 + 1)`.
pub fn growth_drift(x: f64) -> f64 {
    0.5 * x + 25.0 * x / (x * x + 1.0)
}

/// Cosine forcing `8 cos(1.2 n)`.
pub fn growth_input(n: usize) -> f64 {
    8.0 * (1.2 * n as f64).cos()
}

pub fn eval_growth(x: f64, n: usize) -> f64 {
    growth_drift(x) + growth_input(n)
}

/// Quadratic observation `x^2 / 10`.
pub fn eval_quadratic_obs(x: f64) -> f64 {
    x * x / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    Rational(RationalParams),
    /// Cosine-forced growth model.
    Growth,
    Ar { a: f64 },
    /// AR(1) whose coefficient depends on the sign of the previous state.
    SignSwitchingAr { a_neg: f64, a_pos: f64 },
}

impl Dynamics {
    pub fn eval(&self, x: f64, n: usize) -> f64 {
        match self {
            Dynamics::Rational(p) => eval_rational(p, x),
            Dynamics::Growth => eval_growth(x, n),
            Dynamics::Ar { a } => a * x,
            Dynamics::SignSwitchingAr { a_neg, a_pos } => {
                if x < 0.0 {
                    a_neg * x
                } else {
                    a_pos * x
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observation {
    Identity,
    /// `x^2 / 10`
    Quad10,
}

impl Observation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Observation::Identity => x,
            Observation::Quad10 => eval_quadratic_obs(x),
        }
    }
}

impl std::str::FromStr for Observation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Observation::Identity),
            "quad10" => Ok(Observation::Quad10),
            _ => Err(Error::InvalidParameter(format!("unknown observation function '{s}'"))),
        }
    }
}

/// Scalar nonlinear state-space system with additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub dynamics: Dynamics,
    pub observation: Observation,
    pub process_var: f64,
    pub obs_var: f64,
    pub initial_mean: f64,
    pub initial_var: f64,
}

impl System {
    pub fn new(dynamics: Dynamics, observation: Observation, process_var: f64, obs_var: f64) -> Result<Self> {
        let s = System { dynamics, observation, process_var, obs_var, initial_mean: 0.0, initial_var: 1.0 };
        s.validate()?;
        Ok(s)
    }

    /// Rational map with `tau^2 = sigma^2 = 1`.
    pub fn asymmetric_rational(params: RationalParams) -> Result<Self> {
        params.validate()?;
        System::new(Dynamics::Rational(params), Observation::Identity, 1.0, 1.0)
    }

    /// Growth model with `tau^2 = 1`, `sigma^2 = 10`.
    pub fn growth() -> Self {
        System {
            dynamics: Dynamics::Growth,
            observation: Observation::Quad10,
            process_var: 1.0,
            obs_var: 10.0,
            initial_mean: 0.0,
            initial_var: 1.0,
        }
    }

    pub fn ar(a: f64, process_var: f64, obs_var: f64) -> Result<Self> {
        System::new(Dynamics::Ar { a }, Observation::Identity, process_var, obs_var)
    }

    pub fn sign_switching_ar(a_neg: f64, a_pos: f64, process_var: f64, obs_var: f64) -> Result<Self> {
        System::new(Dynamics::SignSwitchingAr { a_neg, a_pos }, Observation::Identity, process_var, obs_var)
    }

    pub fn validate(&self) -> Result<()> {
        let vars = [self.process_var, self.obs_var, self.initial_var];
        if vars.iter().any(|v| !v.is_finite() || *v < 0.0) || !self.initial_mean.is_finite() {
            return Err(Error::InvalidParameter("system variances must be finite and nonnegative".into()));
        }
        if let Dynamics::Rational(p) = &self.dynamics {
            p.validate()?;
        }
        Ok(())
    }

    /// Draws `x_1..x_N` and `y_1..y_N`, starting from `x_0 ~ N(initial_mean, initial_var)`
    /// or from `x0` when given.
    pub fn simulate(&self, n: usize, seed: u64, x0: Option<f64>) -> Simulation {
        let mut rng = substream(seed, "simulate");
        let mut z = move || -> f64 { StandardNormal.sample(&mut rng) };
        let mut x = x0.unwrap_or_else(|| self.initial_mean + self.initial_var.sqrt() * z());
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for step in 1..=n {
            x = self.dynamics.eval(x, step) + self.process_var.sqrt() * z();
            ys.push(self.observation.eval(x) + self.obs_var.sqrt() * z());
            xs.push(x);
        }
        Simulation { x: xs, y: ys }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub(crate) fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

impl StateSpaceModel for System {
    fn state_dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.initial_mean + self.initial_var.sqrt() * z;
    }

    fn sample_transition(&self, prev: &[f64], step: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.dynamics.eval(prev[0], step) + self.process_var.sqrt() * z;
    }

    fn obs_log_density(&self, state: &[f64], y: f64, _: usize) -> f64 {
        gaussian_log_density(y, self.observation.eval(state[0]), self.obs_var)
    }
}

/// Fitted AR(1)-plus-noise baseline.
#[derive(Debug, Clone, Serialize)]
pub struct ArFit {
    pub asymmetric: bool,
    /// `[a]` or `[a_neg, a_pos]`.
    pub coefficients: Vec<f64>,
    pub process_var: f64,
    pub obs_var: f64,
    pub loglik: f64,
    pub evals: usize,
    pub converged: bool,
}

impl ArFit {
    pub fn system(&self) -> Result<System> {
        if self.asymmetric {
            System::sign_switching_ar(self.coefficients[0], self.coefficients[1], self.process_var, self.obs_var)
        } else {
            System::ar(self.coefficients[0], self.process_var, self.obs_var)
        }
    }

    pub fn n_params(&self) -> usize {
        self.coefficients.len() + 2
    }
}

#[derive(Debug, Clone)]
pub struct ArFitOptions {
    /// Particles for the sign-switching likelihood.
    pub particles: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for ArFitOptions {
    fn default() -> Self {
        ArFitOptions { particles: 10_000, seed: 0, max_evals: 400 }
    }
}

/// Linear-Gaussian form of the AR(1) baseline with `x_0 ~ N(0, 1)`.
pub fn ar_linear_model(a: f64, process_var: f64, obs_var: f64) -> Result<LinearSsm> {
    LinearSsm::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        DVector::from_element(1, process_var),
        obs_var,
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 1.0),
    )
}

fn fit_symmetric(y: &[f64], opts: &ArFitOptions) -> Result<(OptResult, f64)> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let lag1 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n / var.max(1e-300);
    let a0 = lag1.clamp(-0.95, 0.95);
    let half = (var / 2.0).max(1e-6);
    let problem = OptProblem::new(
        &["a", "process_var", "obs_var"],
        &[Transform::Identity, Transform::Log, Transform::Log],
        &[a0, half, half],
    )
    .with_budget(opts.max_evals)
    .with_step(&[0.1, 0.5, 0.5]);
    let res = nelder_mead_max(&problem, |p| {
        ar_linear_model(p[0], p[1], p[2])
            .and_then(|m| kalman_filter(&m, y, None))
            .map(|f| f.loglik)
            .unwrap_or(f64::NEG_INFINITY)
    })?;
    let ll = res.value;
    Ok((res, ll))
}

/// Maximum-likelihood AR(1) with observation noise. The symmetric model is
/// evaluated by Kalman filter; the sign-switching one by particle filter
/// with a fixed seed, started from the symmetric optimum.
pub fn ar_baseline_fit(y: &[f64], asymmetric: bool, opts: &ArFitOptions) -> Result<ArFit> {
    if y.len() < 10 {
        return Err(Error::Data(format!("AR fit needs at least 10 observations, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("AR fit needs a complete series".into()));
    }
    let (sym, _) = fit_symmetric(y, opts)?;
    if !asymmetric {
        return Ok(ArFit {
            asymmetric: false,
            coefficients: vec![sym.params[0]],
            process_var: sym.params[1],
            obs_var: sym.params[2],
            loglik: sym.value,
            evals: sym.evals,
            converged: sym.converged,
        });
    }
    let [a, q, r] = [sym.params[0], sym.params[1], sym.params[2]];
    let problem = OptProblem::new(
        &["a_neg", "a_pos", "process_var", "obs_var"],
        &[Transform::Identity, Transform::Identity, Transform::Log, Transform::Log],
        &[a, a, q, r],
    )
    .with_budget(opts.max_evals)
    .with_step(&[0.05, 0.05, 0.3, 0.3]);
    let pf = PfOptions::new(opts.particles, opts.seed).loglik_only();
    let res = nelder_mead_max(&problem, |p| {
        System::sign_switching_ar(p[0], p[1], p[2], p[3])
            .and_then(|s| pf_run(&s, y, &pf))
            .map(|r| r.loglik)
            .unwrap_or(f64::NEG_INFINITY)
    })?;
    Ok(ArFit {
        asymmetric: true,
        coefficients: res.params[..2].to_vec(),
        process_var: res.params[2],
        obs_var: res.params[3],
        loglik: res.value,
        evals: sym.evals + res.evals,
        converged: res.converged,
    })
}

//! End-to-end recipes comparing known-model filters, linear baselines and
//! GP-SSMs on simulated data, at desk scale.
//!
//! Each recipe returns a comparison table plus named columns for plotting.
//! All randomness comes from the recipe seed through named substreams.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::decomp::{decompose, fit_decomp, structure_grid, DecompFitOptions};
use crate::error::{Error, Result};
use crate::gpssm::{
    additive_gpssm_filter, fit_gpssm, gpssm_filter, AdditiveGpSsm, ExogenousInput, GpSsm, GpSsmFitOptions,
};
use crate::kernels::Kernel;
use crate::linear_ssm::{aic, kalman_filter, kalman_smoother};
use crate::particle::{pf_run, PfOptions, PfRun};
use crate::rng::{substream, subseed};
use crate::systems::{ar_baseline_fit, ar_linear_model, growth_drift, ArFitOptions, Observation, RationalParams, System};
use crate::training::{
    pairs_from_pf, pairs_from_states, synthetic_function_pairs, synthetic_step_pairs, Provenance, TransitionPairs,
    DEFAULT_SYNTHETIC_COUNT,
};

pub const NAMES: [&str; 4] = ["asym-ar", "nonlinear-smooth", "trend-demo", "seasonal-demo"];

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub model: String,
    pub training: Option<String>,
    pub kernel: Option<String>,
    pub particles: Option<usize>,
    pub loglik: f64,
    pub aic: Option<f64>,
    /// Named estimates in natural units.
    pub params: Vec<(String, f64)>,
    /// Set when this row's fit failed; the other columns are then empty.
    pub failure: Option<String>,
}

impl Row {
    fn new(model: &str) -> Self {
        Row {
            model: model.into(),
            training: None,
            kernel: None,
            particles: None,
            loglik: f64::NAN,
            aic: None,
            params: Vec::new(),
            failure: None,
        }
    }

    fn failed(model: &str, training: Option<&str>, kernel: Option<&str>, err: &Error) -> Self {
        Row {
            training: training.map(Into::into),
            kernel: kernel.map(Into::into),
            failure: Some(err.to_string()),
            ..Row::new(model)
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.0 == name).map(|p| p.1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub title: String,
    pub rows: Vec<Row>,
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "---".into()
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut s = format!("## {}\n\n", self.title);
        s.push_str("| model | training data | kernel | m | log-likelihood | AIC | estimates |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let dash = || "---".to_string();
            let est = match &r.failure {
                Some(e) => format!("FAILED: {e}"),
                None => r
                    .params
                    .iter()
                    .map(|(k, v)| format!("{k}={}", fmt_num(*v)))
                    .collect::<Vec<_>>()
                    .join(", "),
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                r.model,
                r.training.clone().unwrap_or_else(dash),
                r.kernel.clone().unwrap_or_else(dash),
                r.particles.map_or_else(dash, |m| m.to_string()),
                fmt_num(r.loglik),
                r.aic.map_or_else(dash, fmt_num),
                est
            );
        }
        s
    }

    pub fn find(&self, model: &str, training: Option<&str>, kernel: Option<&str>) -> Option<&Row> {
        self.rows.iter().find(|r| {
            r.model == model && r.training.as_deref() == training && r.kernel.as_deref() == kernel
        })
    }
}

/// Named columns destined for one CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct Columns {
    pub name: String,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Columns {
    fn new(name: &str) -> Self {
        Columns { name: name.into(), columns: Vec::new() }
    }

    fn push(mut self, label: &str, values: Vec<f64>) -> Self {
        self.columns.push((label.into(), values));
        self
    }
}

/// A GP-SSM fitted inside a recipe, kept for further evaluation.
#[derive(Debug, Clone)]
pub struct FittedVariant {
    pub training: String,
    pub kernel: String,
    pub model: GpSsm,
    pub pairs: TransitionPairs,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: Table,
    pub files: Vec<Columns>,
    pub variants: Vec<FittedVariant>,
    /// Latent states and observations the recipe ran on.
    pub x: Option<Vec<f64>>,
    pub y: Vec<f64>,
}

fn step_index(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64).collect()
}

fn summary_columns(name: &str, run: &PfRun) -> Columns {
    let s = &run.summaries;
    Columns::new(name)
        .push("step", s.iter().map(|v| v.step as f64).collect())
        .push("mean", s.iter().map(|v| v.mean).collect())
        .push("sd", s.iter().map(|v| v.sd).collect())
        .push("q025", s.iter().map(|v| v.quantiles[0]).collect())
        .push("q50", s.iter().map(|v| v.quantiles[2]).collect())
        .push("q975", s.iter().map(|v| v.quantiles[4]).collect())
}

fn pair_columns(name: &str, p: &TransitionPairs) -> Columns {
    let mut c = Columns::new(name);
    for k in 0..p.dim() {
        c = c.push(&format!("x{}", k + 1), p.inputs.iter().map(|x| x[k]).collect());
    }
    c.push("target", p.targets.clone())
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Fits one GP-SSM variant and evaluates it with a fresh seed.
struct VariantSpec<'a> {
    model: &'a str,
    training: &'a str,
    kernel: &'a str,
    pairs: &'a TransitionPairs,
    gp_noise: f64,
    process_var: f64,
    obs_var: f64,
    obs: Observation,
    input: ExogenousInput,
    initial: Option<(f64, f64)>,
}

struct Budget {
    fit_particles: usize,
    eval_particles: usize,
    max_evals: usize,
    fit_seed: u64,
    eval_seed: u64,
}

fn run_variant(spec: &VariantSpec, y: &[f64], budget: &Budget) -> Result<(Row, FittedVariant, PfRun)> {
    let kernel: Kernel = spec.kernel.parse()?;
    let gp = spec.pairs.fit_gp(kernel, spec.gp_noise)?;
    let mut start = GpSsm::new(gp, spec.process_var, spec.obs, spec.obs_var)?.with_input(spec.input.clone());
    if let Some((mean, var)) = spec.initial {
        start = start.with_initial(mean, var);
    }
    let opts = GpSsmFitOptions {
        particles: budget.fit_particles,
        seed: budget.fit_seed,
        max_evals: budget.max_evals,
        fit_gp: true,
    };
    let fit = fit_gpssm(&start, y, &opts)?;
    let run = gpssm_filter(&fit.model, y, &PfOptions::new(budget.eval_particles, budget.eval_seed))?;
    let mut row = Row::new(spec.model);
    row.training = Some(spec.training.into());
    row.kernel = Some(spec.kernel.into());
    row.particles = Some(budget.eval_particles);
    row.loglik = run.loglik;
    row.aic = Some(aic(run.loglik, fit.report.names.len()));
    row.params = vec![
        ("tau2".into(), fit.model.process_var),
        ("sigma2".into(), fit.model.obs_var),
        ("gp_noise".into(), fit.model.gp.noise_var()),
    ];
    row.params.extend(
        fit.model
            .gp
            .kernel()
            .param_names()
            .into_iter()
            .zip(fit.model.gp.kernel().params()),
    );
    let variant = FittedVariant {
        training: spec.training.into(),
        kernel: spec.kernel.into(),
        model: fit.model,
        pairs: spec.pairs.clone(),
    };
    Ok((row, variant, run))
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymArConfig {
    pub n: usize,
    pub seed: u64,
    pub rational: RationalParams,
    pub particle_counts: Vec<usize>,
    pub ar_particles: usize,
    pub fit_particles: usize,
    pub eval_particles: usize,
    pub max_evals: usize,
    /// Keep every `stride`-th state pair for training.
    pub stride: usize,
    pub kernels: Vec<String>,
}

impl Default for AsymArConfig {
    fn default() -> Self {
        AsymArConfig {
            n: 1000,
            seed: 0,
            rational: RationalParams::default(),
            particle_counts: vec![1000, 10_000, 100_000],
            ar_particles: 2000,
            fit_particles: 200,
            eval_particles: 2000,
            max_evals: 150,
            stride: 20,
            kernels: vec!["const(1.0) * rbf(1.0)".into(), "const(0.01) * linear + const(1.0) * rbf(1.0)".into()],
        }
    }
}

/// Sign-dependent rational dynamics: known-model filter at several particle
/// counts, AR and sign-switching AR baselines, then GP-SSMs trained on the
/// true states and on the states each baseline recovers.
pub fn asym_ar(cfg: &AsymArConfig) -> Result<ExperimentOutput> {
    let sys = System::asymmetric_rational(cfg.rational)?;
    let sim = sys.simulate(cfg.n, subseed(cfg.seed, "data"), None);
    let y = &sim.y;
    let mut rows = Vec::new();
    let mut files = vec![Columns::new("data")
        .push("step", step_index(cfg.n))
        .push("x", sim.x.clone())
        .push("y", y.clone())];

    let pf_seed = subseed(cfg.seed, "pf-true");
    for (i, &m) in cfg.particle_counts.iter().enumerate() {
        let opts = if i == 0 { PfOptions::new(m, pf_seed) } else { PfOptions::new(m, pf_seed).loglik_only() };
        match pf_run(&sys, y, &opts) {
            Ok(run) => {
                if i == 0 {
                    files.push(summary_columns("pf_true", &run));
                }
                let mut r = Row::new("particle filter");
                r.particles = Some(m);
                r.loglik = run.loglik;
                r.params = vec![("tau2".into(), sys.process_var), ("sigma2".into(), sys.obs_var)];
                rows.push(r);
            }
            Err(e) => rows.push(Row::failed("particle filter", None, None, &e)),
        }
    }

    let ar_opts = ArFitOptions { particles: cfg.ar_particles, seed: subseed(cfg.seed, "ar-fit"), max_evals: 400 };
    let mut sources: Vec<(String, std::result::Result<TransitionPairs, Error>)> = vec![(
        "true".into(),
        pairs_from_states(&sim.x, 1, None, cfg.stride, Provenance::TrueSimulation),
    )];
    for (label, asym) in [("AR", false), ("AS-AR", true)] {
        let model_name = if asym { "asymmetric AR" } else { "AR" };
        match ar_baseline_fit(y, asym, &ar_opts) {
            Ok(fit) => {
                let mut r = Row::new(model_name);
                r.loglik = fit.loglik;
                r.aic = Some(aic(fit.loglik, fit.n_params()));
                if asym {
                    r.particles = Some(cfg.ar_particles);
                    r.params.push(("a_neg".into(), fit.coefficients[0]));
                    r.params.push(("a_pos".into(), fit.coefficients[1]));
                } else {
                    r.params.push(("a".into(), fit.coefficients[0]));
                }
                r.params.push(("tau2".into(), fit.process_var));
                r.params.push(("sigma2".into(), fit.obs_var));
                rows.push(r);
                sources.push((label.into(), baseline_states(&fit, y, cfg)));
            }
            Err(e) => {
                rows.push(Row::failed(model_name, None, None, &e));
                sources.push((label.into(), Err(e)));
            }
        }
    }

    let mut variants = Vec::new();
    let budget = Budget {
        fit_particles: cfg.fit_particles,
        eval_particles: cfg.eval_particles,
        max_evals: cfg.max_evals,
        fit_seed: subseed(cfg.seed, "gpssm-fit"),
        eval_seed: subseed(cfg.seed, "gpssm-eval"),
    };
    for (label, pairs) in &sources {
        let pairs = match pairs {
            Ok(p) => p,
            Err(e) => {
                for k in &cfg.kernels {
                    rows.push(Row::failed("GP-SSM", Some(label), Some(k), e));
                }
                continue;
            }
        };
        files.push(pair_columns(&format!("training_{}", file_tag(label)), pairs));
        for k in &cfg.kernels {
            let spec = VariantSpec {
                model: "GP-SSM",
                training: label,
                kernel: k,
                pairs,
                gp_noise: 0.5,
                process_var: 1.0,
                obs_var: 1.0,
                obs: Observation::Identity,
                input: ExogenousInput::None,
                initial: None,
            };
            match run_variant(&spec, y, &budget) {
                Ok((row, variant, run)) => {
                    files.push(summary_columns(&format!("gpssm_{}_{}", file_tag(label), file_tag(k)), &run));
                    rows.push(row);
                    variants.push(variant);
                }
                Err(e) => rows.push(Row::failed("GP-SSM", Some(label), Some(k), &e)),
            }
        }
    }
    Ok(ExperimentOutput {
        table: Table { title: "Log-likelihoods and estimates, sign-dependent rational dynamics".into(), rows },
        files,
        variants,
        x: Some(sim.x),
        y: sim.y,
    })
}

/// States recovered by a fitted baseline: Kalman-smoothed means for the
/// linear AR, fixed-lag smoothed particle medians for the sign-switching one.
fn baseline_states(fit: &crate::systems::ArFit, y: &[f64], cfg: &AsymArConfig) -> Result<TransitionPairs> {
    if fit.asymmetric {
        let sys = fit.system()?;
        let run = pf_run(
            &sys,
            y,
            &PfOptions::new(cfg.ar_particles, subseed(cfg.seed, "asar-states")).with_history(),
        )?;
        pairs_from_pf(&run, 1, 20, None, cfg.stride)
    } else {
        let lin = ar_linear_model(fit.coefficients[0], fit.process_var, fit.obs_var)?;
        let filt = kalman_filter(&lin, y, None)?;
        let sm = kalman_smoother(&lin, &filt)?;
        let states: Vec<f64> = sm.means.iter().map(|m| m[0]).collect();
        let mut p = pairs_from_states(&states, 1, None, cfg.stride, Provenance::KalmanSmoothed)?;
        p.provenance = Provenance::KalmanSmoothed;
        Ok(p)
    }
}

fn file_tag(s: &str) -> String {
    s.chars()
        .filter_map(|c| match c {
            c if c.is_ascii_alphanumeric() => Some(c.to_ascii_lowercase()),
            '+' | '-' | '_' => Some('_'),
            _ => None,
        })
        .collect::<String>()
        .split('_')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearConfig {
    pub n: usize,
    pub seed: u64,
    pub ssm_particles: usize,
    pub fit_particles: usize,
    pub eval_particles: usize,
    pub max_evals: usize,
    pub train_count: usize,
    pub train_range: (f64, f64),
    pub train_noise_sd: f64,
    pub step_levels: (f64, f64),
    pub kernels: Vec<String>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        NonlinearConfig {
            n: 100,
            seed: 0,
            ssm_particles: 10_000,
            fit_particles: 500,
            eval_particles: 5000,
            max_evals: 150,
            train_count: DEFAULT_SYNTHETIC_COUNT,
            train_range: (-20.0, 20.0),
            train_noise_sd: 1.0,
            step_levels: (-10.0, 10.0),
            kernels: vec![
                "const(0.01) * linear + const(100.0) * rbf(25.0)".into(),
                "const(0.01) * linear + const(100.0) * exp(5.0)".into(),
            ],
        }
    }
}

/// Posterior-mean RMSE to the true states, per table row.
#[derive(Debug, Clone, Serialize)]
pub struct Recovery {
    pub model: String,
    pub training: Option<String>,
    pub kernel: Option<String>,
    pub rmse: f64,
}

/// Cosine-driven growth model with squared observations: known-model
/// filter against GP-SSMs trained on noisy samples of the true drift and on
/// a noisy step function.
pub fn nonlinear_smooth(cfg: &NonlinearConfig) -> Result<(ExperimentOutput, Vec<Recovery>)> {
    let sys = System::growth();
    let sim = sys.simulate(cfg.n, subseed(cfg.seed, "data"), None);
    let y = &sim.y;
    let input = ExogenousInput::Cosine { amp: 8.0, freq: 1.2 };
    let mut rows = Vec::new();
    let mut recovery = Vec::new();
    let mut files = vec![Columns::new("data")
        .push("step", step_index(cfg.n))
        .push("x", sim.x.clone())
        .push("y", y.clone())];

    match pf_run(&sys, y, &PfOptions::new(cfg.ssm_particles, subseed(cfg.seed, "pf-true"))) {
        Ok(run) => {
            let mut r = Row::new("SSM");
            r.particles = Some(cfg.ssm_particles);
            r.loglik = run.loglik;
            r.params = vec![("tau2".into(), sys.process_var), ("sigma2".into(), sys.obs_var)];
            rows.push(r);
            let means: Vec<f64> = run.summaries.iter().map(|s| s.mean).collect();
            recovery.push(Recovery { model: "SSM".into(), training: None, kernel: None, rmse: rmse(&means, &sim.x) });
            files.push(summary_columns("pf_true", &run));
        }
        Err(e) => rows.push(Row::failed("SSM", None, None, &e)),
    }

    let pair_seed = subseed(cfg.seed, "training");
    let sources = [
        (
            "true",
            synthetic_function_pairs(growth_drift, cfg.train_range, cfg.train_count, cfg.train_noise_sd, pair_seed),
        ),
        (
            "step function",
            synthetic_step_pairs(0.0, cfg.step_levels, cfg.train_noise_sd, cfg.train_count, cfg.train_range, pair_seed),
        ),
    ];
    let budget = Budget {
        fit_particles: cfg.fit_particles,
        eval_particles: cfg.eval_particles,
        max_evals: cfg.max_evals,
        fit_seed: subseed(cfg.seed, "gpssm-fit"),
        eval_seed: subseed(cfg.seed, "gpssm-eval"),
    };
    let mut variants = Vec::new();
    for (label, pairs) in &sources {
        let pairs = match pairs {
            Ok(p) => p,
            Err(e) => {
                for k in &cfg.kernels {
                    rows.push(Row::failed("GP-SSM", Some(label), Some(k), e));
                }
                continue;
            }
        };
        files.push(pair_columns(&format!("training_{}", file_tag(label)), pairs));
        for k in &cfg.kernels {
            let spec = VariantSpec {
                model: "GP-SSM",
                training: label,
                kernel: k,
                pairs,
                gp_noise: cfg.train_noise_sd.powi(2).max(1e-2),
                process_var: sys.process_var,
                obs_var: sys.obs_var,
                obs: Observation::Quad10,
                input: input.clone(),
                initial: None,
            };
            match run_variant(&spec, y, &budget) {
                Ok((row, variant, run)) => {
                    let means: Vec<f64> = run.summaries.iter().map(|s| s.mean).collect();
                    recovery.push(Recovery {
                        model: "GP-SSM".into(),
                        training: Some(label.to_string()),
                        kernel: Some(k.clone()),
                        rmse: rmse(&means, &sim.x),
                    });
                    files.push(summary_columns(&format!("gpssm_{}_{}", file_tag(label), file_tag(k)), &run));
                    rows.push(row);
                    variants.push(variant);
                }
                Err(e) => rows.push(Row::failed("GP-SSM", Some(label), Some(k), &e)),
            }
        }
    }
    let out = ExperimentOutput {
        table: Table { title: "GP-SSMs for cosine-driven nonlinear data".into(), rows },
        files,
        variants,
        x: Some(sim.x),
        y: sim.y,
    };
    Ok((out, recovery))
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoConfig {
    pub n: usize,
    pub seed: u64,
    pub period: usize,
    pub particles: usize,
    pub fit_particles: usize,
    pub max_evals: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { n: 240, seed: 0, period: 12, particles: 2000, fit_particles: 300, max_evals: 100 }
    }
}

/// Smooth trend with slope changes plus optional period-`period` seasonal
/// pattern and white noise.
pub fn synthetic_series(n: usize, period: Option<usize>, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, "synthetic-series");
    let mut z = move || -> f64 { StandardNormal.sample(&mut rng) };
    let (mut level, mut slope) = (0.0, 0.05);
    (0..n)
        .map(|i| {
            slope += 0.02 * z();
            level += slope;
            let season = period.map_or(0.0, |p| {
                let phase = 2.0 * std::f64::consts::PI * (i % p) as f64 / p as f64;
                1.5 * phase.sin() + 0.7 * (2.0 * phase).cos()
            });
            level + season + 0.5 * z()
        })
        .collect()
}

/// Mean square of the `order`-th differences.
fn difference_var(x: &[f64], order: usize) -> f64 {
    let mut d = x.to_vec();
    for _ in 0..order {
        d = d.windows(2).map(|w| w[1] - w[0]).collect();
    }
    d.iter().map(|v| v * v).sum::<f64>() / d.len().max(1) as f64
}

fn centered(y: &[f64]) -> (Vec<f64>, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}

/// Trend extraction: Kalman trend models of order 1 and 2, then GP-SSM trend
/// models trained on the order-2 smoothed trend with several kernels and
/// with one or two lags.
pub fn trend_demo(cfg: &DemoConfig, data: Option<Vec<f64>>) -> Result<ExperimentOutput> {
    let raw = data.unwrap_or_else(|| synthetic_series(cfg.n, None, subseed(cfg.seed, "data")));
    let (y, _) = centered(&raw);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("trend demo needs a complete series".into()));
    }
    let mut rows = Vec::new();
    let fit = fit_decomp(&y, &structure_grid(&[1, 2], None, true), &DecompFitOptions::default())?;
    for c in &fit.table {
        let mut r = Row::new(&format!("trend order {}", c.structure.trend_order));
        match (&c.spec, &c.error) {
            (Some(spec), None) => {
                r.loglik = c.loglik;
                r.aic = Some(c.aic);
                r.params = vec![("tau2".into(), spec.trend_var), ("sigma2".into(), spec.obs_var)];
            }
            (_, err) => r.failure = Some(err.clone().unwrap_or_else(|| "no estimate".into())),
        }
        rows.push(r);
    }
    let best2 = fit
        .table
        .iter()
        .find(|c| c.structure.trend_order == 2)
        .and_then(|c| c.spec)
        .ok_or_else(|| Error::Optimizer("order-2 trend model could not be fitted".into()))?;
    let dec = decompose(&y, &best2)?;
    let mut files = vec![Columns::new("kalman_trend")
        .push("step", step_index(y.len()))
        .push("y", y.clone())
        .push("trend", dec.trend.clone())
        .push("trend_sd", dec.trend_sd.clone())];

    let budget = Budget {
        fit_particles: cfg.fit_particles,
        eval_particles: cfg.particles,
        max_evals: cfg.max_evals,
        fit_seed: subseed(cfg.seed, "gpssm-fit"),
        eval_seed: subseed(cfg.seed, "gpssm-eval"),
    };
    let stride = (y.len() / 60).max(1);
    let mut variants = Vec::new();
    for (lag, kernel) in [(1, "linear"), (1, "rbf(100.0)"), (1, "linear + rbf(100.0)"), (2, "linear")] {
        let label = format!("{lag}D GP-SSM");
        let pairs = match pairs_from_states(&dec.trend, lag, None, stride, Provenance::KalmanSmoothed) {
            Ok(p) => p,
            Err(e) => {
                rows.push(Row::failed(&label, Some("Kalman trend"), Some(kernel), &e));
                continue;
            }
        };
        let step_var = difference_var(&dec.trend, lag).max(1e-4);
        let spec = VariantSpec {
            model: &label,
            training: "Kalman trend",
            kernel,
            pairs: &pairs,
            gp_noise: step_var,
            process_var: step_var,
            obs_var: best2.obs_var,
            obs: Observation::Identity,
            input: ExogenousInput::None,
            initial: Some((dec.trend[0], dec.trend_sd[0].powi(2) + difference_var(&dec.trend, 1))),
        };
        match run_variant(&spec, &y, &budget) {
            Ok((row, variant, run)) => {
                files.push(summary_columns(&format!("gpssm_{lag}d_{}", file_tag(kernel)), &run));
                rows.push(row);
                variants.push(variant);
            }
            Err(e) => rows.push(Row::failed(&label, Some("Kalman trend"), Some(kernel), &e)),
        }
    }
    Ok(ExperimentOutput {
        table: Table { title: "Trend models".into(), rows },
        files,
        variants,
        x: None,
        y,
    })
}

/// Trend plus seasonal decomposition by Kalman filter, then the additive
/// GP-SSM with a two-lag linear trend and a fixed periodic pattern.
pub fn seasonal_demo(cfg: &DemoConfig, data: Option<Vec<f64>>) -> Result<ExperimentOutput> {
    let raw = data.unwrap_or_else(|| synthetic_series(cfg.n, Some(cfg.period), subseed(cfg.seed, "data")));
    let (y, _) = centered(&raw);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("seasonal demo needs a complete series".into()));
    }
    let mut rows = Vec::new();
    let fit = fit_decomp(&y, &structure_grid(&[1, 2], Some(cfg.period), false), &DecompFitOptions::default())?;
    for c in &fit.table {
        let mut r = Row::new(&format!("trend order {} + seasonal", c.structure.trend_order));
        match (&c.spec, &c.error) {
            (Some(spec), None) => {
                r.loglik = c.loglik;
                r.aic = Some(c.aic);
                r.params = vec![
                    ("tau2_trend".into(), spec.trend_var),
                    ("tau2_seasonal".into(), spec.seasonal_var),
                    ("sigma2".into(), spec.obs_var),
                ];
            }
            (_, err) => r.failure = Some(err.clone().unwrap_or_else(|| "no estimate".into())),
        }
        rows.push(r);
    }
    let best = fit
        .best()
        .and_then(|c| c.spec)
        .ok_or_else(|| Error::Optimizer("no seasonal model could be fitted".into()))?;
    let dec = decompose(&y, &best)?;
    let mut files = vec![Columns::new("kalman_components")
        .push("step", step_index(y.len()))
        .push("y", y.clone())
        .push("trend", dec.trend.clone())
        .push("seasonal", dec.seasonal.clone())
        .push("residual", dec.residual.clone())];

    let stride = (y.len() / 60).max(1);
    let pairs = pairs_from_states(&dec.trend, 2, None, stride, Provenance::KalmanSmoothed)?;
    let trend_gp = pairs.fit_gp(Kernel::Linear, best.trend_var.max(1e-4))?;
    let trend = GpSsm::new(trend_gp, best.trend_var.max(1e-4), Observation::Identity, best.obs_var)?
        .with_initial(dec.trend[0], dec.trend_sd[0].powi(2).max(1e-2));
    let start = AdditiveGpSsm::new(trend, cfg.period, 1.0, best.obs_var)?;

    // refine the trend variances on the seasonally adjusted series
    let first = additive_gpssm_filter(&start, &y, &PfOptions::new(cfg.fit_particles, subseed(cfg.seed, "pilot")))?;
    let adjusted: Vec<f64> = y.iter().zip(&first.seasonal).map(|(a, s)| a - s).collect();
    let opts = GpSsmFitOptions {
        particles: cfg.fit_particles,
        seed: subseed(cfg.seed, "gpssm-fit"),
        max_evals: cfg.max_evals,
        fit_gp: false,
    };
    let mut model = start.clone();
    let mut row = Row::new("additive GP-SSM");
    row.training = Some("Kalman trend".into());
    row.kernel = Some(format!("2D linear / {}", start.seasonal_kernel));
    row.particles = Some(cfg.particles);
    match fit_gpssm(&start.trend, &adjusted, &opts) {
        Ok(f) => {
            model.trend = f.model;
            let out = additive_gpssm_filter(&model, &y, &PfOptions::new(cfg.particles, subseed(cfg.seed, "gpssm-eval")))?;
            row.loglik = out.loglik;
            row.params = vec![("tau2".into(), model.trend.process_var), ("sigma2".into(), model.trend.obs_var)];
            files.push(
                Columns::new("gpssm_components")
                    .push("step", step_index(y.len()))
                    .push("y", y.clone())
                    .push("trend", out.trend.clone())
                    .push("trend_sd", out.trend_sd.clone())
                    .push("trend_delta", out.trend_delta.clone())
                    .push("seasonal", out.seasonal.clone())
                    .push("residual", out.residual.clone()),
            );
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    rows.push(row);
    Ok(ExperimentOutput {
        table: Table { title: "Trend and seasonal components".into(), rows },
        files,
        variants: Vec::new(),
        x: None,
        y,
    })
}

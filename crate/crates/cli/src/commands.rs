use std::fs;
use std::path::Path;

use gpssm::decomp::{decompose, fit_decomp, structure_grid, DecompFitOptions, DecompSpec, Structure};
use gpssm::experiments::{self, AsymArConfig, Columns, DemoConfig, ExperimentOutput, NonlinearConfig};
use gpssm::gpssm::{fit_gpssm, gpssm_filter, ExogenousInput, GpSsm, GpSsmFitOptions};
use gpssm::io::{read_series_file, write_columns};
use gpssm::linear_ssm::{aic, kalman_filter, kalman_smoother, step_rows, write_csv};
use gpssm::optim::FitReport;
use gpssm::particle::{fixed_lag_smooth, pf_run, write_summaries_csv, PfOptions, PfRun};
use gpssm::systems::{ar_baseline_fit, ar_linear_model, growth_drift, ArFitOptions, Dynamics, Observation, RationalParams, System};
use gpssm::training::{pairs_from_states, synthetic_function_pairs, synthetic_step_pairs, Provenance, TransitionPairs};
use gpssm::{Error, Kernel, Result};
use serde_json::{json, Value};

use crate::artifacts::Artifacts;
use crate::*;

pub fn run(cmd: &Command, out: &Path) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a, out),
        Command::Kalman(a) => kalman(a, out),
        Command::Decomp(a) => decomp(a, out),
        Command::Pf(a) => pf(a, out),
        Command::Gpssm(a) => gpssm_cmd(a, out),
        Command::Fit(a) => fit(a, out),
        Command::Pairs(a) => pairs(a, out),
        Command::Experiment(a) => experiment(a, out),
    }
}

fn config<T: serde::Serialize>(args: &T) -> Result<Value> {
    Ok(serde_json::to_value(args)?)
}

fn load(path: &Path, column: Option<&str>, log: bool) -> Result<Vec<f64>> {
    let y = read_series_file(path, column)?;
    if !log {
        return Ok(y);
    }
    if let Some(i) = y.iter().position(|v| *v <= 0.0) {
        return Err(Error::Data(format!("value {} at row {} has no logarithm", y[i], i + 1)));
    }
    Ok(y.iter().map(|v| v.ln()).collect())
}

pub fn build_system(a: &SystemArgs) -> Result<System> {
    let tau2 = a.tau2.unwrap_or(1.0);
    let sys = match a.system {
        SystemKind::F24 => {
            let d = RationalParams::default();
            let p = RationalParams {
                b1: a.b1.unwrap_or(d.b1),
                c1_sq: a.c1_sq.unwrap_or(d.c1_sq),
                b2: a.b2.unwrap_or(d.b2),
                c2_sq: a.c2_sq.unwrap_or(d.c2_sq),
            };
            p.validate()?;
            System::new(Dynamics::Rational(p), Observation::Identity, tau2, a.sigma2.unwrap_or(1.0))?
        }
        SystemKind::F25 => System::new(Dynamics::Growth, Observation::Quad10, tau2, a.sigma2.unwrap_or(10.0))?,
        SystemKind::Ar => System::ar(a.a.unwrap_or(0.9), tau2, a.sigma2.unwrap_or(1.0))?,
        SystemKind::AsymAr => System::sign_switching_ar(
            a.a_neg.unwrap_or(0.9),
            a.a_pos.unwrap_or(0.9),
            tau2,
            a.sigma2.unwrap_or(1.0),
        )?,
    };
    let rational_flags = [a.b1, a.c1_sq, a.b2, a.c2_sq];
    if a.system != SystemKind::F24 && rational_flags.iter().any(Option::is_some) {
        return Err(Error::InvalidParameter("--b1/--c1-sq/--b2/--c2-sq apply only to --system f24".into()));
    }
    if a.system != SystemKind::Ar && a.a.is_some() {
        return Err(Error::InvalidParameter("--a applies only to --system ar".into()));
    }
    if a.system != SystemKind::AsymAr && (a.a_neg.is_some() || a.a_pos.is_some()) {
        return Err(Error::InvalidParameter("--a-neg/--a-pos apply only to --system asym-ar".into()));
    }
    Ok(sys)
}

fn simulate(a: &SimulateArgs, out: &Path) -> Result<()> {
    if a.n == 0 {
        return Err(Error::InvalidParameter("--n must be positive".into()));
    }
    let sys = build_system(&a.system)?;
    let sim = sys.simulate(a.n, a.seed, a.x0);
    let art = Artifacts::new(out, "simulate", config(a)?)?;
    let step: Vec<f64> = (1..=a.n).map(|i| i as f64).collect();
    art.csv("simulate.csv", |w| write_columns(w, &[("step", &step), ("x", &sim.x), ("y", &sim.y)]))
}

fn mask_of(y: &[f64]) -> Option<Vec<bool>> {
    y.iter().any(|v| !v.is_finite()).then(|| y.iter().map(|v| !v.is_finite()).collect())
}

fn kalman(a: &KalmanArgs, out: &Path) -> Result<()> {
    let y = load(&a.data, a.column.as_deref(), a.log)?;
    let mask = mask_of(&y);
    let (model, params, evals, k) = match a.model {
        LinearKind::Trend => {
            if a.a.is_some() {
                return Err(Error::InvalidParameter("--a applies only to --model ar".into()));
            }
            let spec = if a.fit {
                if a.tau2.is_some() || a.sigma2.is_some() {
                    return Err(Error::InvalidParameter("--fit estimates --tau2 and --sigma2".into()));
                }
                let s = Structure { trend_order: a.order, period: 0 };
                let f = fit_decomp(&y, &[s], &DecompFitOptions::default())?;
                let c = &f.table[0];
                match (&c.spec, &c.error) {
                    (Some(spec), _) => (*spec, c.evals),
                    (None, e) => return Err(Error::Optimizer(e.clone().unwrap_or_default())),
                }
            } else {
                (DecompSpec::trend_only(a.order, a.tau2.unwrap_or(0.1), a.sigma2.unwrap_or(1.0)), 0)
            };
            let (spec, evals) = spec;
            let m = spec.model()?;
            let params = json!({"trend_order": spec.trend_order, "tau2": spec.trend_var, "sigma2": spec.obs_var});
            (m, params, evals, 2)
        }
        LinearKind::Ar => {
            let (coef, tau2, sigma2, evals) = if a.fit {
                if a.a.is_some() || a.tau2.is_some() || a.sigma2.is_some() {
                    return Err(Error::InvalidParameter("--fit estimates --a, --tau2 and --sigma2".into()));
                }
                if mask.is_some() {
                    return Err(Error::Data("AR fitting needs a complete series".into()));
                }
                let f = ar_baseline_fit(&y, false, &ArFitOptions::default())?;
                (f.coefficients[0], f.process_var, f.obs_var, f.evals)
            } else {
                (a.a.unwrap_or(0.9), a.tau2.unwrap_or(1.0), a.sigma2.unwrap_or(1.0), 0)
            };
            let m = ar_linear_model(coef, tau2, sigma2)?;
            (m, json!({"a": coef, "tau2": tau2, "sigma2": sigma2}), evals, 3)
        }
    };
    let filt = kalman_filter(&model, &y, mask.as_deref())?;
    let smooth = kalman_smoother(&model, &filt)?;
    let rows = step_rows(&model, &y, mask.as_deref(), &filt, Some(&smooth));
    let art = Artifacts::new(out, "kalman", config(a)?)?;
    art.csv("kalman.csv", |w| write_csv(&rows, w))?;
    art.json(
        "kalman.json",
        json!({
            "loglik": filt.loglik,
            "aic": if a.fit { Value::from(aic(filt.loglik, k)) } else { Value::Null },
            "n_observed": filt.n_observed,
            "params": params,
            "evals": evals,
        }),
    )
}

fn decomp(a: &DecompArgs, out: &Path) -> Result<()> {
    let y = load(&a.data, a.column.as_deref(), a.log)?;
    let orders: Vec<usize> = match a.trend_order {
        Some(k) => vec![k],
        None => vec![1, 2],
    };
    if a.compare_nonseasonal && a.period.is_none() {
        return Err(Error::InvalidParameter("--compare-nonseasonal needs --period".into()));
    }
    let grid = structure_grid(&orders, a.period, a.compare_nonseasonal);
    let opts = DecompFitOptions { max_evals: a.max_evals, ..DecompFitOptions::default() };
    let fit = fit_decomp(&y, &grid, &opts)?;
    let best = fit.best().ok_or_else(|| {
        let why = fit.table.iter().filter_map(|c| c.error.clone()).collect::<Vec<_>>().join("; ");
        Error::Optimizer(format!("no structure could be fitted: {why}"))
    })?;
    let spec = best.spec.expect("best candidate has a spec");
    let d = decompose(&y, &spec)?;
    let art = Artifacts::new(out, "decomp", config(a)?)?;
    let step: Vec<f64> = (1..=y.len()).map(|i| i as f64).collect();
    art.csv("decomp.csv", |w| {
        write_columns(
            w,
            &[
                ("step", &step),
                ("y", &y),
                ("trend", &d.trend),
                ("trend_sd", &d.trend_sd),
                ("seasonal", &d.seasonal),
                ("seasonal_sd", &d.seasonal_sd),
                ("residual", &d.residual),
            ],
        )
    })?;
    art.json(
        "decomp.json",
        json!({
            "best": {
                "trend_order": spec.trend_order,
                "period": spec.period,
                "trend_var": spec.trend_var,
                "seasonal_var": spec.seasonal_var,
                "obs_var": spec.obs_var,
                "loglik": d.loglik,
                "concentrated_loglik": d.concentrated_loglik,
                "sigma2_hat": d.sigma2_hat,
                "aic": best.aic,
            },
            "candidates": serde_json::to_value(&fit.table)?,
        }),
    )
}

fn pf_options(f: &FilterArgs) -> Result<PfOptions> {
    let mut o = PfOptions::new(f.particles, f.seed).with_resampling(f.resampling.parse()?);
    if let Some(t) = f.ess_threshold {
        o = o.with_ess_threshold(t);
    }
    Ok(o)
}

fn run_json(run: &PfRun) -> Value {
    json!({
        "loglik": run.loglik,
        "particles": run.particles,
        "seed": run.seed,
        "resample_count": run.resample_count,
        "min_ess": run.min_ess,
    })
}

fn write_smoothed(art: &Artifacts, name: &str, run: &PfRun, lag: usize) -> Result<()> {
    let s = fixed_lag_smooth(run, lag)?;
    let col = |f: fn(&gpssm::particle::SmoothedStep) -> f64| s.iter().map(f).collect::<Vec<f64>>();
    let (step, mean, median, div) = (col(|v| v.step as f64), col(|v| v.mean), col(|v| v.median), col(|v| v.diversity));
    art.csv(name, |w| write_columns(w, &[("step", &step), ("mean", &mean), ("median", &median), ("diversity", &div)]))
}

fn pf(a: &PfArgs, out: &Path) -> Result<()> {
    let y = load(&a.data, a.column.as_deref(), false)?;
    let sys = build_system(&a.system)?;
    let mut opts = pf_options(&a.filter)?;
    if a.smooth_lag.is_some() {
        opts = opts.with_history();
    }
    let run = pf_run(&sys, &y, &opts)?;
    let art = Artifacts::new(out, "pf", config(a)?)?;
    art.csv("pf.csv", |w| write_summaries_csv(&run.summaries, w))?;
    if let Some(lag) = a.smooth_lag {
        write_smoothed(&art, "pf_smoothed.csv", &run, lag)?;
    }
    art.json("pf.json", run_json(&run))
}

fn parse_input(spec: Option<&str>, file: Option<&Path>) -> Result<ExogenousInput> {
    match (spec, file) {
        (Some(_), Some(_)) => Err(Error::InvalidParameter("--input and --input-file conflict".into())),
        (Some(s), None) => s.parse(),
        (None, Some(p)) => Ok(ExogenousInput::Series(read_series_file(p, None)?)),
        (None, None) => Ok(ExogenousInput::None),
    }
}

fn gpssm_cmd(a: &GpssmArgs, out: &Path) -> Result<()> {
    let y = load(&a.data, a.column.as_deref(), false)?;
    let pairs = TransitionPairs::read_csv(fs::File::open(&a.train_pairs).map_err(|e| {
        Error::Data(format!("cannot open {}: {e}", a.train_pairs.display()))
    })?)?;
    let kernel: Kernel = a.kernel.parse()?;
    let gp = pairs.fit_gp(kernel, a.gp_noise)?;
    let obs = match a.obs {
        ObsKind::Identity => Observation::Identity,
        ObsKind::Quad10 => Observation::Quad10,
    };
    let input = parse_input(a.input.as_deref(), a.input_file.as_deref())?;
    let mut model = GpSsm::new(gp, a.tau2, obs, a.sigma2)?.with_input(input);
    let mut report = Value::Null;
    if a.fit {
        let opts = GpSsmFitOptions {
            particles: a.fit_particles,
            seed: a.filter.seed,
            max_evals: a.max_evals,
            fit_gp: true,
        };
        let f = fit_gpssm(&model, &y, &opts)?;
        report = serde_json::to_value(&f.report)?;
        model = f.model;
    }
    let run = gpssm_filter(&model, &y, &pf_options(&a.filter)?)?;
    let art = Artifacts::new(out, "gpssm", config(a)?)?;
    art.csv("gpssm.csv", |w| write_summaries_csv(&run.summaries, w))?;
    let mut fields = run_json(&run);
    fields["tau2"] = model.process_var.into();
    fields["sigma2"] = model.obs_var.into();
    fields["kernel"] = model.gp.kernel().to_string().into();
    fields["fit"] = report;
    art.json("gpssm.json", fields)?;
    art.json("gp.json", serde_json::to_value(model.gp.to_document())?)
}

fn fit(a: &FitArgs, out: &Path) -> Result<()> {
    let y = load(&a.data, a.column.as_deref(), false)?;
    let report = match a.model {
        FitKind::Ar | FitKind::AsymAr => {
            let asym = a.model == FitKind::AsymAr;
            let opts = ArFitOptions { particles: a.particles, seed: a.seed, max_evals: a.max_evals };
            let f = ar_baseline_fit(&y, asym, &opts)?;
            let mut names: Vec<String> = if asym { vec!["a_neg".into(), "a_pos".into()] } else { vec!["a".into()] };
            names.extend(["tau2".to_string(), "sigma2".to_string()]);
            let mut natural = f.coefficients.clone();
            natural.extend([f.process_var, f.obs_var]);
            let mut transformed = f.coefficients.clone();
            transformed.extend([f.process_var.ln(), f.obs_var.ln()]);
            FitReport {
                model: if asym { "asymmetric-ar".into() } else { "ar".into() },
                names,
                natural,
                transformed,
                loglik: f.loglik,
                aic: aic(f.loglik, f.n_params()),
                evals: f.evals,
                converged: f.converged,
                seed: asym.then_some(a.seed),
                particles: asym.then_some(a.particles),
            }
        }
        FitKind::Trend => {
            let s = Structure { trend_order: a.order, period: 0 };
            let opts = DecompFitOptions { max_evals: a.max_evals, ..DecompFitOptions::default() };
            let f = fit_decomp(&y, &[s], &opts)?;
            let c = &f.table[0];
            let spec = c
                .spec
                .ok_or_else(|| Error::Optimizer(c.error.clone().unwrap_or_default()))?;
            FitReport {
                model: format!("trend-{}", a.order),
                names: vec!["tau2".into(), "sigma2".into()],
                natural: vec![spec.trend_var, spec.obs_var],
                transformed: vec![spec.trend_var.ln(), spec.obs_var.ln()],
                loglik: c.loglik,
                aic: c.aic,
                evals: c.evals,
                converged: c.converged,
                seed: None,
                particles: None,
            }
        }
    };
    let art = Artifacts::new(out, "fit", config(a)?)?;
    art.json("fit.json", serde_json::to_value(&report)?)
}

fn pairs(a: &PairsArgs, out: &Path) -> Result<()> {
    let range = (a.lo, a.hi);
    let p = match (a.synthetic, &a.data) {
        (Some(ShapeKind::Step), _) => synthetic_step_pairs(0.0, (-10.0, 10.0), a.noise_sd, a.count, range, a.seed)?,
        (Some(ShapeKind::Growth), _) => synthetic_function_pairs(growth_drift, range, a.count, a.noise_sd, a.seed)?,
        (None, Some(path)) => {
            let states = read_series_file(path, a.column.as_deref())?;
            let input = parse_input(a.input.as_deref(), None)?;
            let u = (input != ExogenousInput::None).then(|| input.values(states.len()));
            pairs_from_states(&states, a.lag, u.as_deref(), a.stride, Provenance::File)?
        }
        (None, None) => return Err(Error::InvalidParameter("give a state series or --synthetic".into())),
    };
    let art = Artifacts::new(out, "pairs", config(a)?)?;
    art.csv("pairs.csv", |w| p.write_csv(w))
}

fn write_files(art: &Artifacts, files: &[Columns]) -> Result<()> {
    for f in files {
        let cols: Vec<(&str, &[f64])> = f.columns.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        art.csv(&format!("{}.csv", f.name), |w| write_columns(w, &cols))?;
    }
    Ok(())
}

fn experiment(a: &ExperimentArgs, out: &Path) -> Result<()> {
    let data = a.data.as_deref().map(|p| read_series_file(p, None)).transpose()?;
    if data.is_some() && matches!(a.name, ExperimentName::AsymAr | ExperimentName::NonlinearSmooth) {
        return Err(Error::InvalidParameter("--data applies only to trend-demo and seasonal-demo".into()));
    }
    let mut extra = Value::Null;
    let result: ExperimentOutput = match a.name {
        ExperimentName::AsymAr => {
            let mut cfg = AsymArConfig { seed: a.seed, ..AsymArConfig::default() };
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if a.quick {
                cfg.particle_counts = vec![500, 2000];
                cfg.ar_particles = 500;
                cfg.fit_particles = 100;
                cfg.eval_particles = 500;
                cfg.max_evals = 30;
                cfg.kernels.truncate(1);
            }
            experiments::asym_ar(&cfg)?
        }
        ExperimentName::NonlinearSmooth => {
            let mut cfg = NonlinearConfig { seed: a.seed, ..NonlinearConfig::default() };
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if a.quick {
                cfg.ssm_particles = 2000;
                cfg.fit_particles = 200;
                cfg.eval_particles = 1000;
                cfg.max_evals = 40;
            }
            let (o, rec) = experiments::nonlinear_smooth(&cfg)?;
            extra = serde_json::to_value(&rec)?;
            o
        }
        ExperimentName::TrendDemo | ExperimentName::SeasonalDemo => {
            let mut cfg = DemoConfig { seed: a.seed, ..DemoConfig::default() };
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(p) = a.period {
                cfg.period = p;
            }
            if a.quick {
                cfg.particles = 500;
                cfg.fit_particles = 100;
                cfg.max_evals = 30;
            }
            if a.name == ExperimentName::TrendDemo {
                experiments::trend_demo(&cfg, data)?
            } else {
                experiments::seasonal_demo(&cfg, data)?
            }
        }
    };
    let art = Artifacts::new(out, "experiment", config(a)?)?;
    art.markdown("table.md", &result.table.to_markdown())?;
    write_files(&art, &result.files)?;
    art.json(
        "experiment.json",
        json!({
            "table": serde_json::to_value(&result.table)?,
            "state_recovery": extra,
        }),
    )
}

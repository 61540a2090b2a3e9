//! Bootstrap particle filter.
//!
//! Each step propagates every particle through the transition sampler,
//! weights it by the observation density, adds the log mean weight to the
//! likelihood and resamples. Particle `i` at step `n` draws from its own
//! stream derived from `(seed, n, i)`, so results do not depend on how rayon
//! schedules the work.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, name_tag, StreamRng};

/// Transition sampler and observation density of a nonlinear state-space
/// model. States are stored flat, `state_dim` values per particle.
pub trait StateSpaceModel: Sync {
    fn state_dim(&self) -> usize;

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);

    /// Draws `x_n` given `x_{n-1} = prev`. Steps count from 1.
    fn sample_transition(&self, prev: &[f64], step: usize, rng: &mut StreamRng, out: &mut [f64]);

    /// `log p(y_n | x_n)`; may be `-inf`.
    fn obs_log_density(&self, state: &[f64], y: f64, step: usize) -> f64;

    /// Propagates the whole cloud. The default calls `sample_transition` per
    /// particle with [`particle_rng`]; models with a cheaper batch path
    /// override it and must use the same per-particle streams.
    fn propagate(&self, prev: &[f64], step: usize, step_seed: u64, out: &mut [f64]) -> Result<()> {
        let d = self.state_dim();
        prev.par_chunks_exact(d)
            .zip(out.par_chunks_exact_mut(d))
            .enumerate()
            .with_min_len(512)
            .for_each(|(i, (p, o))| {
                let mut rng = particle_rng(step_seed, i);
                self.sample_transition(p, step, &mut rng, o);
            });
        Ok(())
    }

    /// Scalar reported in summaries; the first state coordinate by default.
    fn summary(&self, state: &[f64]) -> f64 {
        state[0]
    }
}

/// Stream of particle `index` within one step.
pub fn particle_rng(step_seed: u64, index: usize) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(step_seed, &[index as u64]))
}

fn step_seed(seed: u64, tag: &str, step: usize) -> u64 {
    derive_seed(seed, &[name_tag(tag), step as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

impl std::str::FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Resampling::Multinomial),
            "systematic" => Ok(Resampling::Systematic),
            _ => Err(Error::InvalidParameter(format!("unknown resampling scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PfOptions {
    pub particles: usize,
    pub seed: u64,
    pub resampling: Resampling,
    /// Resample only when the effective sample size falls below this
    /// fraction of the particle count. `None` resamples every step.
    pub ess_threshold: Option<f64>,
    /// Skip the per-step quantiles when only the likelihood is needed.
    pub summaries: bool,
    /// Keep clouds and ancestry for fixed-lag smoothing.
    pub keep_history: bool,
    /// Explicit starting cloud, flat, replacing `sample_initial`.
    #[serde(skip)]
    pub initial: Option<Vec<f64>>,
}

impl PfOptions {
    pub fn new(particles: usize, seed: u64) -> Self {
        PfOptions {
            particles,
            seed,
            resampling: Resampling::Multinomial,
            ess_threshold: None,
            summaries: true,
            keep_history: false,
            initial: None,
        }
    }

    pub fn loglik_only(mut self) -> Self {
        self.summaries = false;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn with_resampling(mut self, scheme: Resampling) -> Self {
        self.resampling = scheme;
        self
    }

    pub fn with_ess_threshold(mut self, fraction: f64) -> Self {
        self.ess_threshold = Some(fraction);
        self
    }

    pub fn with_initial(mut self, cloud: Vec<f64>) -> Self {
        self.initial = Some(cloud);
        self
    }
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub mean: f64,
    pub sd: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
    /// Effective sample size before resampling.
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct History {
    /// Summary values of the cloud after each step, `m` per step.
    pub values: Vec<Vec<f64>>,
    /// Normalized weights after each step (uniform after resampling).
    pub weights: Vec<Vec<f64>>,
    /// `ancestors[n][i]`: index at step `n - 1` of the parent of particle `i`
    /// at step `n`.
    pub ancestors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PfRun {
    pub loglik: f64,
    pub step_logliks: Vec<f64>,
    /// Empty when summaries were switched off.
    pub summaries: Vec<StepSummary>,
    pub particles: usize,
    pub seed: u64,
    pub resample_count: usize,
    pub min_ess: f64,
    /// Final cloud, flat.
    #[serde(skip)]
    pub cloud: Vec<f64>,
    #[serde(skip)]
    pub history: Option<History>,
}

/// `log(sum exp(v))`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log of the mean of `exp(logw)`.
pub fn log_mean_weight(logw: &[f64]) -> f64 {
    log_sum_exp(logw) - (logw.len() as f64).ln()
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("no weights to resample".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("all weights are zero".into()));
    }
    Ok(total)
}

/// Ancestor indices for `count` draws with probabilities proportional to
/// `weights`, returned in ascending order.
pub fn resample_indices<R: Rng>(weights: &[f64], count: usize, scheme: Resampling, rng: &mut R) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let points: Vec<f64> = match scheme {
        Resampling::Multinomial => {
            // normalized partial sums of exponentials are sorted uniforms
            let mut acc = 0.0;
            let mut sums: Vec<f64> = (0..count)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    acc += e;
                    acc
                })
                .collect();
            let tail: f64 = Exp1.sample(rng);
            let end = acc + tail;
            sums.iter_mut().for_each(|s| *s *= total / end);
            sums
        }
        Resampling::Systematic => {
            let u: f64 = rng.random();
            let step = total / count as f64;
            (0..count).map(|k| (k as f64 + u) * step).collect()
        }
    };
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    let mut cum = weights[0];
    for p in points {
        while p >= cum && j < last {
            j += 1;
            cum += weights[j];
        }
        // a zero-weight tail can absorb rounding at the end; step back to the
        // last particle that carries weight
        let mut k = j;
        while weights[k] == 0.0 && k > 0 {
            k -= 1;
        }
        out.push(k);
    }
    Ok(out)
}

/// Resamples a flat cloud of `dim`-dimensional particles.
pub fn resample<R: Rng>(particles: &[f64], dim: usize, weights: &[f64], scheme: Resampling, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 || particles.len() != weights.len() * dim {
        return Err(Error::Dimension(format!(
            "{} particle values do not match {} weights of dimension {dim}",
            particles.len(),
            weights.len()
        )));
    }
    let idx = resample_indices(weights, weights.len(), scheme, rng)?;
    Ok(gather(particles, dim, &idx))
}

fn gather(particles: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend_from_slice(&particles[i * dim..(i + 1) * dim]);
    }
    out
}

/// Weighted quantile: the smallest value whose cumulative weight reaches `q`.
fn weighted_quantiles(values: &[f64], weights: Option<&[f64]>, levels: &[f64]) -> Vec<f64> {
    let m = values.len();
    match weights {
        None => {
            let mut v = values.to_vec();
            levels
                .iter()
                .map(|&q| {
                    let k = ((q * m as f64).ceil() as usize).clamp(1, m) - 1;
                    *v.select_nth_unstable_by(k, f64::total_cmp).1
                })
                .collect()
        }
        Some(w) => {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let mut out = Vec::with_capacity(levels.len());
            for &q in levels {
                let mut acc = 0.0;
                let mut pick = values[order[m - 1]];
                for &i in &order {
                    acc += w[i];
                    if acc >= q {
                        pick = values[i];
                        break;
                    }
                }
                out.push(pick);
            }
            out
        }
    }
}

fn summarize(step: usize, values: &[f64], weights: Option<&[f64]>, ess: f64, quantiles: bool) -> StepSummary {
    let m = values.len() as f64;
    let (mean, var) = match weights {
        None => {
            let mean = values.iter().sum::<f64>() / m;
            (mean, values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m)
        }
        Some(w) => {
            let mean: f64 = values.iter().zip(w).map(|(v, w)| v * w).sum();
            (mean, values.iter().zip(w).map(|(v, w)| w * (v - mean).powi(2)).sum())
        }
    };
    let mut q = [f64::NAN; 5];
    if quantiles {
        q.copy_from_slice(&weighted_quantiles(values, weights, &QUANTILE_LEVELS));
    }
    StepSummary { step, mean, sd: var.sqrt(), quantiles: q, ess }
}

/// Runs the filter over `y`. Every observation must be finite.
pub fn pf_run<M: StateSpaceModel + ?Sized>(model: &M, y: &[f64], opts: &PfOptions) -> Result<PfRun> {
    let m = opts.particles;
    let d = model.state_dim();
    if m < 1 {
        return Err(Error::InvalidParameter("particle count must be positive".into()));
    }
    if d == 0 {
        return Err(Error::Dimension("model has zero state dimension".into()));
    }
    if let Some(t) = opts.ess_threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParameter(format!("ESS threshold must lie in (0, 1], got {t}")));
        }
    }
    if let Some(n) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite observation at step {}", n + 1)));
    }

    let mut cloud = match &opts.initial {
        Some(c) => {
            if c.len() != m * d {
                return Err(Error::Dimension(format!(
                    "initial cloud has {} values, expected {}",
                    c.len(),
                    m * d
                )));
            }
            c.clone()
        }
        None => {
            let s0 = step_seed(opts.seed, "initial", 0);
            let mut c = vec![0.0; m * d];
            c.par_chunks_exact_mut(d).enumerate().with_min_len(512).for_each(|(i, o)| {
                model.sample_initial(&mut particle_rng(s0, i), o);
            });
            c
        }
    };
    let mut next = vec![0.0; m * d];
    let mut logw = vec![0.0; m];
    // normalized log weights carried between steps
    let mut carried: Option<Vec<f64>> = None;
    let uniform_log = -(m as f64).ln();

    let mut step_logliks = Vec::with_capacity(y.len());
    let mut summaries = Vec::with_capacity(if opts.summaries { y.len() } else { 0 });
    let mut history = opts.keep_history.then(|| History {
        values: Vec::with_capacity(y.len()),
        weights: Vec::with_capacity(y.len()),
        ancestors: Vec::with_capacity(y.len()),
    });
    let mut resample_count = 0;
    let mut min_ess = f64::INFINITY;

    for (k, &obs) in y.iter().enumerate() {
        let n = k + 1;
        model.propagate(&cloud, n, step_seed(opts.seed, "propagate", n), &mut next)?;
        next.par_chunks_exact(d)
            .zip(logw.par_iter_mut())
            .with_min_len(512)
            .for_each(|(x, w)| {
                let v = model.obs_log_density(x, obs, n);
                *w = if v.is_nan() { f64::NEG_INFINITY } else { v };
            });
        if let Some(c) = &carried {
            logw.iter_mut().zip(c).for_each(|(w, c)| *w += c);
        } else {
            logw.iter_mut().for_each(|w| *w += uniform_log);
        }
        let lse = log_sum_exp(&logw);
        if lse == f64::NEG_INFINITY {
            return Err(Error::Collapse { step: n });
        }
        step_logliks.push(lse);
        let weights: Vec<f64> = logw.iter().map(|w| (w - lse).exp()).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        min_ess = min_ess.min(ess);

        let do_resample = opts.ess_threshold.is_none_or(|t| ess < t * m as f64);
        let ancestors;
        if do_resample {
            let mut rng = StreamRng::seed_from_u64(step_seed(opts.seed, "resample", n));
            ancestors = resample_indices(&weights, m, opts.resampling, &mut rng)?;
            for (i, &a) in ancestors.iter().enumerate() {
                cloud[i * d..(i + 1) * d].copy_from_slice(&next[a * d..(a + 1) * d]);
            }
            carried = None;
            resample_count += 1;
        } else {
            ancestors = (0..m).collect();
            std::mem::swap(&mut cloud, &mut next);
            carried = Some(logw.iter().map(|w| w - lse).collect());
        }

        let current_weights = (!do_resample).then_some(weights);
        if opts.summaries || history.is_some() {
            let values: Vec<f64> = cloud.chunks_exact(d).map(|x| model.summary(x)).collect();
            if opts.summaries {
                summaries.push(summarize(n, &values, current_weights.as_deref(), ess, true));
            }
            if let Some(h) = history.as_mut() {
                h.values.push(values);
                h.weights.push(current_weights.unwrap_or_else(|| vec![1.0 / m as f64; m]));
                h.ancestors.push(ancestors);
            }
        }
    }
    Ok(PfRun {
        loglik: step_logliks.iter().sum(),
        step_logliks,
        summaries,
        particles: m,
        seed: opts.seed,
        resample_count,
        min_ess: if y.is_empty() { m as f64 } else { min_ess },
        cloud,
        history,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothedStep {
    pub step: usize,
    pub mean: f64,
    pub median: f64,
    /// Distinct ancestors at this step among the particles that carry the
    /// estimate, as a fraction of the particle count.
    pub diversity: f64,
}

/// Fixed-lag smoothing from the stored ancestry: the estimate at step `n`
/// uses the cloud at step `min(n + lag, N)` traced back to step `n`.
pub fn fixed_lag_smooth(run: &PfRun, lag: usize) -> Result<Vec<SmoothedStep>> {
    let h = run
        .history
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("run was made without history".into()))?;
    let big_n = h.values.len();
    if lag >= big_n.max(1) {
        return Err(Error::InvalidParameter(format!("lag {lag} must be smaller than the series length {big_n}")));
    }
    let m = run.particles;
    let mut out = Vec::with_capacity(big_n);
    let mut seen = vec![usize::MAX; m];
    for n in 0..big_n {
        let t = (n + lag).min(big_n - 1);
        let mut idx: Vec<usize> = (0..m).collect();
        for k in (n + 1..=t).rev() {
            idx.iter_mut().for_each(|i| *i = h.ancestors[k][*i]);
        }
        let w = &h.weights[t];
        let values: Vec<f64> = idx.iter().map(|&i| h.values[n][i]).collect();
        let mean: f64 = values.iter().zip(w).map(|(v, w)| v * w).sum();
        let median = weighted_quantiles(&values, Some(w), &[0.5])[0];
        let mut distinct = 0;
        for &i in &idx {
            if seen[i] != n {
                seen[i] = n;
                distinct += 1;
            }
        }
        out.push(SmoothedStep { step: n + 1, mean, median, diversity: distinct as f64 / m as f64 });
    }
    Ok(out)
}

/// Writes `step,mean,sd,q025,q25,q50,q75,q975,ess`.
pub fn write_summaries_csv<W: Write>(summaries: &[StepSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "mean", "sd", "q025", "q25", "q50", "q75", "q975", "ess"])?;
    for s in summaries {
        let mut rec = vec![s.step.to_string(), s.mean.to_string(), s.sd.to_string()];
        rec.extend(s.quantiles.iter().map(|q| q.to_string()));
        rec.push(s.ess.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

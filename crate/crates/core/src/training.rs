//! Training pairs for transition GPs.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::Kernel;
use crate::particle::{fixed_lag_smooth, PfRun};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TrueSimulation,
    KalmanSmoothed,
    PfSmoothed,
    SyntheticShape,
    File,
}

/// Lagged-state inputs with one-step-ahead targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPairs {
    /// Each input is `(x_{n-1}, ..., x_{n-d})`.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub provenance: Provenance,
    /// Input values subtracted from the targets, one per pair.
    pub subtracted_input: Option<Vec<f64>>,
}

impl TransitionPairs {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let p = TransitionPairs { inputs, targets, provenance, subtracted_input: None };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let d = self.dim();
        if self.inputs.iter().any(|x| x.len() != d) {
            return Err(Error::Dimension("inputs have mixed dimensions".into()));
        }
        if self.inputs.iter().flatten().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(Error::Data("training pairs must be finite".into()));
        }
        Ok(())
    }

    /// Concatenates several pair sets of the same dimension.
    pub fn concat(sets: &[TransitionPairs]) -> Result<TransitionPairs> {
        let first = sets.first().ok_or_else(|| Error::InvalidParameter("nothing to concatenate".into()))?;
        let mut out = TransitionPairs {
            inputs: Vec::new(),
            targets: Vec::new(),
            provenance: first.provenance,
            subtracted_input: first.subtracted_input.as_ref().map(|_| Vec::new()),
        };
        for s in sets {
            if s.dim() != first.dim() {
                return Err(Error::Dimension("pair sets differ in dimension".into()));
            }
            out.inputs.extend(s.inputs.iter().cloned());
            out.targets.extend(&s.targets);
            match (&mut out.subtracted_input, &s.subtracted_input) {
                (Some(acc), Some(u)) => acc.extend(u),
                (None, None) => {}
                _ => return Err(Error::InvalidParameter("mixing pairs with and without subtracted input".into())),
            }
        }
        Ok(out)
    }

    /// GP regression of targets on inputs.
    pub fn fit_gp(&self, kernel: Kernel, noise_var: f64) -> Result<GpModel> {
        GpModel::fit(self.inputs.clone(), self.targets.clone(), kernel, noise_var)
    }

    /// Writes `x1,...,xd,target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("target".into());
        w.write_record(&header)?;
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{t:?}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`TransitionPairs::write_csv`]; lines starting
    /// with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<TransitionPairs> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let header = r.headers()?.clone();
        let width = header.len();
        if width < 2 || header.get(width - 1) != Some("target") {
            return Err(Error::Data("pairs CSV needs columns x1..xd,target".into()));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            if vals.len() != width {
                return Err(Error::Data(format!("line {line}: expected {width} fields")));
            }
            targets.push(vals[width - 1]);
            inputs.push(vals[..width - 1].to_vec());
        }
        TransitionPairs::new(inputs, targets, Provenance::File)
    }
}

/// Pairs `(x_{n-1}, ..., x_{n-d}) -> x_n - u_n`, keeping every `stride`-th.
///
/// `input`, when given, is aligned with `states`.
pub fn pairs_from_states(
    states: &[f64],
    lag: usize,
    input: Option<&[f64]>,
    stride: usize,
    provenance: Provenance,
) -> Result<TransitionPairs> {
    if lag == 0 || stride == 0 {
        return Err(Error::InvalidParameter("lag and stride must be positive".into()));
    }
    if states.len() <= lag {
        return Err(Error::Data(format!("{} states are too few for lag {lag}", states.len())));
    }
    if let Some(u) = input {
        if u.len() < states.len() {
            return Err(Error::Dimension(format!("input has {} values, states {}", u.len(), states.len())));
        }
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut subtracted = input.map(|_| Vec::new());
    for n in (lag..states.len()).step_by(stride) {
        inputs.push((1..=lag).map(|k| states[n - k]).collect());
        let u = input.map_or(0.0, |u| u[n]);
        targets.push(states[n] - u);
        if let Some(s) = subtracted.as_mut() {
            s.push(u);
        }
    }
    let mut pairs = TransitionPairs::new(inputs, targets, provenance)?;
    pairs.subtracted_input = subtracted;
    Ok(pairs)
}

/// `count` equispaced points over `range` (inclusive).
pub fn linspace(range: (f64, f64), count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![range.0];
    }
    let step = (range.1 - range.0) / (count - 1) as f64;
    (0..count).map(|i| range.0 + step * i as f64).collect()
}

/// Noisy evaluations of `f` on an equispaced grid.
pub fn synthetic_function_pairs<F: Fn(f64) -> f64>(
    f: F,
    range: (f64, f64),
    count: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<TransitionPairs> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 points, got {count}")));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(Error::InvalidParameter(format!("empty range [{}, {}]", range.0, range.1)));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidParameter("noise sd must be finite and nonnegative".into()));
    }
    let mut rng = substream(seed, "synthetic-pairs");
    let xs = linspace(range, count);
    let targets = xs
        .iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f(x) + noise_sd * z
        })
        .collect();
    TransitionPairs::new(xs.into_iter().map(|x| vec![x]).collect(), targets, Provenance::SyntheticShape)
}

pub const DEFAULT_SYNTHETIC_COUNT: usize = 41;

/// Noisy step function: `lo` below `jump_at`, `hi` at or above it.
pub fn synthetic_step_pairs(
    jump_at: f64,
    levels: (f64, f64),
    noise_sd: f64,
    count: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<TransitionPairs> {
    synthetic_function_pairs(|x| if x < jump_at { levels.0 } else { levels.1 }, range, count, noise_sd, seed)
}

/// Pairs built from the posterior medians of a particle-filter run,
/// fixed-lag smoothed over `smoothing_lag` steps.
pub fn pairs_from_pf(
    run: &PfRun,
    lag: usize,
    smoothing_lag: usize,
    input: Option<&[f64]>,
    stride: usize,
) -> Result<TransitionPairs> {
    let states: Vec<f64> = if smoothing_lag == 0 && run.history.is_none() {
        run.summaries.iter().map(|s| s.quantiles[2]).collect()
    } else {
        fixed_lag_smooth(run, smoothing_lag)?.iter().map(|s| s.median).collect()
    };
    if states.is_empty() {
        return Err(Error::Data("run carries no state summaries".into()));
    }
    pairs_from_states(&states, lag, input, stride, Provenance::PfSmoothed)
}

/// Pairs from `count` trajectories traced back through the run's ancestry,
/// concatenated. The run must keep its history.
pub fn pairs_from_trajectories(
    run: &PfRun,
    count: usize,
    lag: usize,
    input: Option<&[f64]>,
    stride: usize,
    seed: u64,
) -> Result<TransitionPairs> {
    use rand::Rng;
    let h = run
        .history
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("run was made without history".into()))?;
    let big_n = h.values.len();
    if count == 0 || big_n == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory and one step".into()));
    }
    let mut rng = substream(seed, "trajectories");
    let mut sets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut i = rng.random_range(0..run.particles);
        let mut path = vec![0.0; big_n];
        for n in (0..big_n).rev() {
            path[n] = h.values[n][i];
            i = h.ancestors[n][i];
        }
        sets.push(pairs_from_states(&path, lag, input, stride, Provenance::PfSmoothed)?);
    }
    TransitionPairs::concat(&sets)
}

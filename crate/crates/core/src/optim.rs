//! Derivative-free maximum-likelihood estimation.
//!
//! [`nelder_mead_max`] maximizes an objective over natural parameter values
//! while the simplex moves in transformed coordinates (log for variances and
//! length scales). Stochastic objectives must fix their seed so that every
//! evaluation sees the same random numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub fn forward(self, natural: f64) -> f64 {
        match self {
            Transform::Identity => natural,
            Transform::Log => natural.ln(),
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptProblem {
    pub names: Vec<String>,
    pub transforms: Vec<Transform>,
    /// Starting point in natural coordinates.
    pub initial: Vec<f64>,
    /// Initial simplex edge per coordinate, in transformed space.
    pub step: Vec<f64>,
    pub max_evals: usize,
    /// Stop once the simplex value spread falls below this.
    pub tol: f64,
    /// Extra simplex rebuilds around the incumbent after convergence.
    pub restarts: usize,
}

impl OptProblem {
    /// Problem with default step 0.5, budget 400 and tolerance 1e-6.
    pub fn new(names: &[&str], transforms: &[Transform], initial: &[f64]) -> Self {
        OptProblem {
            names: names.iter().map(|s| s.to_string()).collect(),
            transforms: transforms.to_vec(),
            initial: initial.to_vec(),
            step: vec![0.5; initial.len()],
            max_evals: 400,
            tol: 1e-6,
            restarts: 1,
        }
    }

    pub fn with_budget(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_step(mut self, step: &[f64]) -> Self {
        self.step = step.to_vec();
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Optimizer("problem has no parameters".into()));
        }
        if self.names.len() != d || self.transforms.len() != d || self.step.len() != d {
            return Err(Error::Dimension(format!(
                "{d} parameters but {} names, {} transforms, {} steps",
                self.names.len(),
                self.transforms.len(),
                self.step.len()
            )));
        }
        for (i, (&x, &t)) in self.initial.iter().zip(&self.transforms).enumerate() {
            if !x.is_finite() || (t == Transform::Log && x <= 0.0) {
                return Err(Error::Optimizer(format!(
                    "initial value {x} of '{}' is outside its domain",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }

    pub fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.transforms).map(|(&v, t)| t.inverse(v)).collect()
    }

    pub fn to_transformed(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.transforms).map(|(&v, t)| t.forward(v)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub transformed: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best value so far, recorded after every iteration.
    pub trace: Vec<f64>,
}

struct Counter<'a, F> {
    problem: &'a OptProblem,
    objective: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<'_, F> {
    fn eval(&mut self, z: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.objective)(&self.problem.to_natural(z));
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.problem.max_evals
    }
}

/// Maximizes `objective` with the Nelder-Mead simplex method.
///
/// Non-finite objective values rank below every finite one. Running out of
/// budget is not an error: the incumbent is returned with `converged = false`.
pub fn nelder_mead_max<F>(problem: &OptProblem, objective: F) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> f64,
{
    problem.validate()?;
    let mut c = Counter { problem, objective, evals: 0 };
    let z0 = problem.to_transformed(&problem.initial);
    let f0 = c.eval(&z0);
    if !f0.is_finite() {
        return Err(Error::Optimizer(format!("objective is not finite at the initial point ({f0})")));
    }
    let mut best = (z0, f0);
    let mut trace = vec![f0];
    let mut converged = false;
    for _ in 0..=problem.restarts {
        let (z, f, conv) = simplex_run(&mut c, best.clone(), &mut trace);
        let improved = f > best.1 + problem.tol;
        if f > best.1 {
            best = (z, f);
        }
        converged = conv;
        if !conv || !improved {
            break;
        }
    }
    Ok(OptResult {
        params: problem.to_natural(&best.0),
        transformed: best.0,
        value: best.1,
        evals: c.evals,
        converged,
        trace,
    })
}

fn simplex_run<F: FnMut(&[f64]) -> f64>(
    c: &mut Counter<'_, F>,
    start: (Vec<f64>, f64),
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    let d = start.0.len();
    let mut pts = vec![start.0.clone()];
    let mut vals = vec![start.1];
    for i in 0..d {
        if c.exhausted() {
            break;
        }
        let mut p = start.0.clone();
        p[i] += c.problem.step[i];
        vals.push(c.eval(&p));
        pts.push(p);
    }
    let record = |trace: &mut Vec<f64>, vals: &[f64]| {
        let b = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let prev = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(b.max(prev));
    };
    if pts.len() < d + 1 {
        record(trace, &vals);
        let i = argmax(&vals);
        return (pts[i].clone(), vals[i], false);
    }
    loop {
        // descending by value; ties keep insertion order
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        record(trace, &vals);

        let spread = vals[0] - vals[d];
        if spread.is_finite() && spread < c.problem.tol {
            return (pts[0].clone(), vals[0], true);
        }
        if c.exhausted() {
            return (pts[0].clone(), vals[0], false);
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let toward = |t: f64, target: &[f64]| -> Vec<f64> {
            centroid.iter().zip(target).map(|(cj, xj)| cj + t * (xj - cj)).collect()
        };
        let worst = pts[d].clone();
        let xr = toward(-REFLECT, &worst);
        let fr = c.eval(&xr);
        if fr > vals[0] {
            let xe = toward(EXPAND, &xr);
            let fe = if c.exhausted() { f64::NEG_INFINITY } else { c.eval(&xe) };
            if fe > fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
            continue;
        }
        if fr > vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
            continue;
        }
        if c.exhausted() {
            continue;
        }
        // outside contraction when the reflection beat the worst vertex, inside otherwise
        let xc = if fr > vals[d] { toward(CONTRACT, &xr) } else { toward(CONTRACT, &worst) };
        let fc = c.eval(&xc);
        if fc > fr.max(vals[d]) {
            pts[d] = xc;
            vals[d] = fc;
            continue;
        }
        for i in 1..=d {
            if c.exhausted() {
                break;
            }
            let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + SHRINK * (x - b)).collect();
            vals[i] = c.eval(&p);
            pts[i] = p;
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

/// Objective along one coordinate with the others held at `at`.
pub fn profile_grid<F>(at: &[f64], index: usize, grid: &[f64], mut objective: F) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(&[f64]) -> f64,
{
    if index >= at.len() {
        return Err(Error::Dimension(format!("index {index} out of range for {} parameters", at.len())));
    }
    Ok(grid
        .iter()
        .map(|&g| {
            let mut p = at.to_vec();
            p[index] = g;
            (g, objective(&p))
        })
        .collect())
}

/// Serializable summary of a maximum-likelihood fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub names: Vec<String>,
    pub natural: Vec<f64>,
    pub transformed: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub evals: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    /// Particle count for likelihoods estimated by particle filter.
    pub particles: Option<usize>,
}

impl FitReport {
    pub fn new(model: &str, problem: &OptProblem, result: &OptResult, seed: Option<u64>, particles: Option<usize>) -> Self {
        FitReport {
            model: model.to_string(),
            names: problem.names.clone(),
            natural: result.params.clone(),
            transformed: result.transformed.clone(),
            loglik: result.value,
            aic: crate::linear_ssm::aic(result.value, problem.dim()),
            evals: result.evals,
            converged: result.converged,
            seed,
            particles,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.natural[i])
    }
}

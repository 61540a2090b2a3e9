//! Linear-Gaussian state-space models.
//!
//! ```text
//! x_n = F x_{n-1} + G v_n,   v_n ~ N(0, Q),  Q diagonal
//! y_n = H x_n + w_n,         w_n ~ N(0, sigma^2)
//! ```
//!
//! with `x_0 ~ N(x0, V0)`. The filter uses the Joseph-form covariance update
//! and re-symmetrizes every stored covariance.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Diffuse prior variance used for nonstationary initial states.
pub const DIFFUSE_VARIANCE: f64 = 1e7;

/// Lower bound on the concentrated observation variance.
pub const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSsm {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Observation row `H`, stored as a column vector.
    pub h: DVector<f64>,
    /// Diagonal of `Q`.
    pub q: DVector<f64>,
    pub obs_var: f64,
    pub x0: DVector<f64>,
    pub v0: DMatrix<f64>,
}

impl LinearSsm {
    pub fn new(
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        q: DVector<f64>,
        obs_var: f64,
        x0: DVector<f64>,
        v0: DMatrix<f64>,
    ) -> Result<Self> {
        let model = LinearSsm { f, g, h, q, obs_var, x0, v0 };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.f.nrows();
        let l = self.q.len();
        let dims_ok = m > 0
            && self.f.ncols() == m
            && self.g.nrows() == m
            && self.g.ncols() == l
            && self.h.len() == m
            && self.x0.len() == m
            && self.v0.shape() == (m, m);
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "inconsistent model: F {:?}, G {:?}, H {}, Q {}, x0 {}, V0 {:?}",
                self.f.shape(),
                self.g.shape(),
                self.h.len(),
                l,
                self.x0.len(),
                self.v0.shape()
            )));
        }
        let all_finite = self.f.iter().chain(self.g.iter()).chain(self.h.iter()).chain(self.q.iter())
            .chain(self.x0.iter()).chain(self.v0.iter()).all(|v| v.is_finite());
        if !all_finite || !self.obs_var.is_finite() {
            return Err(Error::InvalidParameter("model entries must be finite".into()));
        }
        if self.q.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("Q entries must be nonnegative".into()));
        }
        if (&self.v0 - self.v0.transpose()).amax() > 1e-12 * self.v0.amax().max(1.0) {
            return Err(Error::InvalidParameter("V0 must be symmetric".into()));
        }
        Ok(())
    }

    /// Copy with every variance multiplied by `scale` (Q, V0 and sigma^2 := scale).
    ///
    /// Used with the concentrated likelihood, where Q and V0 are held as
    /// ratios to the observation variance.
    pub fn scaled(&self, scale: f64) -> LinearSsm {
        LinearSsm {
            q: &self.q * scale,
            v0: &self.v0 * scale,
            obs_var: scale,
            ..self.clone()
        }
    }

    fn gqg(&self) -> DMatrix<f64> {
        &self.g * DMatrix::from_diagonal(&self.q) * self.g.transpose()
    }

    /// Draws states and observations, `x` holding `x_1..x_N`.
    pub fn simulate<R: rand::Rng>(&self, n: usize, rng: &mut R) -> (Vec<DVector<f64>>, Vec<f64>) {
        use rand_distr::{Distribution, StandardNormal};
        let m = self.state_dim();
        let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
        let chol0 = symmetric_sqrt(&self.v0);
        let z = DVector::from_fn(m, |_, _| normal(rng));
        let mut x = &self.x0 + chol0 * z;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let v = DVector::from_fn(self.q.len(), |i, _| self.q[i].sqrt() * normal(rng));
            x = &self.f * &x + &self.g * v;
            ys.push(self.h.dot(&x) + self.obs_var.max(0.0).sqrt() * normal(rng));
            xs.push(x.clone());
        }
        (xs, ys)
    }
}

/// Square root of a symmetric PSD matrix via its eigendecomposition.
fn symmetric_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterStep {
    pub predicted_mean: DVector<f64>,
    pub predicted_cov: DMatrix<f64>,
    pub filtered_mean: DVector<f64>,
    pub filtered_cov: DMatrix<f64>,
    /// `y_n - H x_{n|n-1}`; `None` at missing steps.
    pub innovation: Option<f64>,
    /// `sigma^2 + H V_{n|n-1} H'`.
    pub innovation_var: f64,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
    pub n_observed: usize,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Standardized innovations `eps_n / sqrt(r_n)` at observed steps.
    pub fn standardized_innovations(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.innovation.map(|e| e / s.innovation_var.sqrt()))
            .collect()
    }
}

fn check_series(y: &[f64], mask: Option<&[bool]>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Data("empty series".into()));
    }
    if let Some(mask) = mask {
        if mask.len() != y.len() {
            return Err(Error::Dimension(format!(
                "mask has length {}, series {}",
                mask.len(),
                y.len()
            )));
        }
    }
    for (i, v) in y.iter().enumerate() {
        let missing = mask.is_some_and(|m| m[i]);
        if !missing && !v.is_finite() {
            return Err(Error::Data(format!("non-finite observation at step {}", i + 1)));
        }
    }
    Ok(())
}

/// Runs the Kalman filter. `mask[n] == true` marks `y[n]` as missing: the
/// update is skipped and the step adds nothing to the log-likelihood.
pub fn kalman_filter(model: &LinearSsm, y: &[f64], mask: Option<&[bool]>) -> Result<FilterOutput> {
    model.validate()?;
    if !(model.obs_var > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "observation variance must be positive, got {}",
            model.obs_var
        )));
    }
    check_series(y, mask)?;
    let m = model.state_dim();
    let gqg = model.gqg();
    let ident = DMatrix::<f64>::identity(m, m);
    let ft = model.f.transpose();
    let mut x = model.x0.clone();
    let mut v = model.v0.clone();
    let mut steps = Vec::with_capacity(y.len());
    let mut loglik = 0.0;
    let mut n_observed = 0;
    for (n, &yn) in y.iter().enumerate() {
        let xp = &model.f * &x;
        let mut vp = &model.f * &v * &ft + &gqg;
        symmetrize(&mut vp);
        let vh = &vp * &model.h;
        let r = model.obs_var + model.h.dot(&vh);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InnovationVariance { step: n + 1, value: r });
        }
        let missing = mask.is_some_and(|mk| mk[n]);
        let (xf, vf, innovation) = if missing {
            (xp.clone(), vp.clone(), None)
        } else {
            let eps = yn - model.h.dot(&xp);
            let gain = &vh / r;
            let xf = &xp + &gain * eps;
            let a = &ident - &gain * model.h.transpose();
            let mut vf = &a * &vp * a.transpose() + &gain * gain.transpose() * model.obs_var;
            symmetrize(&mut vf);
            loglik -= 0.5 * ((2.0 * PI).ln() + r.ln() + eps * eps / r);
            n_observed += 1;
            (xf, vf, Some(eps))
        };
        x = xf.clone();
        v = vf.clone();
        steps.push(FilterStep {
            predicted_mean: xp,
            predicted_cov: vp,
            filtered_mean: xf,
            filtered_cov: vf,
            innovation,
            innovation_var: r,
        });
    }
    Ok(FilterOutput { steps, loglik, n_observed })
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// Steps (1-based) where the predicted covariance was singular and a
    /// pseudo-inverse was used.
    pub pseudo_inverse_steps: Vec<usize>,
}

/// Fixed-interval (Rauch-Tung-Striebel) smoother over a filter run.
pub fn kalman_smoother(model: &LinearSsm, filt: &FilterOutput) -> Result<SmootherOutput> {
    let n = filt.len();
    if n == 0 {
        return Err(Error::Data("empty filter output".into()));
    }
    if filt.steps[0].filtered_mean.len() != model.state_dim() {
        return Err(Error::Dimension("filter output does not match the model".into()));
    }
    let mut means = vec![DVector::zeros(0); n];
    let mut covs = vec![DMatrix::zeros(0, 0); n];
    let mut pseudo = Vec::new();
    means[n - 1] = filt.steps[n - 1].filtered_mean.clone();
    covs[n - 1] = filt.steps[n - 1].filtered_cov.clone();
    for k in (0..n - 1).rev() {
        let cur = &filt.steps[k];
        let next = &filt.steps[k + 1];
        // A = V_{k|k} F' V_{k+1|k}^{-1}, computed as (V_{k+1|k}^{-1} F V_{k|k})'
        let rhs = &model.f * &cur.filtered_cov;
        let solved = match next.predicted_cov.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                pseudo.push(k + 1);
                let pinv = next
                    .predicted_cov
                    .clone()
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::Data(e.to_string()))?;
                pinv * rhs
            }
        };
        let gain = solved.transpose();
        let mean = &cur.filtered_mean + &gain * (&means[k + 1] - &next.predicted_mean);
        let mut cov = &cur.filtered_cov + &gain * (&covs[k + 1] - &next.predicted_cov) * gain.transpose();
        symmetrize(&mut cov);
        means[k] = mean;
        covs[k] = cov;
    }
    pseudo.reverse();
    Ok(SmootherOutput { means, covs, pseudo_inverse_steps: pseudo })
}

#[derive(Debug, Clone)]
pub struct Concentrated {
    pub loglik: f64,
    pub sigma2_hat: f64,
    /// Filter run on the unit-variance model.
    pub filter: FilterOutput,
}

/// Log-likelihood with the observation variance profiled out.
///
/// `model.q` and `model.v0` are read as ratios to the observation variance
/// and `model.obs_var` is ignored. With `r~_n` the unit-scale innovation
/// variances, `sigma2_hat = mean(eps_n^2 / r~_n)` and
/// `loglik = -1/2 (N log 2 pi + sum log(sigma2_hat r~_n) + N)`.
pub fn concentrated_loglik(model: &LinearSsm, y: &[f64], mask: Option<&[bool]>) -> Result<Concentrated> {
    let unit = LinearSsm { obs_var: 1.0, ..model.clone() };
    let filter = kalman_filter(&unit, y, mask)?;
    let mut sum_sq = 0.0;
    let mut sum_log_r = 0.0;
    let mut count = 0usize;
    for s in &filter.steps {
        if let Some(e) = s.innovation {
            sum_sq += e * e / s.innovation_var;
            sum_log_r += s.innovation_var.ln();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(Concentrated { loglik: 0.0, sigma2_hat: SIGMA2_FLOOR, filter });
    }
    let nf = count as f64;
    let sigma2_hat = (sum_sq / nf).max(SIGMA2_FLOOR);
    let loglik = -0.5 * (nf * (2.0 * PI).ln() + sum_log_r + nf * sigma2_hat.ln() + sum_sq / sigma2_hat);
    Ok(Concentrated { loglik, sigma2_hat, filter })
}

/// `-2 loglik + 2 k`.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRow {
    pub step: usize,
    pub y: Option<f64>,
    pub predicted_mean: f64,
    pub predicted_sd: f64,
    pub filtered_mean: f64,
    pub filtered_sd: f64,
    pub smoothed_mean: Option<f64>,
    pub smoothed_sd: Option<f64>,
}

/// Per-step summaries of `H x` for export.
pub fn step_rows(
    model: &LinearSsm,
    y: &[f64],
    mask: Option<&[bool]>,
    filt: &FilterOutput,
    smooth: Option<&SmootherOutput>,
) -> Vec<StepRow> {
    let h = &model.h;
    let sd = |v: &DMatrix<f64>| (h.dot(&(v * h))).max(0.0).sqrt();
    filt.steps
        .iter()
        .enumerate()
        .map(|(i, s)| StepRow {
            step: i + 1,
            y: if mask.is_some_and(|m| m[i]) { None } else { y.get(i).copied() },
            predicted_mean: h.dot(&s.predicted_mean),
            predicted_sd: sd(&s.predicted_cov),
            filtered_mean: h.dot(&s.filtered_mean),
            filtered_sd: sd(&s.filtered_cov),
            smoothed_mean: smooth.map(|sm| h.dot(&sm.means[i])),
            smoothed_sd: smooth.map(|sm| sd(&sm.covs[i])),
        })
        .collect()
}

/// Writes one CSV row per step with ±1, 2, 3 sd bands around the smoothed
/// (or, without a smoother, the filtered) mean.
pub fn write_csv<W: Write>(rows: &[StepRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "step,y,predicted_mean,predicted_sd,filtered_mean,filtered_sd,smoothed_mean,smoothed_sd,lower1,upper1,lower2,upper2,lower3,upper3"
    )?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
    for r in rows {
        let (c, s) = match (r.smoothed_mean, r.smoothed_sd) {
            (Some(c), Some(s)) => (c, s),
            _ => (r.filtered_mean, r.filtered_sd),
        };
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            opt(r.y),
            r.predicted_mean,
            r.predicted_sd,
            r.filtered_mean,
            r.filtered_sd,
            opt(r.smoothed_mean),
            opt(r.smoothed_sd)
        )?;
        for k in 1..=3 {
            let k = k as f64;
            write!(out, ",{},{}", c - k * s, c + k * s)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

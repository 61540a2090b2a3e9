//! Trend and seasonal decomposition models.
//!
//! The observation is `y_n = T_n + S_n + w_n` with a trend satisfying
//! `(1 - B)^k T_n = v_n` for `k` in {1, 2} and an optional seasonal component
//! with `S_n + S_{n-1} + ... + S_{n-p+1} = u_n`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_ssm::{self, kalman_filter, kalman_smoother, LinearSsm, DIFFUSE_VARIANCE};
use crate::optim::{nelder_mead_max, OptProblem, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompSpec {
    pub trend_order: usize,
    /// 0 for trend only, 1 for a seasonal component.
    pub seasonal_order: usize,
    /// Seasonal period, 0 without a seasonal component.
    pub period: usize,
    pub trend_var: f64,
    pub seasonal_var: f64,
    pub obs_var: f64,
}

impl DecompSpec {
    pub fn trend_only(trend_order: usize, trend_var: f64, obs_var: f64) -> Self {
        DecompSpec { trend_order, seasonal_order: 0, period: 0, trend_var, seasonal_var: 0.0, obs_var }
    }

    pub fn seasonal(trend_order: usize, period: usize, trend_var: f64, seasonal_var: f64, obs_var: f64) -> Self {
        DecompSpec { trend_order, seasonal_order: 1, period, trend_var, seasonal_var, obs_var }
    }

    pub fn has_seasonal(&self) -> bool {
        self.seasonal_order > 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.trend_order) {
            return Err(Error::InvalidParameter(format!("trend order must be 1 or 2, got {}", self.trend_order)));
        }
        if self.seasonal_order > 1 {
            return Err(Error::InvalidParameter(format!(
                "seasonal order must be 0 or 1, got {}",
                self.seasonal_order
            )));
        }
        if self.has_seasonal() && self.period < 2 {
            return Err(Error::InvalidParameter(format!("seasonal period must be at least 2, got {}", self.period)));
        }
        let vars = [self.trend_var, self.seasonal_var];
        if vars.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("system variances must be finite and nonnegative".into()));
        }
        if !(self.obs_var.is_finite() && self.obs_var > 0.0) {
            return Err(Error::InvalidParameter(format!("observation variance must be positive, got {}", self.obs_var)));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.trend_order + if self.has_seasonal() { self.period - 1 } else { 0 }
    }

    /// Variances counted by the AIC: the system variances and sigma^2.
    pub fn n_params(&self) -> usize {
        if self.has_seasonal() {
            3
        } else {
            2
        }
    }

    /// Trend-only or trend-plus-seasonal model, whichever the spec describes.
    pub fn model(&self) -> Result<LinearSsm> {
        if self.has_seasonal() {
            build_seasonal(self)
        } else {
            self.validate()?;
            build_trend(self.trend_order, self.trend_var, self.obs_var)
        }
    }
}

fn trend_block(order: usize) -> Result<DMatrix<f64>> {
    match order {
        1 => Ok(DMatrix::from_element(1, 1, 1.0)),
        2 => Ok(DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 0.0])),
        _ => Err(Error::InvalidParameter(format!("trend order must be 1 or 2, got {order}"))),
    }
}

/// Trend model with state `(T_n, T_{n-1})` for order 2 and a diffuse prior.
pub fn build_trend(order: usize, trend_var: f64, obs_var: f64) -> Result<LinearSsm> {
    let f = trend_block(order)?;
    let m = f.nrows();
    let mut g = DMatrix::zeros(m, 1);
    g[(0, 0)] = 1.0;
    let mut h = DVector::zeros(m);
    h[0] = 1.0;
    LinearSsm::new(
        f,
        g,
        h,
        DVector::from_element(1, trend_var),
        obs_var,
        DVector::zeros(m),
        DMatrix::identity(m, m) * DIFFUSE_VARIANCE,
    )
}

/// Block-diagonal trend-plus-seasonal model with a diffuse prior.
pub fn build_seasonal(spec: &DecompSpec) -> Result<LinearSsm> {
    spec.validate()?;
    if !spec.has_seasonal() {
        return Err(Error::InvalidParameter("spec has no seasonal component".into()));
    }
    let k = spec.trend_order;
    let s = spec.period - 1;
    let m = k + s;
    let mut f = DMatrix::zeros(m, m);
    f.view_mut((0, 0), (k, k)).copy_from(&trend_block(k)?);
    for j in 0..s {
        f[(k, k + j)] = -1.0;
    }
    for i in 1..s {
        f[(k + i, k + i - 1)] = 1.0;
    }
    let mut g = DMatrix::zeros(m, 2);
    g[(0, 0)] = 1.0;
    g[(k, 1)] = 1.0;
    let mut h = DVector::zeros(m);
    h[0] = 1.0;
    h[k] = 1.0;
    LinearSsm::new(
        f,
        g,
        h,
        DVector::from_column_slice(&[spec.trend_var, spec.seasonal_var]),
        spec.obs_var,
        DVector::zeros(m),
        DMatrix::identity(m, m) * DIFFUSE_VARIANCE,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub spec: DecompSpec,
    pub trend: Vec<f64>,
    pub trend_sd: Vec<f64>,
    /// All zeros without a seasonal component.
    pub seasonal: Vec<f64>,
    pub seasonal_sd: Vec<f64>,
    /// `y - trend - seasonal`; NaN where `y` is missing.
    pub residual: Vec<f64>,
    /// Exact log-likelihood at the spec's variances.
    pub loglik: f64,
    /// Log-likelihood with sigma^2 profiled out, system variances held as
    /// ratios to the spec's sigma^2.
    pub concentrated_loglik: f64,
    pub sigma2_hat: f64,
    pub aic: f64,
}

/// Missing-value mask, `true` where `y` is not finite.
pub(crate) fn missing_mask(y: &[f64]) -> Option<Vec<bool>> {
    if y.iter().all(|v| v.is_finite()) {
        None
    } else {
        Some(y.iter().map(|v| !v.is_finite()).collect())
    }
}

fn ratio_model(spec: &DecompSpec) -> Result<LinearSsm> {
    let mut m = spec.model()?;
    // the diffuse prior stays diffuse as a ratio
    m.q /= spec.obs_var;
    m.obs_var = 1.0;
    Ok(m)
}

/// Smoothed trend and seasonal components. Non-finite entries of `y` are
/// treated as missing.
pub fn decompose(y: &[f64], spec: &DecompSpec) -> Result<Decomposition> {
    let model = spec.model()?;
    let dim = spec.state_dim();
    if y.len() <= dim || (spec.has_seasonal() && y.len() <= 2 * spec.period) {
        return Err(Error::Data(format!(
            "series of length {} is too short for a state of dimension {dim} (period {})",
            y.len(),
            spec.period
        )));
    }
    let mask = missing_mask(y);
    let filt = kalman_filter(&model, y, mask.as_deref())?;
    let smooth = kalman_smoother(&model, &filt)?;
    let k = spec.trend_order;
    let sd = |c: &DMatrix<f64>, i: usize| c[(i, i)].max(0.0).sqrt();
    let trend: Vec<f64> = smooth.means.iter().map(|m| m[0]).collect();
    let trend_sd = smooth.covs.iter().map(|c| sd(c, 0)).collect();
    let (seasonal, seasonal_sd): (Vec<f64>, Vec<f64>) = if spec.has_seasonal() {
        smooth.means.iter().zip(&smooth.covs).map(|(m, c)| (m[k], sd(c, k))).unzip()
    } else {
        (vec![0.0; y.len()], vec![0.0; y.len()])
    };
    let residual = y
        .iter()
        .zip(trend.iter().zip(&seasonal))
        .map(|(&v, (t, s))| if v.is_finite() { v - t - s } else { f64::NAN })
        .collect();
    let conc = linear_ssm::concentrated_loglik(&ratio_model(spec)?, y, mask.as_deref())?;
    Ok(Decomposition {
        spec: *spec,
        trend,
        trend_sd,
        seasonal,
        seasonal_sd,
        residual,
        loglik: filt.loglik,
        concentrated_loglik: conc.loglik,
        sigma2_hat: conc.sigma2_hat,
        aic: linear_ssm::aic(conc.loglik, spec.n_params()),
    })
}

/// Model structure searched by [`fit_decomp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub trend_order: usize,
    /// 0 for trend only.
    pub period: usize,
}

/// Every trend order, with and (optionally) without the seasonal component.
pub fn structure_grid(trend_orders: &[usize], period: Option<usize>, include_nonseasonal: bool) -> Vec<Structure> {
    let mut out = Vec::new();
    for &trend_order in trend_orders {
        if let Some(p) = period {
            out.push(Structure { trend_order, period: p });
        }
        if period.is_none() || include_nonseasonal {
            out.push(Structure { trend_order, period: 0 });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompCandidate {
    pub structure: Structure,
    /// ML variances; `None` when the fit failed.
    pub spec: Option<DecompSpec>,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub evals: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompFit {
    /// Candidates sorted by increasing AIC, failures last.
    pub table: Vec<DecompCandidate>,
}

impl DecompFit {
    pub fn best(&self) -> Option<&DecompCandidate> {
        self.table.first().filter(|c| c.spec.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct DecompFitOptions {
    /// Starting variance ratios to sigma^2 (trend, seasonal).
    pub initial_ratios: (f64, f64),
    pub max_evals: usize,
}

impl Default for DecompFitOptions {
    fn default() -> Self {
        DecompFitOptions { initial_ratios: (0.1, 0.01), max_evals: 400 }
    }
}

fn fit_structure(y: &[f64], s: Structure, opts: &DecompFitOptions) -> Result<DecompCandidate> {
    let base = if s.period == 0 {
        DecompSpec::trend_only(s.trend_order, opts.initial_ratios.0, 1.0)
    } else {
        DecompSpec::seasonal(s.trend_order, s.period, opts.initial_ratios.0, opts.initial_ratios.1, 1.0)
    };
    base.validate()?;
    let mask = missing_mask(y);
    let dim = base.state_dim();
    if y.len() <= dim || (base.has_seasonal() && y.len() <= 2 * base.period) {
        return Err(Error::Data(format!("series of length {} is too short for this structure", y.len())));
    }
    let with = |r: &[f64]| DecompSpec {
        trend_var: r[0],
        seasonal_var: if base.has_seasonal() { r[1] } else { 0.0 },
        ..base
    };
    let (names, init): (Vec<&str>, Vec<f64>) = if base.has_seasonal() {
        (vec!["trend_ratio", "seasonal_ratio"], vec![opts.initial_ratios.0, opts.initial_ratios.1])
    } else {
        (vec!["trend_ratio"], vec![opts.initial_ratios.0])
    };
    let problem = OptProblem::new(&names, &vec![Transform::Log; names.len()], &init)
        .with_budget(opts.max_evals)
        .with_step(&vec![1.0; names.len()]);
    let objective = |r: &[f64]| {
        ratio_model(&with(r))
            .and_then(|m| linear_ssm::concentrated_loglik(&m, y, mask.as_deref()))
            .map(|c| c.loglik)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let res = nelder_mead_max(&problem, objective)?;
    let ratios = with(&res.params);
    let conc = linear_ssm::concentrated_loglik(&ratio_model(&ratios)?, y, mask.as_deref())?;
    let s2 = conc.sigma2_hat;
    let spec = DecompSpec {
        trend_var: ratios.trend_var * s2,
        seasonal_var: ratios.seasonal_var * s2,
        obs_var: s2,
        ..ratios
    };
    Ok(DecompCandidate {
        structure: s,
        spec: Some(spec),
        loglik: conc.loglik,
        aic: linear_ssm::aic(conc.loglik, spec.n_params()),
        n_params: spec.n_params(),
        evals: res.evals,
        converged: res.converged,
        error: None,
    })
}

/// Maximum-likelihood variances for every structure, ranked by AIC.
///
/// A structure whose fit fails is kept in the table with its error message.
pub fn fit_decomp(y: &[f64], structures: &[Structure], opts: &DecompFitOptions) -> Result<DecompFit> {
    if structures.is_empty() {
        return Err(Error::InvalidParameter("no candidate structures".into()));
    }
    let mut table: Vec<DecompCandidate> = structures
        .par_iter()
        .map(|&s| {
            fit_structure(y, s, opts).unwrap_or_else(|e| DecompCandidate {
                structure: s,
                spec: None,
                loglik: f64::NEG_INFINITY,
                aic: f64::INFINITY,
                n_params: if s.period == 0 { 2 } else { 3 },
                evals: 0,
                converged: false,
                error: Some(e.to_string()),
            })
        })
        .collect();
    table.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    Ok(DecompFit { table })
}

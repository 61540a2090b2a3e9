//! Exact Gaussian-process regression with a zero mean function.
//!
//! Fitting factorizes `K_y = K + sigma^2 I` once; predictions then cost one
//! cross-covariance vector and one triangular solve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{uniform_dim, Kernel};

const JITTER_SCALE: f64 = 1e-10;
const JITTER_DOUBLINGS: u32 = 8;
const NEGATIVE_VARIANCE_TOL: f64 = 1e-8;

/// Mean and variance of the latent function at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    flat_inputs: Vec<f64>,
    dim: usize,
    targets: Vec<f64>,
    kernel: Kernel,
    noise_var: f64,
    jitter: f64,
    /// Rows of the lower Cholesky factor, packed: row i holds i + 1 entries.
    chol_rows: Vec<f64>,
    alpha: Vec<f64>,
}

/// Serialized form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDocument {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub kernel: String,
    pub noise_var: f64,
    pub jitter: f64,
}

fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl GpModel {
    /// Fits the model, adding diagonal jitter when `K + sigma^2 I` does not factorize.
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kernel: Kernel, noise_var: f64) -> Result<Self> {
        let k = validate(&inputs, &targets, &kernel, noise_var)?;
        let n = targets.len();
        let mean_diag = k.diagonal().mean();
        let base = if mean_diag.is_finite() && mean_diag > 0.0 {
            JITTER_SCALE * mean_diag
        } else {
            JITTER_SCALE
        };
        let schedule =
            std::iter::once(0.0).chain((0..=JITTER_DOUBLINGS).map(|i| base * f64::from(1u32 << i)));
        for jitter in schedule {
            let ky = &k + DMatrix::identity(n, n) * (noise_var + jitter);
            if let Some(chol) = ky.cholesky() {
                return Ok(Self::assemble(inputs, targets, kernel, noise_var, jitter, chol.l()));
            }
        }
        Err(Error::Factorization { jitter: base * f64::from(1u32 << JITTER_DOUBLINGS) })
    }

    fn assemble(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: Kernel,
        noise_var: f64,
        jitter: f64,
        l: DMatrix<f64>,
    ) -> Self {
        let n = targets.len();
        let dim = inputs[0].len();
        let mut chol_rows = Vec::with_capacity(row_start(n));
        for i in 0..n {
            for j in 0..=i {
                chol_rows.push(l[(i, j)]);
            }
        }
        // alpha = L^-T L^-1 y
        let lm = l;
        let y = DVector::from_column_slice(&targets);
        let z = lm.solve_lower_triangular(&y).expect("nonzero cholesky diagonal");
        let alpha = lm
            .transpose()
            .solve_upper_triangular(&z)
            .expect("nonzero cholesky diagonal");
        let flat_inputs = inputs.iter().flatten().copied().collect();
        GpModel {
            inputs,
            flat_inputs,
            dim,
            targets,
            kernel,
            noise_var,
            jitter,
            chol_rows,
            alpha: alpha.iter().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Diagonal jitter actually added during factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Lower Cholesky factor of `K + (sigma^2 + jitter) I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                l[(i, j)] = self.chol_rows[row_start(i) + j];
            }
        }
        l
    }

    /// The matrix that was factorized, `K + (sigma^2 + jitter) I`.
    pub fn noisy_gram(&self) -> DMatrix<f64> {
        let n = self.len();
        let k = self.kernel.gram(&self.inputs).expect("validated at fit");
        k + DMatrix::identity(n, n) * (self.noise_var + self.jitter)
    }

    /// Refits on the same data with new hyperparameters.
    pub fn refit(&self, kernel: Kernel, noise_var: f64) -> Result<Self> {
        GpModel::fit(self.inputs.clone(), self.targets.clone(), kernel, noise_var)
    }

    /// Mean and unclamped variance; `scratch` is resized to `n`.
    #[inline]
    fn predict_raw(&self, x: &[f64], scratch: &mut Vec<f64>) -> (f64, f64, f64) {
        let n = self.len();
        scratch.clear();
        scratch.extend(
            self.flat_inputs
                .chunks_exact(self.dim)
                .map(|xi| self.kernel.eval_unchecked(xi, x)),
        );
        let kss = self.kernel.eval_unchecked(x, x);
        let mean: f64 = scratch.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        // forward substitution in place: scratch <- L^-1 k_*
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.chol_rows[row_start(i)..row_start(i) + i + 1];
            let s: f64 = row[..i].iter().zip(&scratch[..i]).map(|(a, b)| a * b).sum();
            let v = (scratch[i] - s) / row[i];
            scratch[i] = v;
            quad += v * v;
        }
        (mean, kss - quad, kss)
    }

    #[inline]
    fn clamp_variance(var: f64, kss: f64) -> Result<f64> {
        if var >= 0.0 {
            Ok(var)
        } else if var >= -NEGATIVE_VARIANCE_TOL * kss.abs().max(1.0) {
            Ok(0.0)
        } else {
            Err(Error::NegativeVariance(var))
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_query(x)?;
        let mut scratch = Vec::with_capacity(self.len());
        let (mean, var, kss) = self.predict_raw(x, &mut scratch);
        Ok(Prediction { mean, variance: Self::clamp_variance(var, kss)? })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        for x in xs {
            self.check_query(x)?;
        }
        xs.par_iter()
            .map_init(
                || Vec::with_capacity(self.len()),
                |scratch, x| {
                    let (mean, var, kss) = self.predict_raw(x, scratch);
                    Ok(Prediction { mean, variance: Self::clamp_variance(var, kss)? })
                },
            )
            .collect()
    }

    /// Batch prediction over points packed contiguously with stride [`GpModel::dim`].
    pub fn predict_flat(&self, points: &[f64], means: &mut [f64], variances: &mut [f64]) -> Result<()> {
        let d = self.dim;
        if !points.len().is_multiple_of(d) || points.len() / d != means.len() || means.len() != variances.len() {
            return Err(Error::Dimension(format!(
                "{} packed coordinates do not match {} outputs of dimension {d}",
                points.len(),
                means.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite query point".into()));
        }
        points
            .par_chunks_exact(d)
            .zip(means.par_iter_mut().zip(variances.par_iter_mut()))
            .with_min_len(256)
            .try_for_each_init(
                || Vec::with_capacity(self.len()),
                |scratch, (x, (m, v))| {
                    let (mean, var, kss) = self.predict_raw(x, scratch);
                    *m = mean;
                    *v = Self::clamp_variance(var, kss)?;
                    Ok(())
                },
            )
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "query has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite query point".into()));
        }
        Ok(())
    }

    pub fn to_document(&self) -> GpDocument {
        GpDocument {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            kernel: self.kernel.to_string(),
            noise_var: self.noise_var,
            jitter: self.jitter,
        }
    }

    /// Rebuilds a model, reusing the recorded jitter.
    pub fn from_document(doc: &GpDocument) -> Result<Self> {
        let kernel: Kernel = doc.kernel.parse()?;
        let k = validate(&doc.inputs, &doc.targets, &kernel, doc.noise_var)?;
        let n = doc.targets.len();
        let ky = k + DMatrix::identity(n, n) * (doc.noise_var + doc.jitter);
        match ky.cholesky() {
            Some(chol) => Ok(Self::assemble(
                doc.inputs.clone(),
                doc.targets.clone(),
                kernel,
                doc.noise_var,
                doc.jitter,
                chol.l(),
            )),
            None => GpModel::fit(doc.inputs.clone(), doc.targets.clone(), kernel, doc.noise_var),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

fn validate(inputs: &[Vec<f64>], targets: &[f64], kernel: &Kernel, noise_var: f64) -> Result<DMatrix<f64>> {
    if targets.is_empty() {
        return Err(Error::Dimension("GP needs at least one training point".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    uniform_dim(inputs)?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite GP target".into()));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {noise_var}")));
    }
    kernel.gram(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_point_examples() {
        let gp = GpModel::fit(pts(&[0.0]), vec![1.0], Kernel::Rbf { theta: 1.0 }, 0.0).unwrap();
        assert_eq!(gp.noisy_gram()[(0, 0)], 1.0);
        assert_eq!(gp.alpha(), &[1.0]);
        let p = gp.predict(&[0.0]).unwrap();
        assert_eq!((p.mean, p.variance), (1.0, 0.0));

        let gp = GpModel::fit(pts(&[0.0]), vec![1.0], Kernel::Rbf { theta: 1.0 }, 1.0).unwrap();
        let p = gp.predict(&[0.0]).unwrap();
        assert_abs_diff_eq!(p.mean, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.variance, 0.5, epsilon = 1e-15);

        let far = gp.predict(&[100.0]).unwrap();
        assert_abs_diff_eq!(far.mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(far.variance, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_inputs_with_noise() {
        let gp = GpModel::fit(pts(&[0.0, 0.0]), vec![1.0, 1.0], Kernel::Rbf { theta: 1.0 }, 1.0).unwrap();
        let ky = gp.noisy_gram();
        assert_eq!(ky, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        assert_eq!(gp.jitter(), 0.0);
    }

    #[test]
    fn duplicate_inputs_without_noise_need_jitter() {
        let gp = GpModel::fit(pts(&[0.0, 0.0]), vec![1.0, 1.0], Kernel::Rbf { theta: 1.0 }, 0.0).unwrap();
        assert!(gp.jitter() > 0.0);
        let l = gp.cholesky_factor();
        let rel = (&l * l.transpose() - gp.noisy_gram()).norm() / gp.noisy_gram().norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn errors() {
        let rbf = Kernel::Rbf { theta: 1.0 };
        assert!(GpModel::fit(vec![], vec![], rbf.clone(), 0.0).is_err());
        assert!(GpModel::fit(pts(&[0.0]), vec![1.0, 2.0], rbf.clone(), 0.0).is_err());
        assert!(GpModel::fit(pts(&[0.0]), vec![1.0], rbf.clone(), -1.0).is_err());
        let gp = GpModel::fit(pts(&[0.0]), vec![1.0], rbf, 0.0).unwrap();
        assert!(matches!(gp.predict(&[0.0, 1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin()).collect();
        let gp = GpModel::fit(xs, ys, "linear + rbf(0.7)".parse().unwrap(), 0.1).unwrap();
        assert!(gp.predict_batch(&[]).unwrap().is_empty());
        let q: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random_range(-5.0..5.0)]).collect();
        let batch = gp.predict_batch(&q).unwrap();
        let flat: Vec<f64> = q.iter().flatten().copied().collect();
        let (mut m, mut v) = (vec![0.0; 100], vec![0.0; 100]);
        gp.predict_flat(&flat, &mut m, &mut v).unwrap();
        for (i, x) in q.iter().enumerate() {
            let p = gp.predict(x).unwrap();
            assert_eq!(batch[i], p);
            assert_eq!((m[i], v[i]), (p.mean, p.variance));
        }
    }

    #[test]
    fn json_round_trip_reproduces_predictions() {
        let xs = pts(&[-1.0, 0.5, 2.0]);
        let gp = GpModel::fit(xs, vec![0.3, -0.2, 1.0], "linear + exp(0.9)".parse().unwrap(), 0.05).unwrap();
        let back = GpModel::from_json(&gp.to_json().unwrap()).unwrap();
        for x in [-2.0, 0.0, 0.7, 3.0] {
            assert_eq!(gp.predict(&[x]).unwrap(), back.predict(&[x]).unwrap());
        }
    }

    #[test]
    fn verbatim_periodic_can_fail_to_factorize() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let ys = vec![0.0; 40];
        let r = GpModel::fit(xs, ys, Kernel::Periodic { theta1: 2.0, theta2: 0.5 }, 0.0);
        assert!(matches!(r, Err(Error::Factorization { .. })));
    }
}

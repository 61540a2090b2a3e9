use gpssm::decomp::{build_trend, decompose, DecompSpec};
use gpssm::linear_ssm::{concentrated_loglik, kalman_filter, kalman_smoother, LinearSsm};
use gpssm::{GpModel, Kernel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn leaf(periodic: bool) -> BoxedStrategy<Kernel> {
    let base = prop_oneof![
        Just(Kernel::Linear),
        (0.1f64..5.0).prop_map(|v| Kernel::Constant { variance: v }),
        (0.2f64..10.0).prop_map(|t| Kernel::Rbf { theta: t }),
        (0.2f64..10.0).prop_map(|t| Kernel::Exponential { theta: t }),
    ];
    if !periodic {
        return base.boxed();
    }
    prop_oneof![
        4 => base,
        1 => (0.1f64..2.0, 0.3f64..3.0).prop_map(|(a, b)| Kernel::CosinePeriodic { theta1: a, theta2: b }),
    ]
    .boxed()
}

// cos(|d|) is only positive definite on the line, so the periodic kernel is
// drawn for one-dimensional inputs only.
fn kernel(periodic: bool) -> impl Strategy<Value = Kernel> {
    leaf(periodic).prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Kernel::sum(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Kernel::product(a, b)),
        ]
    })
}

fn problem() -> impl Strategy<Value = (Kernel, usize, Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    (1usize..=2, 2usize..=25).prop_flat_map(|(d, n)| {
        (
            kernel(d == 1),
            Just(d),
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-2.5f64..2.5, d),
            0.05f64..1.0,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gp_prediction_matches_dense_solve((kernel, d, xs, ys, query, noise) in problem()) {
        let inputs: Vec<Vec<f64>> = xs.chunks(d).map(<[f64]>::to_vec).collect();
        let n = inputs.len();
        let gp = GpModel::fit(inputs.clone(), ys.clone(), kernel.clone(), noise).unwrap();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = kernel.eval(&inputs[i], &inputs[j]).unwrap();
            }
        }
        k += DMatrix::identity(n, n) * (noise + gp.jitter());
        let kinv = k.try_inverse().unwrap();
        let ks = DVector::from_iterator(n, inputs.iter().map(|x| kernel.eval(x, &query).unwrap()));
        let mean = (ks.transpose() * &kinv * DVector::from_column_slice(&ys))[(0, 0)];
        let var = kernel.eval(&query, &query).unwrap() - (ks.transpose() * &kinv * &ks)[(0, 0)];
        let p = gp.predict(&query).unwrap();
        prop_assert!((p.mean - mean).abs() < 1e-8, "mean {} vs {}", p.mean, mean);
        prop_assert!((p.variance - var.max(0.0)).abs() < 1e-8, "var {} vs {}", p.variance, var);
    }
}

/// Random stable model with a proper prior.
fn random_model(dim: usize, seed: &[f64]) -> LinearSsm {
    let mut it = seed.iter().copied();
    let mut next = || it.next().unwrap();
    let mut f = DMatrix::from_fn(dim, dim, |_, _| next());
    let radius = f.clone().complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if radius > 0.95 {
        f *= 0.95 / radius;
    }
    let g = DMatrix::from_fn(dim, 1, |_, _| next());
    let h = DVector::from_fn(dim, |_, _| next());
    let x0 = DVector::from_fn(dim, |_, _| next());
    let a = DMatrix::from_fn(dim, dim, |_, _| next());
    let v0 = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
    LinearSsm::new(f, g, h, DVector::from_element(1, 0.3 + next().abs()), 0.2 + next().abs(), x0, v0).unwrap()
}

/// Posterior means and covariances of every state by conditioning the joint
/// Gaussian of all states and observations.
fn dense_posterior(m: &LinearSsm, y: &[f64]) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let d = m.state_dim();
    let n = y.len();
    let gqg = &m.g * DMatrix::from_diagonal(&m.q) * m.g.transpose();
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    let (mut mu, mut p) = (m.x0.clone(), m.v0.clone());
    for _ in 0..n {
        mu = &m.f * mu;
        p = &m.f * p * m.f.transpose() + &gqg;
        means.push(mu.clone());
        vars.push(p.clone());
    }
    // Cov(x_i, x_j) = F^{i-j} P_j for i >= j
    let mut sxx = DMatrix::zeros(n * d, n * d);
    for j in 0..n {
        let mut block = vars[j].clone();
        for i in j..n {
            sxx.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            sxx.view_mut((j * d, i * d), (d, d)).copy_from(&block.transpose());
            block = &m.f * block;
        }
    }
    let mut hmat = DMatrix::zeros(n, n * d);
    for i in 0..n {
        hmat.view_mut((i, i * d), (1, d)).copy_from(&m.h.transpose());
    }
    let syy = &hmat * &sxx * hmat.transpose() + DMatrix::identity(n, n) * m.obs_var;
    let sxy = &sxx * hmat.transpose();
    let mu_x = DVector::from_iterator(n * d, means.iter().flat_map(|v| v.iter().copied()));
    let resid = DVector::from_column_slice(y) - &hmat * &mu_x;
    let syy_inv = syy.try_inverse().unwrap();
    let post_mean = &mu_x + &sxy * &syy_inv * resid;
    let post_cov = &sxx - &sxy * &syy_inv * sxy.transpose();
    let means = (0..n).map(|i| post_mean.rows(i * d, d).into_owned()).collect();
    let covs = (0..n).map(|i| post_cov.view((i * d, i * d), (d, d)).into_owned()).collect();
    (means, covs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoother_matches_joint_gaussian(
        dim in 1usize..=3,
        params in prop::collection::vec(-0.9f64..0.9, 40),
        y in prop::collection::vec(-3.0f64..3.0, 1..=15),
    ) {
        let m = random_model(dim, &params);
        let filt = kalman_filter(&m, &y, None).unwrap();
        let smooth = kalman_smoother(&m, &filt).unwrap();
        let (means, covs) = dense_posterior(&m, &y);
        for n in 0..y.len() {
            prop_assert!((&smooth.means[n] - &means[n]).amax() < 1e-8);
            prop_assert!((&smooth.covs[n] - &covs[n]).amax() < 1e-8);
        }
    }

    #[test]
    fn concentrated_value_matches_exact_loglik_at_estimate(
        tau_ratio in 0.01f64..10.0,
        order in 1usize..=2,
        y in prop::collection::vec(-5.0f64..5.0, 3..=40),
    ) {
        let ratio = build_trend(order, tau_ratio, 1.0).unwrap();
        let conc = concentrated_loglik(&ratio, &y, None).unwrap();
        let exact = kalman_filter(&ratio.scaled(conc.sigma2_hat), &y, None).unwrap().loglik;
        prop_assert!((exact - conc.loglik).abs() < 1e-9 * exact.abs().max(1.0));
    }

    #[test]
    fn decomposition_reconstructs_series(
        y in prop::collection::vec(-5.0f64..5.0, 16..=40),
        trend_var in 0.01f64..2.0,
        seasonal_var in 0.001f64..1.0,
        period in 2usize..=6,
    ) {
        let spec = DecompSpec::seasonal(2, period, trend_var, seasonal_var, 1.0);
        let d = decompose(&y, &spec).unwrap();
        for i in 0..y.len() {
            prop_assert!((d.trend[i] + d.seasonal[i] + d.residual[i] - y[i]).abs() < 1e-12);
        }
    }
}

//! Oracle pipelines behind `oracle-validate`. Every check compares an
//! implementation path against an independent computation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use pib_core::data::{poisson_weights, synthetic_blobs};
use pib_core::fisher::{
    array_to_dmatrix, bootstrap_covariance_oracle, empirical_fim_dense, hessian_fisher_gap,
    log_det_prior_cov, prior_cov_fisher, GradientDescent, InfluenceSet,
};
use pib_core::iiw::{estimate_iiw, gaussian_kl, Covariance, GaussianSpec, GradientMode};
use pib_core::nn::{gradient_check, Activation, Batch, NetworkSpec};
use pib_core::objective::{ClassifierObjective, LeastSquares, Objective};
use pib_core::pib::{sgld_chain, ChainConfig, Schedule};
use pib_core::rng::{seeded, SeededRng};
use pib_core::stats::{mean, pearson, variance};
use pib_core::GradientBuffer;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::OracleConfig;
use crate::error::Result;

/// One line of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub pipeline_stage: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl OracleCheck {
    pub fn at_most(stage: &str, metric: &str, value: f64, threshold: f64) -> Self {
        Self {
            pipeline_stage: stage.into(),
            metric: metric.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(stage: &str, metric: &str, value: f64, threshold: f64) -> Self {
        Self {
            pipeline_stage: stage.into(),
            metric: metric.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || normal(rng))
}

/// Analytic against finite-difference gradients on 3-layer nets for every
/// activation.
pub fn gradient_correctness(nets: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let mut worst: f64 = 0.0;
    let mut kinked = 0;
    let mut rng = seeded(seed);
    for act in Activation::ALL {
        for _ in 0..nets {
            let spec = NetworkSpec::new(vec![5, 7, 6, 4], act)?;
            let mut params = spec.init_params::<f64, _>(&mut rng);
            params.mapv_inplace(|p| p + 0.1 * normal(&mut rng));
            let x = normal_matrix(9, 5, &mut rng);
            let y: Vec<usize> = (0..9).map(|_| rng.random_range(0..4)).collect();
            let check = gradient_check(&spec, params.view(), Batch::new(x.view(), &y), 1e-3, 1e-8)?;
            worst = worst.max(check.max_rel_error);
            kinked += check.kinked;
        }
    }
    Ok(vec![
        OracleCheck::at_most("gradient_check", "max_relative_error", worst, 1e-6),
        OracleCheck::at_most("gradient_check", "unresolved_kinks", kinked as f64, 0.0),
    ])
}

/// Rank-`T` IIW formula against the dense quadratic form `n dθᵀ F dθ`.
pub fn iiw_fast_path(seed: u64) -> Result<Vec<OracleCheck>> {
    let (d, t, n) = (50, 200, 1000);
    let mut rng = seeded(seed);
    let g = normal_matrix(t, d, &mut rng);
    let delta = Array1::from_shape_simple_fn(d, || normal(&mut rng));
    let buffer = GradientBuffer::from_rows(&g, GradientMode::PerSample)?;
    let fast = estimate_iiw(delta.view(), &buffer, n)?.value;
    let f = empirical_fim_dense(&g)?;
    let v = DVector::from_iterator(d, delta.iter().copied());
    let dense = n as f64 * (v.transpose() * f * &v)[(0, 0)];
    Ok(vec![OracleCheck::at_most(
        "iiw_fast_path",
        "relative_error",
        ((fast - dense) / dense).abs(),
        1e-10,
    )])
}

fn random_spd(d: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// Log density of `N(mean, cov)` through a Cholesky factor.
struct LogDensity {
    mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    constant: f64,
}

impl LogDensity {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let d = mean.len() as f64;
        let chol = cov.cholesky().expect("covariance is SPD");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let constant = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det);
        Self {
            mean,
            chol,
            constant,
        }
    }

    fn eval(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.mean;
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&r)
            .expect("triangular solve");
        self.constant - 0.5 * z.norm_squared()
    }
}

/// Closed-form Gaussian KL against a Monte-Carlo average of the
/// log-density ratio under the posterior. Reports the worst of three pairs.
pub fn gaussian_kl_monte_carlo(samples: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let d = 3;
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let m1 = DVector::from_fn(d, |_, _| normal(&mut rng));
        let m0 = DVector::from_fn(d, |_, _| normal(&mut rng));
        let s1 = random_spd(d, &mut rng);
        let s0 = random_spd(d, &mut rng);
        let closed = gaussian_kl(
            &GaussianSpec::new(m1.clone(), Covariance::Dense(s1.clone()))?,
            &GaussianSpec::new(m0.clone(), Covariance::Dense(s0.clone()))?,
        )?;
        let post = LogDensity::new(m1.clone(), s1.clone());
        let prior = LogDensity::new(m0, s0);
        let l1 = s1.cholesky().expect("SPD").l();
        let mut total = 0.0;
        for _ in 0..samples {
            let z = DVector::from_fn(d, |_, _| normal(&mut rng));
            let x = &m1 + &l1 * z;
            total += post.eval(&x) - prior.eval(&x);
        }
        let mc = total / samples as f64;
        worst = worst.max(((mc - closed) / closed).abs());
    }
    Ok(vec![OracleCheck::at_most(
        "gaussian_kl",
        "relative_error",
        worst,
        0.02,
    )])
}

/// Ridge problem `y = X b + noise`.
pub fn ridge_problem(n: usize, d: usize, l2: f64, seed: u64) -> Result<LeastSquares> {
    let mut rng = seeded(seed);
    let x = normal_matrix(n, d, &mut rng);
    let truth: Array1<f64> = (0..d).map(|k| 1.0 - 0.3 * k as f64).collect();
    let noise = Array1::from_shape_simple_fn(n, || 0.5 * normal(&mut rng));
    Ok(LeastSquares::new(x.clone(), x.dot(&truth) + noise, l2)?)
}

/// Weighted ridge minimiser from the normal equations.
pub fn ridge_closed_form(obj: &LeastSquares, weights: &[f64]) -> DVector<f64> {
    let d = obj.x.ncols();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let xi = DVector::from_iterator(d, obj.x.row(i).iter().copied());
        a += &xi * xi.transpose() * w;
        b += &xi * (obj.y[i] * w);
    }
    let mass: f64 = weights.iter().sum();
    a += DMatrix::identity(d, d) * (obj.l2 * mass);
    a.cholesky().expect("ridge system is SPD").solve(&b)
}

/// Two-class softmax regression on 4-d blobs (`D = 10`).
pub fn logistic_problem(n: usize, l2: f64, seed: u64) -> Result<ClassifierObjective> {
    let data = synthetic_blobs::<f64, _>(n, 4, 2, 1.5, &mut seeded(seed))?;
    let spec = NetworkSpec::new(vec![4, 2], Activation::Linear)?;
    Ok(ClassifierObjective::new(spec, data, l2)?)
}

/// Influence-function leave-one-out predictions against exact ridge
/// solutions and against logistic retraining.
pub fn influence_checks(cfg: &OracleConfig, seed: u64) -> Result<Vec<OracleCheck>> {
    let gd = GradientDescent::default();

    let n = cfg.ridge_n;
    let ridge = ridge_problem(n, 5, 0.1, seed)?;
    let theta = gd.minimize(&ridge, Array1::zeros(5).view(), None)?;
    let set = InfluenceSet::from_objective(&ridge, theta.params.view(), 0.0)?;
    let full = ridge_closed_form(&ridge, &vec![1.0; n]);
    let mut worst: f64 = 0.0;
    let mut weights = vec![1.0; n];
    for j in (0..n).step_by((n / 20).max(1)) {
        weights[j] = 0.0;
        let loo = ridge_closed_form(&ridge, &weights) - &full;
        weights[j] = 1.0;
        let predicted = set.loo_change(j);
        for (a, p) in loo.iter().zip(predicted.iter()) {
            worst = worst.max((a - p).abs());
        }
    }

    let m = cfg.logistic_n;
    let logistic = logistic_problem(m, 1e-2, seed.wrapping_add(1))?;
    let theta = gd.minimize(&logistic, Array1::zeros(logistic.dim()).view(), None)?;
    let set = InfluenceSet::from_objective(&logistic, theta.params.view(), 0.0)?;
    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    let stride = (m / cfg.logistic_removals.max(1)).max(1);
    for j in (0..m).step_by(stride).take(cfg.logistic_removals) {
        let mut w = vec![1.0; m];
        w[j] = 0.0;
        let retrained = gd.minimize(&logistic, theta.params.view(), Some(&w))?;
        actual.extend((&retrained.params - &theta.params).iter());
        predicted.extend(set.loo_change(j).iter());
    }
    let r = pearson(&predicted, &actual).unwrap_or(f64::NAN);
    Ok(vec![
        OracleCheck::at_most("influence_ridge", "max_abs_loo_error", worst, 1e-8),
        OracleCheck::at_least("influence_logistic", "pearson_r", r, 0.95),
    ])
}

/// Poisson-bootstrap covariance of retrained minimisers against
/// `(1/n)(F + eps I)^{-1}` with `eps` equal to the L2 strength.
pub fn bootstrap_covariance(cfg: &OracleConfig, seed: u64) -> Result<Vec<OracleCheck>> {
    let l2 = 1e-2;
    let obj = logistic_problem(cfg.bootstrap_n, l2, seed.wrapping_add(2))?;
    let gd = GradientDescent::default();
    let theta = gd.minimize(&obj, Array1::zeros(obj.dim()).view(), None)?;
    let oracle = bootstrap_covariance_oracle(
        &obj,
        theta.params.view(),
        cfg.bootstrap_k,
        &gd,
        &mut seeded(seed.wrapping_add(3)),
    )?;
    let f = empirical_fim_dense(&obj.per_sample_grads(theta.params.view())?)?;
    let cov = prior_cov_fisher(&f, cfg.bootstrap_n, l2)?;
    let a: Vec<f64> = oracle.covariance.diagonal().iter().copied().collect();
    let b: Vec<f64> = cov.diagonal().iter().copied().collect();
    let r = pearson(&a, &b).unwrap_or(f64::NAN);
    Ok(vec![OracleCheck::at_least(
        "bootstrap_covariance",
        "diagonal_pearson_r",
        r,
        0.8,
    )])
}

/// Sample mean and variance of Poisson(1) weights.
pub fn poisson_moments(draws: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let xi = poisson_weights(draws, &mut seeded(seed))?.xi;
    Ok(vec![
        OracleCheck::at_most(
            "poisson_bootstrap",
            "mean_relative_error",
            (mean(&xi) - 1.0).abs(),
            0.01,
        ),
        OracleCheck::at_most(
            "poisson_bootstrap",
            "variance_relative_error",
            (variance(&xi) - 1.0).abs(),
            0.01,
        ),
    ])
}

/// SGLD on `U = |w|^2 / 2` at `beta = 1`, whose invariant law is `N(0, I)`.
pub fn sgld_stationarity(samples: usize, stride: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let burn_in = 20_000;
    let config = ChainConfig {
        eta: Schedule::constant(1e-3),
        beta: Schedule::constant(1.0),
        iterations: burn_in + stride * samples,
        burn_in,
        stride,
    };
    let chain = sgld_chain(
        |w: ndarray::ArrayView1<'_, f64>| Ok(w.to_owned()),
        Array1::from_elem(2, 3.0),
        &config,
        &mut seeded(seed),
    )?;
    let (mut worst_mean, mut worst_var): (f64, f64) = (0.0, 0.0);
    for k in 0..2 {
        let xs: Vec<f64> = chain.iter().map(|s| s[k]).collect();
        worst_mean = worst_mean.max(mean(&xs).abs());
        worst_var = worst_var.max((variance(&xs) - 1.0).abs());
    }
    Ok(vec![
        OracleCheck::at_most("sgld_stationarity", "max_abs_mean", worst_mean, 0.02),
        OracleCheck::at_most(
            "sgld_stationarity",
            "max_abs_variance_error",
            worst_var,
            0.05,
        ),
    ])
}

/// Hessian of an interpolating softmax regression against its Fisher.
pub fn hessian_fisher(seed: u64) -> Result<Vec<OracleCheck>> {
    let data = synthetic_blobs::<f64, _>(60, 5, 3, 8.0, &mut seeded(seed))?;
    let spec = NetworkSpec::new(vec![5, 3], Activation::Linear)?;
    let obj = ClassifierObjective::new(spec.clone(), data.clone(), 0.0)?;
    let gd = GradientDescent {
        tol: 1e-6,
        max_iter: 20_000,
        ..GradientDescent::default()
    };
    let fit = gd.minimize(&obj, Array1::zeros(obj.dim()).view(), None)?;
    let (loss, _) = obj.loss_grad(fit.params.view(), None)?;
    let gap = hessian_fisher_gap(&spec, fit.params.view(), &data)?;
    Ok(vec![
        OracleCheck::at_most("hessian_fisher", "train_loss", loss, 1e-3),
        OracleCheck::at_most("hessian_fisher", "relative_frobenius_gap", gap.model, 0.2),
    ])
}

/// Gram-matrix log-determinant against a dense eigendecomposition.
pub fn log_det_gram(seed: u64) -> Result<Vec<OracleCheck>> {
    let (t, d, n, eps) = (50, 30, 17, 1e-3);
    let g = normal_matrix(t, d, &mut seeded(seed)) * 0.3;
    let buffer = GradientBuffer::from_rows(&g, GradientMode::Minibatch)?;
    let cov = prior_cov_fisher(&array_to_dmatrix(&(g.t().dot(&g) / t as f64)), n, eps)?;
    let dense: f64 = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|l| l.ln())
        .sum();
    let gram = log_det_prior_cov(&buffer, eps, n)?;
    Ok(vec![OracleCheck::at_most(
        "log_det_gram",
        "abs_error",
        (dense - gram).abs(),
        1e-8,
    )])
}

/// Every pipeline in report order.
pub fn run_all(cfg: &OracleConfig, seed: u64) -> Result<Vec<OracleCheck>> {
    let mut report = gradient_correctness(cfg.gradient_nets, seed)?;
    report.extend(iiw_fast_path(seed)?);
    report.extend(gaussian_kl_monte_carlo(cfg.kl_samples, seed)?);
    report.extend(influence_checks(cfg, seed)?);
    report.extend(bootstrap_covariance(cfg, seed)?);
    report.extend(poisson_moments(cfg.poisson_draws, seed)?);
    report.extend(sgld_stationarity(cfg.sgld_samples, cfg.sgld_stride, seed)?);
    report.extend(hessian_fisher(seed)?);
    report.extend(log_det_gram(seed)?);
    Ok(report)
}

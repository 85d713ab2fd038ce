use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use pib_core::data::{corrupt_labels, multinomial_weights, poisson_weights, synthetic_blobs};
use pib_core::iiw::{
    estimate_iiw, gaussian_kl, Covariance, GaussianSpec, GradientBuffer, GradientMode,
};
use pib_core::nn::{
    gradient_check, softmax_rows, Activation, Batch, LossOptions, NetworkSpec, Optimizer,
};
use pib_core::pib::{prior_neg_log_grad, sgld_step, PriorSpec};
use pib_core::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn spd(d: usize, seed: u64) -> DMatrix<f64> {
    let a = random(d, d, seed);
    let a = DMatrix::from_row_slice(d, d, a.as_slice().unwrap());
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1
}

fn activation(i: usize) -> Activation {
    Activation::ALL[i % Activation::ALL.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kl_is_non_negative_and_zero_on_itself(d in 1usize..6, seed in 0u64..10_000) {
        let m0 = DVector::from_iterator(d, random(1, d, seed).into_iter());
        let m1 = DVector::from_iterator(d, random(1, d, seed + 1).into_iter());
        let post = GaussianSpec::new(m1, Covariance::Dense(spd(d, seed + 2))).unwrap();
        let prior = GaussianSpec::new(m0, Covariance::Dense(spd(d, seed + 3))).unwrap();
        prop_assert!(gaussian_kl(&post, &prior).unwrap() >= 0.0);
        prop_assert!(gaussian_kl(&post, &post).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn iiw_ignores_a_shared_coordinate_permutation(seed in 0u64..10_000) {
        let (t, d) = (12, 7);
        let g = random(t, d, seed);
        let delta = random(1, d, seed + 1).row(0).to_owned();
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut seeded(seed + 2));
        let gp = g.select(Axis(1), &perm);
        let dp = delta.select(Axis(0), &perm);
        let a = estimate_iiw(delta.view(), &GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap(), 40).unwrap().value;
        let b = estimate_iiw(dp.view(), &GradientBuffer::from_rows(&gp, GradientMode::Minibatch).unwrap(), 40).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn iiw_scales_with_the_square_of_the_gradients(seed in 0u64..10_000, s in -4.0f64..4.0) {
        let g = random(10, 5, seed);
        let delta = random(1, 5, seed + 1).row(0).to_owned();
        let base = estimate_iiw(delta.view(), &GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap(), 30).unwrap().value;
        let scaled_g = &g * s;
        let scaled = estimate_iiw(delta.view(), &GradientBuffer::from_rows(&scaled_g, GradientMode::Minibatch).unwrap(), 30).unwrap().value;
        prop_assert!((scaled - s * s * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
    }

    #[test]
    fn analytic_gradients_match_finite_differences(layers in 1usize..=4, act in 0usize..4, seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let mut sizes = vec![4];
        for _ in 1..layers {
            sizes.push(rng.random_range(2..6));
        }
        sizes.push(3);
        let spec = NetworkSpec::new(sizes, activation(act)).unwrap();
        let mut params = spec.init_params::<f64, _>(&mut rng);
        params.mapv_inplace(|p| p + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let x = random(6, 4, seed + 1);
        let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let check = gradient_check(&spec, params.view(), Batch::new(x.view(), &y), 1e-3, 1e-8).unwrap();
        prop_assert!(check.max_rel_error <= 1e-6, "{}", check.max_rel_error);
        prop_assert_eq!(check.kinked, 0);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..10_000, scale in 0.0f64..50.0) {
        let p = softmax_rows((random(5, 7, seed) * scale).view());
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn per_sample_rows_average_to_the_batch_gradient(layers in 1usize..=3, act in 0usize..4, seed in 0u64..10_000) {
        let mut sizes = vec![3];
        sizes.extend(std::iter::repeat_n(5, layers - 1));
        sizes.push(4);
        let spec = NetworkSpec::new(sizes, activation(act)).unwrap();
        let mut rng = seeded(seed);
        let params = spec.init_params::<f64, _>(&mut rng);
        let x = random(9, 3, seed + 1);
        let y: Vec<usize> = (0..9).map(|_| rng.random_range(0..4)).collect();
        let batch = Batch::new(x.view(), &y);
        let rows = spec.per_sample_grads(params.view(), batch).unwrap();
        let (_, g) = spec.loss_and_grad(params.view(), batch, &LossOptions::default()).unwrap();
        let mean = rows.mean_axis(Axis(0)).unwrap();
        prop_assert!((&mean - &g).iter().all(|e| e.abs() <= 1e-12));
    }

    #[test]
    fn sgd_step_is_affine_in_the_gradient(seed in 0u64..10_000, lr in 0.0f64..2.0) {
        let p0 = random(1, 6, seed).row(0).to_owned();
        let g = random(1, 6, seed + 1).row(0).to_owned();
        let mut p = p0.clone();
        Optimizer::sgd(lr).unwrap().step(&mut p, g.view()).unwrap();
        let expected: Array1<f64> = p0.iter().zip(&g).map(|(a, b)| a - lr * b).collect();
        prop_assert_eq!(&p, &expected);
        let mut fixed = p0.clone();
        Optimizer::sgd(lr).unwrap().step(&mut fixed, Array1::zeros(6).view()).unwrap();
        prop_assert_eq!(&fixed, &p0);
        let mut langevin = p0.clone();
        sgld_step(&mut langevin, g.view(), lr, 0.0, &mut seeded(seed)).unwrap();
        prop_assert_eq!(&langevin, &expected);
    }

    #[test]
    fn corruption_flips_exactly_floor_ratio_n(n in 3usize..200, ratio in 0.0f64..=1.0, seed in 0u64..10_000) {
        let ds = synthetic_blobs::<f64, _>(n, 2, 3, 1.0, &mut seeded(seed)).unwrap();
        let noisy = corrupt_labels(&ds, ratio, &mut seeded(seed + 1)).unwrap();
        let changed = ds.labels().iter().zip(noisy.labels()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, (ratio * n as f64).floor() as usize);
    }

    #[test]
    fn bootstrap_weights_are_counts(n in 1usize..500, seed in 0u64..10_000) {
        let m = multinomial_weights(n, &mut seeded(seed)).unwrap();
        prop_assert_eq!(m.xi.iter().sum::<f64>(), n as f64);
        let p = poisson_weights(n, &mut seeded(seed)).unwrap();
        for w in m.xi.iter().chain(p.xi.iter()) {
            prop_assert!(*w >= 0.0 && w.fract() == 0.0);
        }
    }

    #[test]
    fn prior_gradient_vanishes_only_at_the_mean(seed in 0u64..10_000, offset in 1e-3f64..10.0) {
        let d = 6;
        let theta0 = random(1, d, seed).row(0).to_owned();
        let g = random(4, d, seed + 1);
        let prior = PriorSpec::new(theta0.clone(), GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap(), 1e-3, 50, None).unwrap();
        prop_assert!(prior_neg_log_grad(theta0.view(), &prior).unwrap().iter().all(|&v| v == 0.0));
        let dir = random(1, d, seed + 2).row(0).to_owned();
        let w = &theta0 + &(&dir * (offset / dir.dot(&dir).sqrt()));
        let grad = prior_neg_log_grad(w.view(), &prior).unwrap();
        prop_assert!(grad.dot(&grad).sqrt() > 0.0);
        prop_assert!(grad.dot(&(&w - &theta0)) > 0.0);
    }
}

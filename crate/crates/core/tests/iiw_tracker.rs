use ndarray::{Array1, Array2};
use pib_core::data::synthetic_blobs;
use pib_core::fisher::empirical_fim_dense;
use pib_core::iiw::{
    estimate_iiw, track_iiw, GradientBuffer, GradientMode, PriorMeanPolicy, TrackConfig,
};
use pib_core::nn::{Activation, NetworkSpec, OptimizerKind};
use pib_core::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[test]
fn fast_path_matches_dense_quadratic_form() {
    let g = random(200, 50, 1);
    let delta: Array1<f64> = random(1, 50, 2).row(0).to_owned();
    let n = 1234;
    let buffer = GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap();
    let fast = estimate_iiw(delta.view(), &buffer, n).unwrap().value;
    let f = empirical_fim_dense(&g).unwrap();
    let v = nalgebra::DVector::from_iterator(50, delta.iter().copied());
    let dense = n as f64 * (v.transpose() * f * &v)[(0, 0)];
    assert!((fast - dense).abs() / dense <= 1e-10, "{fast} vs {dense}");
}

#[test]
fn empty_buffer_is_an_error() {
    let buffer = GradientBuffer::<f64>::new(3, 4, GradientMode::Minibatch).unwrap();
    assert!(estimate_iiw(Array1::zeros(3).view(), &buffer, 10).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn invariant_to_gradient_order(seed in 0u64..1000) {
        let g = random(20, 6, seed);
        let delta: Array1<f64> = random(1, 6, seed + 1).row(0).to_owned();
        let mut rows: Vec<_> = g.rows().into_iter().map(|r| r.to_owned()).collect();
        rows.shuffle(&mut seeded(seed + 2));
        let mut shuffled = GradientBuffer::new(6, 20, GradientMode::Minibatch).unwrap();
        for r in rows {
            shuffled.push(r).unwrap();
        }
        let a = estimate_iiw(delta.view(), &GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap(), 50).unwrap().value;
        let b = estimate_iiw(delta.view(), &shuffled, 50).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn quadratic_in_the_weight_shift(seed in 0u64..1000, s in -5.0f64..5.0) {
        let g = random(15, 4, seed);
        let buffer = GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap();
        let delta: Array1<f64> = random(1, 4, seed + 7).row(0).to_owned();
        let base = estimate_iiw(delta.view(), &buffer, 9).unwrap().value;
        let scaled = estimate_iiw((&delta * s).view(), &buffer, 9).unwrap().value;
        prop_assert!((scaled - s * s * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
        prop_assert!(base >= 0.0);
    }
}

fn blobs_setup(
    seed: u64,
) -> (
    NetworkSpec,
    pib_core::Dataset,
    pib_core::Dataset,
    Array1<f64>,
) {
    let mut rng = seeded(seed);
    let all = synthetic_blobs::<f64, _>(600, 8, 4, 2.5, &mut rng).unwrap();
    let (train, test) = pib_core::data::train_test_split(&all, 450, 150, &mut rng).unwrap();
    let spec = NetworkSpec::new(vec![8, 16, 4], Activation::Tanh).unwrap();
    let init = spec.init_params(&mut rng);
    (spec, train, test, init)
}

#[test]
fn zero_learning_rate_gives_zero_information() {
    let (spec, train, test, init) = blobs_setup(3);
    let config = TrackConfig {
        lr: 0.0,
        iterations: 40,
        fim_gradients: 16,
        log_interval: Some(10),
        prior_mean: PriorMeanPolicy::Init,
        ..TrackConfig::default()
    };
    let out = track_iiw(
        &spec,
        init.clone(),
        &train,
        Some(&test),
        &config,
        &mut seeded(4),
    )
    .unwrap();
    assert_eq!(out.params, init);
    assert_eq!(out.estimates.len(), 4);
    assert!(out.estimates.iter().all(|e| e.value == 0.0));
}

#[test]
fn tracking_is_deterministic() {
    let (spec, train, test, init) = blobs_setup(5);
    let config = TrackConfig {
        iterations: 60,
        fim_gradients: 8,
        log_interval: Some(20),
        ..TrackConfig::default()
    };
    let a = track_iiw(
        &spec,
        init.clone(),
        &train,
        Some(&test),
        &config,
        &mut seeded(6),
    )
    .unwrap();
    let b = track_iiw(&spec, init, &train, Some(&test), &config, &mut seeded(6)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.estimates, b.estimates);
}

#[test]
fn divergence_is_reported_not_raised() {
    let (spec, train, test, init) = blobs_setup(7);
    let config = TrackConfig {
        lr: 1e308,
        iterations: 50,
        fim_gradients: 4,
        log_interval: Some(5),
        prior_mean: PriorMeanPolicy::Init,
        ..TrackConfig::default()
    };
    let out = track_iiw(&spec, init, &train, Some(&test), &config, &mut seeded(8)).unwrap();
    assert!(out.divergence.is_some());
}

#[test]
fn information_rises_then_falls_on_blobs() {
    let (spec, train, test, init) = blobs_setup(9);
    let config = TrackConfig {
        optimizer: OptimizerKind::ADAM_DEFAULT,
        lr: 1e-2,
        batch_size: 32,
        iterations: 1500,
        fim_gradients: 32,
        log_interval: Some(30),
        ..TrackConfig::default()
    };
    let out = track_iiw(&spec, init, &train, Some(&test), &config, &mut seeded(10)).unwrap();
    let values: Vec<f64> = out.estimates.iter().map(|e| e.value).collect();
    let (peak_idx, peak) =
        values.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    eprintln!("{values:?}");
    assert!(peak > 0.0);
    assert!(peak_idx < values.len() - 1, "peak at the last reading");
    assert!(*values.last().unwrap() < peak);
}

mod common;

use clipnet::datagen::*;
use clipnet::model::FnPredictor;

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

#[test]
fn f1_constant_matches_analytic_variance() {
    let v1: f64 = (1..=10).map(|j| 1.0 / (j * j) as f64).sum::<f64>() / 12.0;
    assert!((v1 - 0.129_147_3).abs() < 1e-6);
    let analytic = (19.0 / v1).sqrt();
    assert!((analytic - 12.129).abs() < 1e-3);
    let c = calibrated_constant(1).unwrap();
    assert!((c - analytic).abs() / analytic < 0.02);
    assert_eq!(
        calibrate_constant(1, 100_000, 5).unwrap(),
        calibrate_constant(1, 100_000, 5).unwrap()
    );
}

#[test]
fn noise_is_centred_and_inputs_in_unit_cube() {
    let n = 1_000_000;
    let ds = gen_regression(1, n, 42).unwrap();
    assert!(ds.inputs.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let c = calibrated_constant(1).unwrap();
    let resid_mean = ds
        .inputs
        .rows()
        .into_iter()
        .zip(&ds.targets)
        .map(|(r, y)| y - c * true_function(1, r.as_slice().unwrap()).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!(resid_mean.abs() < 0.005, "{resid_mean}");
}

#[test]
fn light_tailed_functions_hit_target_ratio_on_fresh_samples() {
    // f4 and f6 have pole terms with unbounded variance; see the acceptance suite
    for m in [1, 2, 3, 5] {
        let ds = gen_regression(m, 1_000_000, 77).unwrap();
        let c = calibrated_constant(m).unwrap();
        let signal: Vec<f64> = ds
            .inputs
            .rows()
            .into_iter()
            .map(|r| c * true_function(m, r.as_slice().unwrap()).unwrap())
            .collect();
        let noise: Vec<f64> = ds.targets.iter().zip(&signal).map(|(y, s)| y - s).collect();
        let ratio = variance(&noise) / variance(ds.targets.as_slice().unwrap());
        assert!((0.045..=0.055).contains(&ratio), "f{m}: {ratio}");
        let vs = variance(&signal);
        assert!((18.0..=20.0).contains(&vs), "f{m}: {vs}");
    }
}

#[test]
fn zero_predictor_error_is_signal_variance() {
    let zero = FnPredictor(|_: &[f64]| 0.0);
    let e = empirical_l2_error(&zero, 1, 100_000, 3).unwrap();
    // E (0 - f1*)^2 = Var f1* + (E f1*)^2 with E f1* = c1 Σ (-1)^j / (2j)
    let mean: f64 = (1..=10)
        .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / (2.0 * j as f64))
        .sum::<f64>()
        * calibrated_constant(1).unwrap();
    let expected = 19.0 + mean * mean;
    assert!((e - expected).abs() / expected < 0.02, "{e} vs {expected}");
    let truth = FnPredictor(|x: &[f64]| signal(1, x).unwrap());
    assert!(empirical_l2_error(&truth, 1, 1000, 3).unwrap() < 1e-20);
    assert_eq!(
        empirical_l2_error(&zero, 1, 1000, 9).unwrap(),
        empirical_l2_error(&zero, 1, 1000, 9).unwrap()
    );
}

#[test]
fn toy_logit_is_centred() {
    let x = test_inputs(1_000_000, 5, 11);
    let mean = x
        .rows()
        .into_iter()
        .map(|r| toy_logit(r.as_slice().unwrap()))
        .sum::<f64>()
        / 1e6;
    assert!(mean.abs() < 0.002, "{mean}");
    assert!((toy_mu(5) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn toy_label_rate_matches_quadrature() {
    // g depends on x1, x2 only when d = 5; midpoint rule on a 2000 x 2000 grid
    let k = 2000;
    let mut p = 0.0;
    for i in 0..k {
        let a = (i as f64 + 0.5) / k as f64;
        for j in 0..k {
            let b = (j as f64 + 0.5) / k as f64;
            p += 1.0 / (1.0 + (-(a * a + b * b - 2.0 / 3.0)).exp());
        }
    }
    p /= (k * k) as f64;
    let ds = gen_classification_toy(5, 200_000, 21).unwrap();
    let rate = ds.targets.iter().filter(|&&y| y == 1.0).count() as f64 / ds.len() as f64;
    assert!((rate - p).abs() < 0.01, "{rate} vs {p}");
    assert_eq!(
        gen_classification_toy(5, 50, 4).unwrap().targets,
        gen_classification_toy(5, 50, 4).unwrap().targets
    );
}

#[test]
fn generator_errors() {
    assert!(gen_regression(1, 0, 0).is_err());
    assert!(gen_regression(7, 10, 0).is_err());
    assert!(gen_classification_toy(1, 10, 0).is_err());
    assert!(empirical_l2_error(&FnPredictor(|_: &[f64]| 0.0), 1, 0, 0).is_err());
}

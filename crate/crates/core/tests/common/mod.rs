#![allow(dead_code)]

use clipnet::data::DataView;
use clipnet::losses::{self, LossKind};
use clipnet::nn::{Activation, MlpSpec};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spec(rng: &mut ChaCha8Rng, act: Activation) -> MlpSpec {
    let d = rng.random_range(1..=4);
    let depth = rng.random_range(1..=3);
    let widths = (0..depth).map(|_| rng.random_range(1..=5)).collect();
    MlpSpec::new(d, widths, act).unwrap()
}

pub fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize, loss: LossKind) -> (Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    let y = Array1::from_shape_fn(n, |_| {
        if loss.is_margin() {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        } else {
            rng.random_range(-2.0..2.0)
        }
    });
    (x, y)
}

pub fn random_theta(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Independent numerical gradient of the empirical risk by central
/// differences.
pub fn numerical_gradient(spec: &MlpSpec, theta: &[f64], loss: LossKind, data: DataView<'_>) -> Vec<f64> {
    let h = 1e-5;
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|j| {
            t[j] = theta[j] + h;
            let up = losses::risk_flat(spec, &t, loss, data).unwrap();
            t[j] = theta[j] - h;
            let down = losses::risk_flat(spec, &t, loss, data).unwrap();
            t[j] = theta[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub const ACTIVATIONS: [Activation; 11] = Activation::CATALOGUE;
pub const LOSSES: [LossKind; 3] = [LossKind::Square, LossKind::Logistic, LossKind::Exponential];

/// Per-coordinate relative error with a small absolute floor.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

//! Simulated regression and classification data.
//!
//! Regression inputs are uniform on `[0,1]^10` and responses are
//! `Y = c_m f̃_m(X) + ε` with `ε ~ N(0, 1)`. The constant `c_m` is set so the
//! noise carries 5% of the response variance: `c_m = sqrt(19 / Var f̃_m(X))`.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use crate::data::{DataView, Dataset, DatasetMeta, Task};
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::rng;

pub const SIM_DIM: usize = 10;
/// `c_m^2 Var f̃_m = 19` makes `Var ε / Var Y = 1/20`.
pub const SIGNAL_VARIANCE: f64 = 19.0;
pub const CALIBRATION_SAMPLES: usize = 1_000_000;
pub const CALIBRATION_SEED: u64 = 0;

const X_STREAM: u64 = 0x5EED_0001;
const NOISE_STREAM: u64 = 0x5EED_0002;
const LABEL_STREAM: u64 = 0x5EED_0003;

/// Identifier of one of the six simulated regression functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TargetFn(usize);

impl TargetFn {
    pub fn new(m: usize) -> Result<Self> {
        if (1..=6).contains(&m) {
            Ok(Self(m))
        } else {
            Err(Error::UnknownFunction(m))
        }
    }

    pub fn index(&self) -> usize {
        self.0
    }

    pub fn all() -> impl Iterator<Item = TargetFn> {
        (1..=6).map(TargetFn)
    }
}

impl std::fmt::Display for TargetFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl std::str::FromStr for TargetFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim_start_matches(['f', 'F']);
        let m = digits
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("unknown function {s:?}; expected f1..f6")))?;
        TargetFn::new(m)
    }
}

impl TryFrom<String> for TargetFn {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TargetFn> for String {
    fn from(t: TargetFn) -> String {
        t.to_string()
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Uncalibrated `f̃_m(x)`, the bracketed expression of `f_m*`.
pub fn true_function(m: usize, x: &[f64]) -> Result<f64> {
    if !(1..=6).contains(&m) {
        return Err(Error::UnknownFunction(m));
    }
    if x.len() != SIM_DIM {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: format!("{SIM_DIM} inputs"),
            found: format!("{} inputs", x.len()),
        });
    }
    Ok(eval_unchecked(m, x))
}

fn eval_unchecked(m: usize, x: &[f64]) -> f64 {
    // x[0] is x_1
    let l1 = || x.iter().map(|v| v.abs()).sum::<f64>();
    match m {
        1 => x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = (i + 1) as f64;
                let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
                sign * v / j
            })
            .sum(),
        2 => l1().sin(),
        3 => {
            x[0] * x[1] * x[1] - x[2] + (x[3] + 4.0 * x[4] + (x[5] * x[6] - 5.0 * x[4]).exp()).ln() + (x[7] + 0.1).tan()
        }
        4 => {
            let s = (x[3] - 2.0 * x[4] + x[5]).abs();
            (3.0 * x[0] + x[1] * x[1] - (x[2] + 5.0).sqrt()).exp() + 0.01 / (1.0 / (0.01 + s)).tan()
        }
        5 => {
            let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            3.0 * l2.exp() * ind(x[1] >= x[2] * x[2]) + x[2].powf(x[3]) - x[4] * x[5] * x[6].powi(4)
        }
        6 => {
            4.0 * x[0] * x[1] * x[2] * x[3] * ind(x[2] + x[3] >= 1.0 && x[4] >= x[5])
                + l1().tan() * ind(x[0] * x[0] * x[6] * x[7] >= x[8] * x[9].powi(3))
        }
        _ => unreachable!(),
    }
}

fn uniform_inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed, &[X_STREAM]);
    Array2::from_shape_simple_fn((n, d), || rng.random::<f64>())
}

fn population_variance(values: impl Iterator<Item = f64>) -> f64 {
    // Welford
    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        count += 1.0;
        let delta = v - mean;
        mean += delta / count;
        m2 += delta * (v - mean);
    }
    m2 / count
}

/// Monte Carlo estimate of `c_m = sqrt(19 / Var f̃_m(X))`.
pub fn calibrate_constant(m: usize, mc_samples: usize, seed: u64) -> Result<f64> {
    TargetFn::new(m)?;
    if mc_samples < 2 {
        return Err(Error::InvalidConfig("need at least two Monte Carlo samples".into()));
    }
    let x = uniform_inputs(mc_samples, SIM_DIM, seed);
    let var = population_variance(x.rows().into_iter().map(|r| eval_unchecked(m, r.as_slice().unwrap())));
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::DegenerateVariance(var));
    }
    Ok((SIGNAL_VARIANCE / var).sqrt())
}

/// `c_m` at 10^6 samples with seed 0, computed once per process.
pub fn calibrated_constant(m: usize) -> Result<f64> {
    static CACHE: [OnceLock<f64>; 6] = [const { OnceLock::new() }; 6];
    TargetFn::new(m)?;
    if let Some(&c) = CACHE[m - 1].get() {
        return Ok(c);
    }
    let c = calibrate_constant(m, CALIBRATION_SAMPLES, CALIBRATION_SEED)?;
    Ok(*CACHE[m - 1].get_or_init(|| c))
}

/// Calibrated `f_m*(x) = c_m f̃_m(x)`.
pub fn signal(m: usize, x: &[f64]) -> Result<f64> {
    Ok(calibrated_constant(m)? * true_function(m, x)?)
}

/// `n` draws of `(X, c_m f̃_m(X) + ε)`.
pub fn gen_regression(m: usize, n: usize, seed: u64) -> Result<Dataset> {
    TargetFn::new(m)?;
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let c = calibrated_constant(m)?;
    let inputs = uniform_inputs(n, SIM_DIM, seed);
    let mut noise = rng::stream(seed, &[NOISE_STREAM]);
    let targets = Array1::from_iter(inputs.rows().into_iter().map(|r| {
        let eps: f64 = StandardNormal.sample(&mut noise);
        c * eval_unchecked(m, r.as_slice().unwrap()) + eps
    }));
    Dataset::new(
        inputs,
        targets,
        Task::Regression,
        DatasetMeta {
            generator: format!("f{m}"),
            seed: Some(seed),
            c_m: Some(c),
            n,
            d: SIM_DIM,
        },
    )
}

/// Centering constant of the toy logit: `floor(d/2) E[X_j^2] = floor(d/2) / 3`.
pub fn toy_mu(d: usize) -> f64 {
    (d / 2) as f64 / 3.0
}

/// `g*(x) = Σ_{j <= floor(d/2)} x_j^2 - μ`.
pub fn toy_logit(x: &[f64]) -> f64 {
    let d = x.len();
    x[..d / 2].iter().map(|v| v * v).sum::<f64>() - toy_mu(d)
}

/// Toy classification data with `P(Y = 1 | x) = 1 / (1 + exp(-g*(x)))`.
pub fn gen_classification_toy(d: usize, n: usize, seed: u64) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!("toy model needs d >= 2, got {d}")));
    }
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let inputs = uniform_inputs(n, d, seed);
    let mut rng = rng::stream(seed, &[LABEL_STREAM]);
    let targets = Array1::from_iter(inputs.rows().into_iter().map(|r| {
        let p = 1.0 / (1.0 + (-toy_logit(r.as_slice().unwrap())).exp());
        if rng.random::<f64>() < p {
            1.0
        } else {
            -1.0
        }
    }));
    Dataset::new(
        inputs,
        targets,
        Task::Classification,
        DatasetMeta {
            generator: format!("toy-d{d}"),
            seed: Some(seed),
            c_m: None,
            n,
            d,
        },
    )
}

/// Fresh uniform test inputs for evaluation, independent of the training streams.
pub fn test_inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
    uniform_inputs(n, d, rng::derive_seed(seed, &[0x7E57]))
}

/// Mean of `(predictor(X_i) - f_m*(X_i))^2` over `n_test` fresh inputs.
pub fn empirical_l2_error(predictor: &dyn Predictor, m: usize, n_test: usize, seed: u64) -> Result<f64> {
    TargetFn::new(m)?;
    if n_test == 0 {
        return Err(Error::EmptyData);
    }
    let c = calibrated_constant(m)?;
    let x = test_inputs(n_test, SIM_DIM, seed);
    let preds = predictor.predict_batch(x.view())?;
    let total: f64 = x
        .rows()
        .into_iter()
        .zip(preds.iter())
        .map(|(r, &p)| {
            let diff = p - c * eval_unchecked(m, r.as_slice().unwrap());
            diff * diff
        })
        .sum();
    Ok(total / n_test as f64)
}

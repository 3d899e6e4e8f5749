//! Regression and margin losses `loss(y, f)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::error::{Error, Result};
use crate::nn::{self, MlpSpec, NetworkParams};

/// Exponential-loss values are capped here instead of overflowing to infinity.
pub const EXP_LOSS_CAP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Square,
    Logistic,
    Exponential,
}

fn check_margin(y: f64) -> Result<()> {
    if y == 1.0 || y == -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(y))
    }
}

impl LossKind {
    pub fn is_margin(&self) -> bool {
        !matches!(self, LossKind::Square)
    }

    pub fn value(&self, y: f64, f: f64) -> Result<f64> {
        Ok(match self {
            LossKind::Square => (y - f) * (y - f),
            LossKind::Logistic => {
                check_margin(y)?;
                // log(1 + e^{-m}) without overflow
                let m = y * f;
                if m < 0.0 {
                    -m + m.exp().ln_1p()
                } else {
                    (-m).exp().ln_1p()
                }
            }
            LossKind::Exponential => {
                check_margin(y)?;
                (-y * f).exp().min(EXP_LOSS_CAP)
            }
        })
    }

    /// Whether `value(y, f)` hit [`EXP_LOSS_CAP`].
    pub fn is_capped(&self, y: f64, f: f64) -> bool {
        matches!(self, LossKind::Exponential) && (-y * f).exp() >= EXP_LOSS_CAP
    }

    /// Derivative with respect to `f`.
    pub fn deriv(&self, y: f64, f: f64) -> Result<f64> {
        Ok(match self {
            LossKind::Square => -2.0 * (y - f),
            LossKind::Logistic => {
                check_margin(y)?;
                // -y / (1 + e^{m}) = -y * sigmoid(-m)
                let m = y * f;
                let s = if m > 0.0 {
                    let e = (-m).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + m.exp())
                };
                -y * s
            }
            LossKind::Exponential => {
                check_margin(y)?;
                (-y * (-y * f).exp()).clamp(-EXP_LOSS_CAP, EXP_LOSS_CAP)
            }
        })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Square => "square",
            LossKind::Logistic => "logistic",
            LossKind::Exponential => "exponential",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" | "l2" | "mse" => Ok(LossKind::Square),
            "logistic" | "cross-entropy" => Ok(LossKind::Logistic),
            "exponential" | "exp" => Ok(LossKind::Exponential),
            _ => Err(Error::InvalidConfig(format!("unknown loss {s:?}"))),
        }
    }
}

pub fn loss_value(kind: LossKind, y: f64, f: f64) -> Result<f64> {
    kind.value(y, f)
}

pub fn loss_deriv(kind: LossKind, y: f64, f: f64) -> Result<f64> {
    kind.deriv(y, f)
}

/// Mean loss of a flat parameter vector over `data`.
pub fn risk_flat(spec: &MlpSpec, theta: &[f64], kind: LossKind, data: DataView<'_>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let preds = nn::forward_batch(spec, theta, data.inputs)?;
    let mut total = 0.0;
    for (&f, &y) in preds.iter().zip(data.targets) {
        total += kind.value(y, f)?;
    }
    Ok(total / data.len() as f64)
}

/// `L_n(θ)`: the mean loss over `data`.
pub fn empirical_risk(params: &NetworkParams, spec: &MlpSpec, kind: LossKind, data: DataView<'_>) -> Result<f64> {
    params.check(spec)?;
    risk_flat(spec, &params.flatten(), kind, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [LossKind; 3] = [LossKind::Square, LossKind::Logistic, LossKind::Exponential];

    #[test]
    fn values() {
        assert_eq!(LossKind::Square.value(1.0, 1.0).unwrap(), 0.0);
        assert!((LossKind::Logistic.value(1.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((LossKind::Exponential.value(-1.0, 0.5).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        assert!((LossKind::Exponential.value(-1.0, 0.5).unwrap() - 1.648_721).abs() < 1e-6);
    }

    #[test]
    fn derivatives() {
        assert_eq!(LossKind::Square.deriv(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(LossKind::Logistic.deriv(1.0, 0.0).unwrap(), -0.5);
    }

    #[test]
    fn margin_labels_enforced() {
        assert!(matches!(
            LossKind::Logistic.value(0.0, 1.0),
            Err(Error::InvalidLabel(_))
        ));
        assert!(LossKind::Exponential.deriv(2.0, 1.0).is_err());
        assert!(LossKind::Square.value(2.0, 1.0).is_ok());
    }

    #[test]
    fn logistic_is_stable() {
        let v = LossKind::Logistic.value(1.0, -800.0).unwrap();
        assert!((v - 800.0).abs() < 1e-9);
        assert!(LossKind::Logistic.value(1.0, 800.0).unwrap() >= 0.0);
        assert_eq!(LossKind::Logistic.deriv(-1.0, -800.0).unwrap(), 0.0);
        assert_eq!(LossKind::Logistic.deriv(1.0, -800.0).unwrap(), -1.0);
    }

    #[test]
    fn exponential_is_capped() {
        assert_eq!(LossKind::Exponential.value(1.0, -1000.0).unwrap(), EXP_LOSS_CAP);
        assert!(LossKind::Exponential.is_capped(1.0, -1000.0));
        assert!(!LossKind::Exponential.is_capped(1.0, 0.0));
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..1000 {
            let kind = ALL[i % 3];
            let y = if kind.is_margin() {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            } else {
                rng.random_range(-3.0..3.0)
            };
            let f = rng.random_range(-5.0..5.0);
            let h = 1e-5;
            let fd = (kind.value(y, f + h).unwrap() - kind.value(y, f - h).unwrap()) / (2.0 * h);
            let an = kind.deriv(y, f).unwrap();
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                "{kind} y={y} f={f}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn strict_convexity_probe() {
        let h = 1e-3;
        for kind in [LossKind::Logistic, LossKind::Exponential] {
            for i in 0..=2000 {
                let z = -10.0 + 0.01 * i as f64;
                let l = |m: f64| kind.value(1.0, m).unwrap();
                let second = (l(z + h) - 2.0 * l(z) + l(z - h)) / (h * h);
                assert!(second > 0.0, "{kind} at {z}");
            }
        }
    }

    #[test]
    fn risk_of_zero_network() {
        let spec = MlpSpec::new(1, vec![2], Activation::Relu).unwrap();
        let p = NetworkParams::zeros(&spec);
        let x = array![[0.1], [0.9]];
        let y = array![1.0, -1.0];
        let r = empirical_risk(&p, &spec, LossKind::Square, DataView::new(x.view(), y.view()).unwrap()).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn risk_matches_naive_loop() {
        let spec = MlpSpec::new(3, vec![4, 2], Activation::Tanh).unwrap();
        let p = init_params(&spec, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ndarray::Array2::from_shape_fn((7, 3), |_| rng.random::<f64>());
        let y = ndarray::Array1::from_shape_fn(7, |_| rng.random_range(-1.0..1.0));
        let r = empirical_risk(&p, &spec, LossKind::Square, DataView::new(x.view(), y.view()).unwrap()).unwrap();
        let mut naive = 0.0;
        for i in 0..7 {
            let row: Vec<f64> = x.row(i).to_vec();
            let f = nn::forward(&p, &spec, &row).unwrap();
            naive += (y[i] - f).powi(2);
        }
        assert!((r - naive / 7.0).abs() < 1e-14);
    }

    #[test]
    fn empty_data_rejected() {
        let spec = MlpSpec::new(1, vec![1], Activation::Relu).unwrap();
        let x = ndarray::Array2::<f64>::zeros((0, 1));
        let y = ndarray::Array1::<f64>::zeros(0);
        let err = empirical_risk(
            &NetworkParams::zeros(&spec),
            &spec,
            LossKind::Square,
            DataView::new(x.view(), y.view()).unwrap(),
        );
        assert!(matches!(err, Err(Error::EmptyData)));
    }
}

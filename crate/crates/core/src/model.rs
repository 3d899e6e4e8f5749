//! Fitted estimators behind a common prediction interface.

use ndarray::{Array1, ArrayView2};

use crate::error::Result;
use crate::nn::{self, MlpSpec, NetworkParams};

pub trait Predictor: Send + Sync {
    /// One prediction per row of `x`.
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;
}

/// A network architecture together with its flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: MlpSpec,
    pub theta: Vec<f64>,
}

impl Network {
    pub fn new(spec: MlpSpec, params: &NetworkParams) -> Result<Self> {
        params.check(&spec)?;
        Ok(Self {
            theta: params.flatten(),
            spec,
        })
    }

    pub fn params(&self) -> NetworkParams {
        NetworkParams::unflatten(&self.spec, &self.theta).expect("theta matches spec")
    }
}

impl Predictor for Network {
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        nn::forward_batch(&self.spec, &self.theta, x)
    }
}

/// Wraps a per-row closure.
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(x.rows().into_iter().map(|r| (self.0)(&r.to_vec())).collect())
    }
}

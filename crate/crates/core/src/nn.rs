//! Fully connected networks `x -> A_{L+1} ∘ ρ ∘ A_L ∘ ... ∘ ρ ∘ A_1 (x)` with a
//! scalar output, evaluated and differentiated on a flat parameter vector.
//!
//! # Parameter layout
//!
//! The flat vector concatenates, layer by layer, the weight matrix `W_l`
//! (shape `N_l x N_{l-1}`) in column-major order followed by the bias `b_l`.
//! [`NetworkParams`] is the structured view of the same numbers; the
//! optimizers work on the flat vector directly.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis, ShapeBuilder, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::rng;

/// Rows per block when evaluating large input matrices.
const FORWARD_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationFamily {
    PiecewiseLinear,
    LocallyQuadratic,
}

/// Elementwise activation. Parameterized variants carry their `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Softplus,
    Swish,
    Elu(f64),
    Softsign,
    Isru(f64),
    Isrlu(f64),
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Every activation in the catalogue, with the parameter values used in tests.
    pub const CATALOGUE: [Activation; 11] = [
        Activation::Identity,
        Activation::Relu,
        Activation::LeakyRelu(0.1),
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Softplus,
        Activation::Swish,
        Activation::Elu(1.0),
        Activation::Softsign,
        Activation::Isru(1.0),
        Activation::Isrlu(1.0),
    ];

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu(a) if !(a > 0.0 && a < 1.0) => Err(Error::InvalidSpec(format!(
                "leaky-relu slope must lie in (0, 1), got {a}"
            ))),
            Activation::Elu(a) | Activation::Isru(a) | Activation::Isrlu(a) if !(a > 0.0 && a.is_finite()) => {
                Err(Error::InvalidSpec(format!("{self} needs a > 0, got {a}")))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> ActivationFamily {
        match self {
            Activation::Identity | Activation::Relu | Activation::LeakyRelu(_) => ActivationFamily::PiecewiseLinear,
            _ => ActivationFamily::LocallyQuadratic,
        }
    }

    /// Global Lipschitz constant on R.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Activation::Sigmoid => 0.25,
            // max of σ(z)(1 + z(1 - σ(z))), attained near z = 2.3994
            Activation::Swish => 1.099_839_314_285_8,
            Activation::Elu(a) => a.max(1.0),
            _ => 1.0,
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Swish => z * sigmoid(z),
            Activation::Elu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z.exp_m1()
                }
            }
            Activation::Softsign => z / (1.0 + z.abs()),
            Activation::Isru(a) => z / (1.0 + a * z * z).sqrt(),
            Activation::Isrlu(a) => {
                if z > 0.0 {
                    z
                } else {
                    z / (1.0 + a * z * z).sqrt()
                }
            }
        }
    }

    /// First derivative; at kinks the left derivative is used (0 for ReLU).
    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(z),
            Activation::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Activation::Elu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a * z.exp()
                }
            }
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
            Activation::Isru(a) => (1.0 + a * z * z).powf(-1.5),
            Activation::Isrlu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    (1.0 + a * z * z).powf(-1.5)
                }
            }
        }
    }

    /// Second derivative (0 on linear pieces).
    pub fn second_deriv(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity | Activation::Relu | Activation::LeakyRelu(_) => 0.0,
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Swish => {
                let s = sigmoid(z);
                s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))
            }
            Activation::Elu(a) => {
                if z > 0.0 {
                    0.0
                } else {
                    a * z.exp()
                }
            }
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                -2.0 * z.signum() / (d * d * d)
            }
            Activation::Isru(a) => -3.0 * a * z * (1.0 + a * z * z).powf(-2.5),
            Activation::Isrlu(a) => {
                if z > 0.0 {
                    0.0
                } else {
                    -3.0 * a * z * (1.0 + a * z * z).powf(-2.5)
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky-relu:{a}"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Softplus => write!(f, "softplus"),
            Activation::Swish => write!(f, "swish"),
            Activation::Elu(a) => write!(f, "elu:{a}"),
            Activation::Softsign => write!(f, "softsign"),
            Activation::Isru(a) => write!(f, "isru:{a}"),
            Activation::Isrlu(a) => write!(f, "isrlu:{a}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Parses `relu`, `tanh`, `leaky-relu:0.01`, `elu` (a = 1), ...
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => {
                let a = p
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidSpec(format!("bad activation parameter in {s:?}")))?;
                (n, Some(a))
            }
            None => (s, None),
        };
        let act = match (name.to_ascii_lowercase().as_str(), param) {
            ("identity" | "linear", None) => Activation::Identity,
            ("relu", None) => Activation::Relu,
            ("leaky-relu" | "leakyrelu", a) => Activation::LeakyRelu(a.unwrap_or(0.01)),
            ("sigmoid", None) => Activation::Sigmoid,
            ("tanh", None) => Activation::Tanh,
            ("softplus", None) => Activation::Softplus,
            ("swish", None) => Activation::Swish,
            ("elu", a) => Activation::Elu(a.unwrap_or(1.0)),
            ("softsign", None) => Activation::Softsign,
            ("isru", a) => Activation::Isru(a.unwrap_or(1.0)),
            ("isrlu", a) => Activation::Isrlu(a.unwrap_or(1.0)),
            _ => return Err(Error::InvalidSpec(format!("unknown activation {s:?}"))),
        };
        act.validate()?;
        Ok(act)
    }
}

/// Architecture of a scalar-output MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Bound `F` on `|f(x)|`; only enforced when `clamp_output` is set.
    #[serde(default)]
    pub output_bound: Option<f64>,
    #[serde(default)]
    pub clamp_output: bool,
}

/// Position of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSlot {
    pub fn end(&self) -> usize {
        self.bias_offset + self.rows
    }
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_widths,
            output_dim: 1,
            activation,
            output_bound: None,
            clamp_output: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_output_bound(mut self, bound: f64, clamp: bool) -> Self {
        self.output_bound = Some(bound);
        self.clamp_output = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidSpec("at least one hidden layer is required".into()));
        }
        if let Some(l) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("hidden layer {} has width 0", l + 1)));
        }
        if self.output_dim != 1 {
            return Err(Error::InvalidSpec(format!(
                "only scalar outputs are supported, got output_dim = {}",
                self.output_dim
            )));
        }
        if let Some(f) = self.output_bound {
            if !(f > 0.0) {
                return Err(Error::InvalidSpec(format!("output bound must be positive, got {f}")));
            }
        }
        self.activation.validate()
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// Largest hidden width `N`.
    pub fn width(&self) -> usize {
        self.hidden_widths.iter().copied().max().unwrap_or(0)
    }

    /// `[d, N_1, ..., N_L, 1]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims
    }

    pub fn layout(&self) -> Vec<LayerSlot> {
        let dims = self.dims();
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let slot = LayerSlot {
                    rows,
                    cols,
                    weight_offset: offset,
                    bias_offset: offset + rows * cols,
                };
                offset = slot.end();
                slot
            })
            .collect()
    }

    /// `p = sum_l (N_l N_{l-1} + N_l)`.
    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let p = self.param_count();
        if theta.len() != p {
            return Err(Error::ParamLength {
                expected: p,
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn clamp(&self, f: f64) -> f64 {
        match (self.clamp_output, self.output_bound) {
            (true, Some(b)) => f.clamp(-b, b),
            _ => f,
        }
    }
}

pub fn param_count(spec: &MlpSpec) -> usize {
    spec.param_count()
}

/// Structured weights and biases, `weights[l]` has shape `N_{l+1} x N_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetworkParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layout = spec.layout();
        Self {
            weights: layout.iter().map(|s| Array2::zeros((s.rows, s.cols))).collect(),
            biases: layout.iter().map(|s| Array1::zeros(s.rows)).collect(),
        }
    }

    /// Checks every layer against the architecture.
    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        let layout = spec.layout();
        if self.weights.len() != layout.len() || self.biases.len() != layout.len() {
            return Err(Error::ShapeMismatch {
                layer: self.weights.len().min(self.biases.len()) + 1,
                expected: format!("{} layers", layout.len()),
                found: format!("{} weights, {} biases", self.weights.len(), self.biases.len()),
            });
        }
        for (l, (slot, (w, b))) in layout.iter().zip(self.weights.iter().zip(&self.biases)).enumerate() {
            if w.dim() != (slot.rows, slot.cols) {
                return Err(Error::ShapeMismatch {
                    layer: l + 1,
                    expected: format!("weight {}x{}", slot.rows, slot.cols),
                    found: format!("weight {}x{}", w.nrows(), w.ncols()),
                });
            }
            if b.len() != slot.rows {
                return Err(Error::ShapeMismatch {
                    layer: l + 1,
                    expected: format!("bias of length {}", slot.rows),
                    found: format!("bias of length {}", b.len()),
                });
            }
        }
        Ok(())
    }

    /// Layer-major, column-major weights then bias within each layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weights.iter().map(|w| w.len()).sum::<usize>() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.t().iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn unflatten(spec: &MlpSpec, theta: &[f64]) -> Result<Self> {
        spec.check_theta(theta)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for slot in spec.layout() {
            let w = Array2::from_shape_vec(
                (slot.rows, slot.cols).f(),
                theta[slot.weight_offset..slot.bias_offset].to_vec(),
            )
            .expect("slot size matches layout");
            weights.push(w.as_standard_layout().into_owned());
            biases.push(Array1::from(theta[slot.bias_offset..slot.end()].to_vec()));
        }
        Ok(Self { weights, biases })
    }
}

pub fn flatten(params: &NetworkParams) -> Vec<f64> {
    params.flatten()
}

pub fn unflatten(spec: &MlpSpec, theta: &[f64]) -> Result<NetworkParams> {
    NetworkParams::unflatten(spec, theta)
}

fn weight_view<'a>(theta: &'a [f64], slot: &LayerSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((slot.rows, slot.cols).f(), &theta[slot.weight_offset..slot.bias_offset])
        .expect("slot size matches layout")
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ensure_finite(values: impl IntoIterator<Item = f64>, layer: usize, theta: &[f64]) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer,
            param_norm: l2_norm(theta),
        })
    }
}

fn check_inputs(spec: &MlpSpec, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            layer: 1,
            expected: format!("{} input columns", spec.input_dim),
            found: format!("{} input columns", x.ncols()),
        });
    }
    Ok(())
}

fn forward_block(spec: &MlpSpec, layout: &[LayerSlot], theta: &[f64], x: ArrayView2<f64>) -> Result<Array1<f64>> {
    let mut a = x.to_owned();
    let last = layout.len() - 1;
    for (l, slot) in layout.iter().enumerate() {
        let w = weight_view(theta, slot);
        let b = &theta[slot.bias_offset..slot.end()];
        let mut z = a.dot(&w.t());
        for mut row in z.rows_mut() {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
        if l < last {
            let act = spec.activation;
            z.mapv_inplace(|v| act.eval(v));
        }
        ensure_finite(z.iter().copied(), l + 1, theta)?;
        a = z;
    }
    Ok(a.column(0).mapv(|f| spec.clamp(f)))
}

/// Network outputs for every row of `x`, on a flat parameter vector.
pub fn forward_batch(spec: &MlpSpec, theta: &[f64], x: ArrayView2<f64>) -> Result<Array1<f64>> {
    spec.check_theta(theta)?;
    check_inputs(spec, &x)?;
    let layout = spec.layout();
    if x.nrows() <= FORWARD_CHUNK {
        return forward_block(spec, &layout, theta, x);
    }
    let mut out = Array1::zeros(x.nrows());
    for start in (0..x.nrows()).step_by(FORWARD_CHUNK) {
        let end = (start + FORWARD_CHUNK).min(x.nrows());
        let block = forward_block(spec, &layout, theta, x.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end]).assign(&block);
    }
    Ok(out)
}

/// Single-input evaluation.
pub fn forward(params: &NetworkParams, spec: &MlpSpec, x: &[f64]) -> Result<f64> {
    params.check(spec)?;
    let theta = params.flatten();
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    Ok(forward_batch(spec, &theta, xv)?[0])
}

/// Empirical risk `(1/n) sum_i loss(y_i, f(x_i))` and its gradient with respect
/// to the flat parameters, by reverse-mode accumulation.
pub fn risk_and_grad(spec: &MlpSpec, theta: &[f64], loss: LossKind, data: DataView<'_>) -> Result<(f64, Vec<f64>)> {
    spec.check_theta(theta)?;
    check_inputs(spec, &data.inputs)?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = data.len() as f64;
    let layout = spec.layout();
    let last = layout.len() - 1;
    let act = spec.activation;

    // pre-activations of hidden layers and layer inputs
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(last);
    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(layout.len());
    inputs.push(data.inputs.to_owned());
    let mut out = Array2::zeros((0, 0));
    for (l, slot) in layout.iter().enumerate() {
        let w = weight_view(theta, slot);
        let b = &theta[slot.bias_offset..slot.end()];
        let mut z = inputs[l].dot(&w.t());
        for mut row in z.rows_mut() {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
        ensure_finite(z.iter().copied(), l + 1, theta)?;
        if l < last {
            inputs.push(z.mapv(|v| act.eval(v)));
            pre.push(z);
        } else {
            out = z;
        }
    }

    let mut risk = 0.0;
    let mut delta = Array2::zeros((data.len(), 1));
    for ((d, &f_raw), &y) in delta.iter_mut().zip(out.column(0)).zip(data.targets) {
        let f = spec.clamp(f_raw);
        risk += loss.value(y, f)?;
        *d = if f != f_raw { 0.0 } else { loss.deriv(y, f)? / n };
    }
    risk /= n;

    let mut grad = vec![0.0; theta.len()];
    for l in (0..layout.len()).rev() {
        let slot = &layout[l];
        {
            let (gw, gb) = grad[slot.weight_offset..slot.end()].split_at_mut(slot.rows * slot.cols);
            let mut gw = ArrayViewMut2::from_shape((slot.rows, slot.cols).f(), gw).expect("slot size");
            general_mat_mul(1.0, &delta.t(), &inputs[l], 0.0, &mut gw);
            for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g = s;
            }
        }
        if l > 0 {
            let w = weight_view(theta, slot);
            let mut back = delta.dot(&w);
            Zip::from(&mut back)
                .and(&pre[l - 1])
                .for_each(|g, &z| *g *= act.deriv(z));
            delta = back;
        }
    }
    ensure_finite(grad.iter().copied(), 0, theta)?;
    Ok((risk, grad))
}

/// Gradient of the mean loss over `batch`.
pub fn grad(params: &NetworkParams, spec: &MlpSpec, loss: LossKind, batch: DataView<'_>) -> Result<Vec<f64>> {
    params.check(spec)?;
    risk_and_grad(spec, &params.flatten(), loss, batch).map(|(_, g)| g)
}

/// Glorot-uniform weights, zero biases; reproducible per seed.
pub fn init_params(spec: &MlpSpec, seed: u64) -> NetworkParams {
    NetworkParams::unflatten(spec, &init_flat(spec, seed)).expect("length from layout")
}

pub fn init_flat(spec: &MlpSpec, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[0x1417]);
    let mut theta = vec![0.0; spec.param_count()];
    for slot in spec.layout() {
        let limit = (6.0 / (slot.cols + slot.rows) as f64).sqrt();
        for v in &mut theta[slot.weight_offset..slot.bias_offset] {
            *v = rng.random_range(-limit..=limit);
        }
    }
    theta
}

//! Training: the CCCP outer loop with a proximal-gradient inner loop for the
//! clipped-L1 objective, and plain Adam for the unpenalized baseline.
//!
//! Outer iteration `t` freezes `h = h_vector(θ_t, τ)` and takes soft-thresholded
//! gradient steps on the majorant `Q*(· | θ_t)` until one of them lands at or
//! below `Q*(θ_t | θ_t) = Q(θ_t)`, or the inner cap `k_bar` is used up. Any
//! iterate satisfying that test also satisfies `Q(θ) <= Q(θ_t)`.

use std::io::Write;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::error::{Error, Result};
use crate::losses::{self, LossKind};
use crate::nn::{self, MlpSpec, NetworkParams};
use crate::penalty::{self, PenaltyConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotonePolicy {
    /// Accept `θ^(t, k_bar + 1)` even when the majorant never decreased.
    AcceptLast,
    /// Reject such iterates, halve the step size and retry.
    #[default]
    Strict,
}

impl FromStr for MonotonePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MonotonePolicy::Strict),
            "accept-last" => Ok(MonotonePolicy::AcceptLast),
            _ => Err(Error::InvalidConfig(format!("unknown monotone policy {s:?}"))),
        }
    }
}

/// Stop once the relative objective improvement stays below `rel_tol`
/// for `patience` consecutive outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub rel_tol: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Step size (constant unless strict mode halves it).
    pub eta: f64,
    /// Inner cap: at most `k_bar + 1` proximal steps per outer iteration.
    pub k_bar: usize,
    pub outer_iters: usize,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub monotone_policy: MonotonePolicy,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    pub max_halvings: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            k_bar: 10,
            outer_iters: 500,
            batch_size: None,
            monotone_policy: MonotonePolicy::Strict,
            seed: 0,
            early_stop: None,
            max_halvings: 20,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.k_bar == 0 {
            return Err(Error::InvalidConfig("k_bar must be >= 1".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::InvalidConfig("outer_iters must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One outer iteration of a fit (or one step of Adam).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub risk: f64,
    pub penalty: f64,
    pub sparsity: f64,
    /// `k_t*`; the number of proximal steps taken is `k_t* + 1`.
    pub inner_steps: usize,
    pub eta: f64,
    pub halvings: usize,
    /// The majorant test `Q*(θ^(t+1) | θ_t) <= Q(θ_t)` held.
    pub decreased: bool,
    pub stalled: bool,
}

pub const TRACE_HEADER: &str = "iteration,objective,risk,penalty,sparsity";

impl IterRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.objective, self.risk, self.penalty, self.sparsity
        )
    }
}

/// Streams trace records as CSV lines into `sink`; the header is written first.
pub fn trace_writer<W: Write>(mut sink: W) -> impl FnMut(&IterRecord) {
    let _ = writeln!(sink, "{TRACE_HEADER}");
    move |rec| {
        let _ = writeln!(sink, "{}", rec.to_line());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_params: NetworkParams,
    pub theta: Vec<f64>,
    pub initial_objective: f64,
    pub trace: Vec<IterRecord>,
    /// Early-stopping criterion met.
    pub converged: bool,
    /// Some outer iteration exhausted its halvings and kept the old iterate.
    pub stalled: bool,
    /// `max_j |θ_j|`, to observe the (unenforced) parameter bound.
    pub max_abs_param: f64,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn sparsity(&self) -> f64 {
        sparsity(&self.theta)
    }
}

/// Fraction of coordinates that are exactly nonzero.
pub fn sparsity(theta: &[f64]) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    penalty::l0_norm(theta) as f64 / theta.len() as f64
}

/// Fraction of coordinates with `|θ_j| > τ`.
pub fn sparsity_above(theta: &[f64], tau: f64) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    theta.iter().filter(|t| t.abs() > tau).count() as f64 / theta.len() as f64
}

/// One soft-thresholded step on the majorant:
/// `u = θ - η (∇L - (λ/τ) h)`, then `(u - sign(u) ηλ/τ) 1(|u| >= ηλ/τ)`.
pub fn prox_step(theta: &[f64], grad: &[f64], h: &[f64], eta: f64, cfg: &PenaltyConfig) -> Vec<f64> {
    debug_assert!(theta.len() == grad.len() && grad.len() == h.len());
    let slope = cfg.slope();
    let thr = eta * slope;
    theta
        .iter()
        .zip(grad)
        .zip(h)
        .map(|((&t, &g), &hj)| {
            let u = t - eta * (g - slope * hj);
            if u.abs() >= thr {
                u - u.signum() * thr
            } else {
                0.0
            }
        })
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect()
}

struct Problem<'a, 'd> {
    spec: &'a MlpSpec,
    loss: LossKind,
    data: DataView<'d>,
    penalty: &'a PenaltyConfig,
}

/// Mini-batch index stream: epochs of shuffled indices, each batch sorted.
struct BatchSampler {
    batch: usize,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            batch,
            order: (0..n).collect(),
            pos: n,
            rng: rng::stream(seed, &[0xBA7C]),
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let n = self.order.len();
        if self.pos + self.batch > n {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let mut idx = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        idx.sort_unstable();
        idx
    }
}

/// Gradient source: full batch, or fresh mini-batches.
enum Gradients {
    Full,
    Mini(Box<BatchSampler>),
}

impl Gradients {
    fn new(n: usize, opt: &OptimizerConfig) -> Self {
        match opt.batch_size {
            Some(b) if b < n => Gradients::Mini(Box::new(BatchSampler::new(n, b, opt.seed))),
            _ => Gradients::Full,
        }
    }

    fn is_full(&self) -> bool {
        matches!(self, Gradients::Full)
    }

    /// Batch gradient at `theta`; only meaningful for mini-batch mode.
    fn batch_grad(&mut self, p: &Problem<'_, '_>, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            Gradients::Full => nn::risk_and_grad(p.spec, theta, p.loss, p.data).map(|(_, g)| g),
            Gradients::Mini(s) => {
                let idx = s.next_batch();
                let x: Array2<f64> = p.data.inputs.select(Axis(0), &idx);
                let y: Array1<f64> = p.data.targets.select(Axis(0), &idx);
                let view = DataView::new(x.view(), y.view())?;
                nn::risk_and_grad(p.spec, theta, p.loss, view).map(|(_, g)| g)
            }
        }
    }
}

/// Result of one run of the inner proximal loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub theta: Vec<f64>,
    /// Full-batch risk at `theta`.
    pub risk: f64,
    pub k_star: usize,
    /// The stopping test succeeded (rather than hitting `k_bar`).
    pub decreased: bool,
    pub q_star_start: f64,
    pub q_star_end: f64,
    full_grad: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn run_inner(
    p: &Problem<'_, '_>,
    grads: &mut Gradients,
    theta_t: &[f64],
    risk_t: f64,
    full_grad_t: Option<&[f64]>,
    eta: f64,
    k_bar: usize,
) -> Result<InnerResult> {
    let h = penalty::h_vector(theta_t, p.penalty.tau);
    let q_start = penalty::objective_q(theta_t, risk_t, p.penalty);
    let mut grad = match full_grad_t {
        Some(g) => g.to_vec(),
        None => grads.batch_grad(p, theta_t)?,
    };
    let mut cur = theta_t.to_vec();
    for k in 0..=k_bar {
        let next = prox_step(&cur, &grad, &h, eta, p.penalty);
        let (risk, full_grad) = if grads.is_full() {
            let (r, g) = nn::risk_and_grad(p.spec, &next, p.loss, p.data)?;
            (r, Some(g))
        } else {
            (losses::risk_flat(p.spec, &next, p.loss, p.data)?, None)
        };
        let q_star = risk + penalty::surrogate_penalty(&next, &h, p.penalty);
        let decreased = q_star <= q_start;
        if decreased || k == k_bar {
            return Ok(InnerResult {
                theta: next,
                risk,
                k_star: k,
                decreased,
                q_star_start: q_start,
                q_star_end: q_star,
                full_grad,
            });
        }
        grad = match full_grad {
            Some(g) => g,
            None => grads.batch_grad(p, &next)?,
        };
        cur = next;
    }
    unreachable!("loop returns at k == k_bar")
}

fn check_data(data: &DataView<'_>, spec: &MlpSpec, loss: LossKind) -> Result<()> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if loss.is_margin() {
        if let Some(&y) = data.targets.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidLabel(y));
        }
    }
    Ok(())
}

/// One inner loop from `θ_t` with `h` frozen at `θ_t`.
pub fn inner_loop(
    theta_t: &[f64],
    spec: &MlpSpec,
    loss: LossKind,
    data: DataView<'_>,
    cfg: &PenaltyConfig,
    opt: &OptimizerConfig,
) -> Result<InnerResult> {
    cfg.validate()?;
    opt.validate()?;
    check_data(&data, spec, loss)?;
    let p = Problem {
        spec,
        loss,
        data,
        penalty: cfg,
    };
    let mut grads = Gradients::new(data.len(), opt);
    let (risk, full) = nn::risk_and_grad(spec, theta_t, loss, data)?;
    let full = grads.is_full().then_some(full);
    run_inner(&p, &mut grads, theta_t, risk, full.as_deref(), opt.eta, opt.k_bar)
}

/// Sparse-penalized fit from the seeded Glorot initialization.
pub fn fit(
    data: DataView<'_>,
    spec: &MlpSpec,
    loss: LossKind,
    penalty_cfg: &PenaltyConfig,
    opt: &OptimizerConfig,
) -> Result<FitReport> {
    let theta0 = nn::init_flat(spec, opt.seed);
    fit_from(theta0, data, spec, loss, penalty_cfg, opt, &mut |_| {})
}

/// Sparse-penalized fit from `theta0`; `observer` sees every outer iteration.
pub fn fit_from(
    theta0: Vec<f64>,
    data: DataView<'_>,
    spec: &MlpSpec,
    loss: LossKind,
    penalty_cfg: &PenaltyConfig,
    opt: &OptimizerConfig,
    observer: &mut dyn FnMut(&IterRecord),
) -> Result<FitReport> {
    penalty_cfg.validate()?;
    opt.validate()?;
    check_data(&data, spec, loss)?;
    if theta0.len() != spec.param_count() {
        return Err(Error::ParamLength {
            expected: spec.param_count(),
            found: theta0.len(),
        });
    }
    let p = Problem {
        spec,
        loss,
        data,
        penalty: penalty_cfg,
    };
    let strict = opt.monotone_policy == MonotonePolicy::Strict;
    let mut grads = Gradients::new(data.len(), opt);

    let mut theta = theta0;
    let (mut risk, g) = nn::risk_and_grad(spec, &theta, loss, data)?;
    let mut full_grad = grads.is_full().then_some(g);
    let mut q = penalty::objective_q(&theta, risk, penalty_cfg);
    if !q.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0, value: q });
    }
    let initial_objective = q;

    let mut eta = opt.eta;
    let mut trace = Vec::with_capacity(opt.outer_iters);
    let mut stalled_any = false;
    let mut converged = false;
    let mut flat_run = 0usize;

    for t in 0..opt.outer_iters {
        let mut halvings = 0;
        let mut stalled = false;
        let accepted = loop {
            let attempt = run_inner(&p, &mut grads, &theta, risk, full_grad.as_deref(), eta, opt.k_bar);
            match attempt {
                Ok(inner) => {
                    let q_new = penalty::objective_q(&inner.theta, inner.risk, penalty_cfg);
                    if !strict {
                        if !q_new.is_finite() {
                            return Err(Error::NonFiniteObjective {
                                iteration: t + 1,
                                value: q_new,
                            });
                        }
                        break Some((inner, q_new));
                    }
                    if inner.decreased && q_new <= q {
                        break Some((inner, q_new));
                    }
                }
                Err(Error::NonFinite { .. }) if strict => {}
                Err(e) => return Err(e),
            }
            if halvings == opt.max_halvings {
                stalled = true;
                break None;
            }
            halvings += 1;
            eta *= 0.5;
        };

        let (k_star, decreased) = match accepted {
            Some((inner, q_new)) => {
                let out = (inner.k_star, inner.decreased);
                theta = inner.theta;
                risk = inner.risk;
                full_grad = inner.full_grad;
                let improvement = (q - q_new) / q.abs().max(1.0);
                q = q_new;
                flat_run = if improvement < opt.early_stop.map_or(0.0, |e| e.rel_tol) {
                    flat_run + 1
                } else {
                    0
                };
                out
            }
            None => {
                stalled_any = true;
                flat_run += 1;
                (opt.k_bar, false)
            }
        };

        let rec = IterRecord {
            iteration: t + 1,
            objective: q,
            risk,
            penalty: penalty_cfg.value(&theta),
            sparsity: sparsity(&theta),
            inner_steps: k_star,
            eta,
            halvings,
            decreased,
            stalled,
        };
        observer(&rec);
        trace.push(rec);

        if let Some(es) = opt.early_stop {
            if flat_run >= es.patience {
                converged = true;
                break;
            }
        }
    }

    Ok(FitReport {
        final_params: NetworkParams::unflatten(spec, &theta)?,
        max_abs_param: theta.iter().fold(0.0, |m, v| m.max(v.abs())),
        theta,
        initial_objective,
        trace,
        converged,
        stalled: stalled_any,
    })
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Unpenalized Adam on the empirical risk; `opt.eta` is the learning rate and
/// `opt.outer_iters` the number of steps.
pub fn adam_fit(data: DataView<'_>, spec: &MlpSpec, loss: LossKind, opt: &OptimizerConfig) -> Result<FitReport> {
    let theta0 = nn::init_flat(spec, opt.seed);
    adam_fit_from(theta0, data, spec, loss, opt, &mut |_, _| {})
}

/// Adam from `theta0`. `observer(step, θ)` is called after every step.
/// Trace records carry the risk at the iterate each step started from
/// (the batch risk in mini-batch mode).
pub fn adam_fit_from(
    theta0: Vec<f64>,
    data: DataView<'_>,
    spec: &MlpSpec,
    loss: LossKind,
    opt: &OptimizerConfig,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<FitReport> {
    opt.validate()?;
    check_data(&data, spec, loss)?;
    if theta0.len() != spec.param_count() {
        return Err(Error::ParamLength {
            expected: spec.param_count(),
            found: theta0.len(),
        });
    }
    let mut sampler = match opt.batch_size {
        Some(b) if b < data.len() => Some(BatchSampler::new(data.len(), b, opt.seed)),
        _ => None,
    };
    let mut theta = theta0;
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut trace = Vec::with_capacity(opt.outer_iters);
    let initial_objective = losses::risk_flat(spec, &theta, loss, data)?;

    for step in 1..=opt.outer_iters {
        let (risk, g) = match sampler.as_mut() {
            None => nn::risk_and_grad(spec, &theta, loss, data)?,
            Some(s) => {
                let idx = s.next_batch();
                let x: Array2<f64> = data.inputs.select(Axis(0), &idx);
                let y: Array1<f64> = data.targets.select(Axis(0), &idx);
                nn::risk_and_grad(spec, &theta, loss, DataView::new(x.view(), y.view())?)?
            }
        };
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
        for j in 0..theta.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            theta[j] -= opt.eta * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        trace.push(IterRecord {
            iteration: step,
            objective: risk,
            risk,
            penalty: 0.0,
            sparsity: sparsity(&theta),
            inner_steps: 0,
            eta: opt.eta,
            halvings: 0,
            decreased: true,
            stalled: false,
        });
        observer(step, &theta);
    }

    Ok(FitReport {
        final_params: NetworkParams::unflatten(spec, &theta)?,
        max_abs_param: theta.iter().fold(0.0, |m, v| m.max(v.abs())),
        theta,
        initial_objective,
        trace,
        converged: false,
        stalled: false,
    })
}

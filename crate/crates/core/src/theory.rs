//! Calculators for the covering-number and Lipschitz bounds of sparse network
//! classes, plus empirical checks of those bounds and of the one-node
//! identity construction for smooth activations.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, ActivationFamily, MlpSpec, NetworkParams};
use crate::rng;

/// Parameters of a network class `F(L, N, B, F)` with sparsity budget `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub depth: usize,
    pub width: usize,
    pub bound: f64,
    pub sparsity: f64,
    pub delta: f64,
    pub tau: f64,
    pub output_bound: f64,
}

impl ClassParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bound >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "parameter bound B must be >= 1, got {}",
                self.bound
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "covering radius must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// `ζ = (L+1)((N+1)B)^{L+1}`.
    pub fn zeta(&self) -> f64 {
        lipschitz_bound(self.depth, self.width, self.bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringBound {
    /// Upper bound on the log covering number.
    pub log_covering: f64,
    /// The value is negative, so the bound carries no information.
    pub vacuous: bool,
}

impl CoveringBound {
    fn new(log_covering: f64) -> Self {
        Self {
            log_covering,
            vacuous: log_covering < 0.0,
        }
    }
}

fn log_cover(p: &ClassParams, radius: f64) -> f64 {
    let l1 = (p.depth + 1) as f64;
    2.0 * p.sparsity * l1 * (l1 * (p.width as f64 + 1.0) * p.bound / radius).ln()
}

/// `2S(L+1) log((L+1)(N+1)B / δ)` for the L0-sparse class.
pub fn covering_bound(p: &ClassParams) -> Result<CoveringBound> {
    p.validate()?;
    Ok(CoveringBound::new(log_cover(p, p.delta)))
}

/// Same bound for the clipped-L1 class, at the shrunken radius `δ - τζ`.
pub fn covering_bound_clipped(p: &ClassParams) -> Result<CoveringBound> {
    p.validate()?;
    let threshold = p.tau * p.zeta();
    if p.delta <= threshold {
        return Err(Error::CoveringThreshold {
            delta: p.delta,
            threshold,
        });
    }
    Ok(CoveringBound::new(log_cover(p, p.delta - threshold)))
}

/// `(L+1)((N+1)B)^{L+1}`: sup-norm Lipschitz constant of the map from
/// parameters to functions on `[0,1]^d`.
pub fn lipschitz_bound(depth: usize, width: usize, bound: f64) -> f64 {
    let l1 = (depth + 1) as f64;
    l1 * ((width as f64 + 1.0) * bound).powi(depth as i32 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest observed `sup|f1 - f2| / (bound * ||θ1 - θ2||_∞)`.
    pub max_ratio: f64,
}

impl LipschitzReport {
    fn merge(self, other: Self) -> Self {
        Self {
            trials: self.trials + other.trials,
            violations: self.violations + other.violations,
            max_ratio: self.max_ratio.max(other.max_ratio),
        }
    }

    fn empty() -> Self {
        Self {
            trials: 0,
            violations: 0,
            max_ratio: 0.0,
        }
    }
}

/// Regular lattice on `[0,1]^d` with `ceil(grid_size^(1/d))` points per axis.
pub fn unit_grid(d: usize, grid_size: usize) -> Array2<f64> {
    let mut per_axis = (grid_size as f64).powf(1.0 / d as f64).round() as usize;
    while per_axis.pow(d as u32) < grid_size {
        per_axis += 1;
    }
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(d as u32);
    Array2::from_shape_fn((total, d), |(i, j)| {
        let digit = (i / per_axis.pow(j as u32)) % per_axis;
        digit as f64 / (per_axis - 1) as f64
    })
}

/// Width used in the bound: the proof needs every layer, including the
/// input, to have at most `N` units.
fn effective_width(spec: &MlpSpec) -> usize {
    spec.width().max(spec.input_dim)
}

fn random_pair(p: usize, bound: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..p).map(|_| rng.random_range(-bound..=bound)).collect();
    let b = if rng.random::<bool>() {
        (0..p).map(|_| rng.random_range(-bound..=bound)).collect()
    } else {
        let scale = bound * 10f64.powf(-rng.random_range(0.0..3.0));
        a.iter()
            .map(|v| (v + rng.random_range(-scale..=scale)).clamp(-bound, bound))
            .collect()
    };
    (a, b)
}

fn check_pair(spec: &MlpSpec, grid: ArrayView2<f64>, a: &[f64], b: &[f64], lip: f64) -> Result<(bool, f64)> {
    let dtheta = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let fa = nn::forward_batch(spec, a, grid)?;
    let fb = nn::forward_batch(spec, b, grid)?;
    let sup = fa.iter().zip(fb.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let allowed = lip * dtheta;
    let violated = sup > allowed * (1.0 + 1e-12);
    let ratio = if allowed > 0.0 { sup / allowed } else { 0.0 };
    Ok((violated, ratio))
}

/// Samples `trials` parameter pairs with `||θ||_∞ <= B` and compares the grid
/// maximum of `|f1 - f2|` to `(L+1)((N+1)B)^{L+1} ||θ1 - θ2||_∞`.
pub fn verify_lipschitz(
    spec: &MlpSpec,
    bound: f64,
    trials: usize,
    grid_size: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    spec.validate()?;
    if !(bound >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "parameter bound B must be >= 1, got {bound}"
        )));
    }
    let grid = unit_grid(spec.input_dim, grid_size);
    let lip = lipschitz_bound(spec.depth(), effective_width(spec), bound);
    let p = spec.param_count();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(seed, &[0x11B, trial as u64]);
            let (a, b) = random_pair(p, bound, &mut rng);
            let (violated, ratio) = check_pair(spec, grid.view(), &a, &b, lip)?;
            Ok(LipschitzReport {
                trials: 1,
                violations: violated as usize,
                max_ratio: ratio,
            })
        })
        .try_reduce(LipschitzReport::empty, |x, y| Ok(x.merge(y)))
}

/// Limits for [`verify_lipschitz_random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSweep {
    pub instances: usize,
    pub max_input_dim: usize,
    pub max_depth: usize,
    pub max_width: usize,
    pub max_bound: f64,
    pub grid_size: usize,
}

impl Default for LipschitzSweep {
    fn default() -> Self {
        Self {
            instances: 1000,
            max_input_dim: 3,
            max_depth: 2,
            max_width: 4,
            max_bound: 2.0,
            grid_size: 10_000,
        }
    }
}

/// One random parameter pair for each of many random ReLU architectures.
pub fn verify_lipschitz_random(sweep: &LipschitzSweep, seed: u64) -> Result<LipschitzReport> {
    (0..sweep.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[0x5EE9, i as u64]);
            let d = rng.random_range(1..=sweep.max_input_dim);
            let depth = rng.random_range(1..=sweep.max_depth);
            let widths = (0..depth).map(|_| rng.random_range(1..=sweep.max_width)).collect();
            let bound = rng.random_range(1.0..=sweep.max_bound);
            let spec = MlpSpec::new(d, widths, Activation::Relu)?;
            let grid = unit_grid(d, sweep.grid_size);
            let lip = lipschitz_bound(spec.depth(), effective_width(&spec), bound);
            let (a, b) = random_pair(spec.param_count(), bound, &mut rng);
            let (violated, ratio) = check_pair(&spec, grid.view(), &a, &b, lip)?;
            Ok(LipschitzReport {
                trials: 1,
                violations: violated as usize,
                max_ratio: ratio,
            })
        })
        .try_reduce(LipschitzReport::empty, |x, y| Ok(x.merge(y)))
}

/// Expansion point `t` with `ρ'(t) != 0` and `ρ''(t) != 0`.
pub fn default_expansion_point(act: Activation) -> Result<f64> {
    match act {
        Activation::Sigmoid => Ok(1.0),
        Activation::Tanh => Ok(0.5),
        Activation::Softplus | Activation::Swish => Ok(0.0),
        Activation::Softsign | Activation::Isru(_) => Ok(0.5),
        Activation::Elu(_) | Activation::Isrlu(_) => Ok(-0.5),
        Activation::Identity | Activation::Relu | Activation::LeakyRelu(_) => {
            Err(Error::NotLocallyQuadratic(act.to_string()))
        }
    }
}

/// One-hidden-node approximation of the identity,
/// `x -> (K/ρ'(t)) (ρ(x/K + t) - ρ(t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityNet {
    #[serde(skip)]
    pub spec: MlpSpec,
    #[serde(skip)]
    pub params: NetworkParams,
    pub activation: String,
    pub t: f64,
    pub k: f64,
    /// `C_1 = K ε / (1+δ)^2` at the accepted `K`.
    pub c1: f64,
    pub sup_error: f64,
    pub epsilon: f64,
    pub delta: f64,
}

pub const IDENTITY_GRID: usize = 10_000;
const MAX_DOUBLINGS: usize = 60;

fn identity_params(act: Activation, t: f64, k: f64) -> NetworkParams {
    let slope = act.deriv(t);
    NetworkParams {
        weights: vec![Array2::from_elem((1, 1), 1.0 / k), Array2::from_elem((1, 1), k / slope)],
        biases: vec![ndarray::arr1(&[t]), ndarray::arr1(&[-k * act.eval(t) / slope])],
    }
}

fn identity_spec(act: Activation, delta: f64, epsilon: f64) -> Result<MlpSpec> {
    Ok(MlpSpec::new(1, vec![1], act)?.with_output_bound(1.0 + delta + epsilon, true))
}

fn check_expansion_point(act: Activation, t: f64) -> Result<()> {
    if act.family() != ActivationFamily::LocallyQuadratic
        || act.deriv(t).abs() < 1e-8
        || act.second_deriv(t).abs() < 1e-8
    {
        return Err(Error::NotLocallyQuadratic(format!("{act} at t = {t}")));
    }
    Ok(())
}

/// Grid maximum of `|f(x) - x|` over `[-δ, 1+δ]` for a given `K`.
pub fn identity_error(act: Activation, t: f64, k: f64, delta: f64, epsilon: f64) -> Result<f64> {
    check_expansion_point(act, t)?;
    let spec = identity_spec(act, delta, epsilon)?;
    let theta = identity_params(act, t, k).flatten();
    let grid = Array2::from_shape_fn((IDENTITY_GRID, 1), |(i, _)| {
        -delta + (1.0 + 2.0 * delta) * i as f64 / (IDENTITY_GRID - 1) as f64
    });
    let f = nn::forward_batch(&spec, &theta, grid.view())?;
    Ok(f.iter()
        .zip(grid.column(0))
        .fold(0.0f64, |m, (fx, x)| m.max((fx - x).abs())))
}

/// Builds the identity approximation, doubling `K` from `(1+δ)^2/ε` until the
/// grid error is at most `ε`.
pub fn identity_net(delta: f64, epsilon: f64, act: Activation, t: Option<f64>) -> Result<IdentityNet> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be >= 0, got {delta}")));
    }
    let t = match t {
        Some(t) => t,
        None => default_expansion_point(act)?,
    };
    check_expansion_point(act, t)?;
    let scale = (1.0 + delta).powi(2) / epsilon;
    let mut k = scale;
    let mut best = f64::INFINITY;
    for _ in 0..=MAX_DOUBLINGS {
        let err = identity_error(act, t, k, delta, epsilon)?;
        best = best.min(err);
        if err <= epsilon {
            return Ok(IdentityNet {
                spec: identity_spec(act, delta, epsilon)?,
                params: identity_params(act, t, k),
                activation: act.to_string(),
                t,
                k,
                c1: k / scale,
                sup_error: err,
                epsilon,
                delta,
            });
        }
        k *= 2.0;
    }
    Err(Error::IdentityNotReached { epsilon, best })
}

/// `θ_j 1(|θ_j| > τ)`.
pub fn hard_threshold(theta: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    Ok(theta.iter().map(|&v| if v.abs() > tau { v } else { 0.0 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn class(depth: usize, width: usize, bound: f64, sparsity: f64, delta: f64, tau: f64) -> ClassParams {
        ClassParams {
            depth,
            width,
            bound,
            sparsity,
            delta,
            tau,
            output_bound: 1.0,
        }
    }

    #[test]
    fn covering_examples() {
        let p = class(1, 1, 1.0, 1.0, 4.0 / E, 0.0);
        assert!((covering_bound(&p).unwrap().log_covering - 4.0).abs() < 1e-14);
        let at_scale = class(2, 3, 1.5, 5.0, 3.0 * 4.0 * 1.5, 0.0);
        let b = covering_bound(&at_scale).unwrap();
        assert_eq!(b.log_covering, 0.0);
        assert!(!b.vacuous);
        let wide = class(2, 3, 1.5, 5.0, 100.0, 0.0);
        assert!(covering_bound(&wide).unwrap().vacuous);
        let s2 = class(1, 1, 1.0, 2.0, 4.0 / E, 0.0);
        assert!((covering_bound(&s2).unwrap().log_covering - 8.0).abs() < 1e-13);
        assert!(covering_bound(&class(1, 1, 1.0, 1.0, 0.0, 0.0)).is_err());
        assert!(covering_bound(&class(1, 1, 0.5, 1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn clipped_covering_examples() {
        let p = class(1, 1, 1.0, 1.0, 4.0 / E + 0.8, 0.1);
        assert_eq!(p.zeta(), 8.0);
        assert!((covering_bound_clipped(&p).unwrap().log_covering - 4.0).abs() < 1e-13);
        let plain = class(1, 1, 1.0, 1.0, 0.7, 0.0);
        assert_eq!(covering_bound_clipped(&plain).unwrap(), covering_bound(&plain).unwrap());
        let edge = class(1, 1, 1.0, 1.0, 0.8, 0.1);
        assert!(matches!(
            covering_bound_clipped(&edge),
            Err(Error::CoveringThreshold { .. })
        ));
    }

    #[test]
    fn lipschitz_formula() {
        assert_eq!(lipschitz_bound(1, 1, 1.0), 8.0);
        assert_eq!(lipschitz_bound(0, 4, 2.0), 10.0);
        let mut prev = 0.0;
        for l in 0..4 {
            let v = lipschitz_bound(l, 3, 1.5);
            assert!(v >= prev);
            prev = v;
        }
        assert!(lipschitz_bound(2, 4, 1.0) <= lipschitz_bound(2, 5, 1.0));
        assert!(lipschitz_bound(2, 4, 1.0) <= lipschitz_bound(2, 4, 1.1));
    }

    #[test]
    fn unit_grid_covers_corners() {
        let g = unit_grid(2, 100);
        assert_eq!(g.nrows(), 100);
        assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(g.rows().into_iter().any(|r| r[0] == 1.0 && r[1] == 1.0));
        assert_eq!(unit_grid(3, 10_000).nrows(), 22 * 22 * 22);
    }

    #[test]
    fn identical_parameters_have_zero_gap() {
        let spec = MlpSpec::new(2, vec![3], Activation::Relu).unwrap();
        let theta = vec![0.5; spec.param_count()];
        let grid = unit_grid(2, 25);
        let (violated, ratio) = check_pair(&spec, grid.view(), &theta, &theta, 10.0).unwrap();
        assert!(!violated);
        assert_eq!(ratio, 0.0);
    }

    #[test]
    fn small_lipschitz_run() {
        let spec = MlpSpec::new(2, vec![3, 2], Activation::Relu).unwrap();
        let r = verify_lipschitz(&spec, 1.5, 20, 400, 1).unwrap();
        assert_eq!(r.trials, 20);
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 1.0);
    }

    #[test]
    fn relu_has_no_expansion_point() {
        assert!(matches!(
            identity_net(0.0, 1e-2, Activation::Relu, None),
            Err(Error::NotLocallyQuadratic(_))
        ));
        assert!(identity_net(0.0, 1e-2, Activation::Sigmoid, Some(0.0)).is_err());
        assert!(identity_net(0.0, 1e-2, Activation::Sigmoid, Some(1.0)).is_ok());
    }

    #[test]
    fn sigmoid_second_derivative_vanishes_only_at_zero() {
        let a = Activation::Sigmoid;
        assert_eq!(a.second_deriv(0.0), 0.0);
        for i in 1..100 {
            let z = 0.1 * i as f64;
            assert!(a.second_deriv(z) < 0.0);
            assert!(a.second_deriv(-z) > 0.0);
        }
    }

    #[test]
    fn identity_for_smooth_activations() {
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Softplus] {
            let net = identity_net(0.0, 1e-2, act, None).unwrap();
            assert!(net.sup_error <= 1e-2, "{act}");
            let x = [0.37];
            let f = nn::forward(&net.params, &net.spec, &x).unwrap();
            assert!((f - 0.37).abs() <= 1e-2);
        }
        let wide = identity_net(0.5, 1e-3, Activation::Tanh, None).unwrap();
        assert!(wide.sup_error <= 1e-3);
    }

    #[test]
    fn hard_threshold_examples() {
        let theta = [0.0, 0.3, -0.05, 2.0];
        assert_eq!(hard_threshold(&theta, 0.0).unwrap(), theta.to_vec());
        assert_eq!(hard_threshold(&theta, 2.0).unwrap(), vec![0.0; 4]);
        assert_eq!(hard_threshold(&theta, 0.1).unwrap(), vec![0.0, 0.3, 0.0, 2.0]);
        assert!(hard_threshold(&theta, -1.0).is_err());
    }
}

//! The clipped L1 penalty `λ Σ_j min(|θ_j|/τ, 1)`, its difference-of-convex
//! split, and the convex majorant used by the CCCP outer loop.
//!
//! With `h` the sign pattern of the coordinates of the anchor `θ_t` that
//! exceed `τ`, the majorant is
//!
//! ```text
//! Q*(θ | θ_t) = L_n(θ) - (λ/τ) <h, θ - τh> + (λ/τ) ||θ||_1
//! ```
//!
//! which upper-bounds `Q(θ) = L_n(θ) + λ ||θ||_clip,τ` and touches it at `θ_t`.
//! The offset is `τh` rather than `τ1`: the latter is the same tangent for
//! positive coordinates but sits `2λ` too low for each negative one, which
//! breaks both the bound and the touching point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub tau: f64,
}

impl PenaltyConfig {
    /// `lambda = 0` is accepted and reduces the penalty to nothing.
    pub fn new(lambda: f64, tau: f64) -> Result<Self> {
        let cfg = Self { lambda, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        check_tau(self.tau)
    }

    /// `λ/τ`, the L1 weight of the majorant.
    pub fn slope(&self) -> f64 {
        self.lambda / self.tau
    }

    /// `λ ||θ||_clip,τ`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.lambda * clip_sum(theta, self.tau)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("tau must be > 0, got {tau}")))
    }
}

fn clip_sum(theta: &[f64], tau: f64) -> f64 {
    theta.iter().map(|t| (t.abs() / tau).min(1.0)).sum()
}

/// `Σ_j min(|θ_j|/τ, 1)`.
pub fn clipped_norm(theta: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(clip_sum(theta, tau))
}

pub fn l1_norm(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.abs()).sum()
}

pub fn l0_norm(theta: &[f64]) -> usize {
    theta.iter().filter(|&&t| t != 0.0).count()
}

/// `sign(θ_j) 1(|θ_j| > τ)`, with `sign(0) = 0`.
pub fn h_vector(theta_t: &[f64], tau: f64) -> Vec<f64> {
    theta_t
        .iter()
        .map(|&t| {
            if t.abs() > tau {
                if t > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        })
        .collect()
}

/// Convex part of the split: `||θ||_1 / τ`.
pub fn dc_convex_part(theta: &[f64], tau: f64) -> f64 {
    l1_norm(theta) / tau
}

/// Concave part of the split: `-(1/τ) Σ (|θ_j| - τ) 1(|θ_j| >= τ)`.
pub fn dc_concave_part(theta: &[f64], tau: f64) -> f64 {
    -theta
        .iter()
        .filter(|t| t.abs() >= tau)
        .map(|t| t.abs() - tau)
        .sum::<f64>()
        / tau
}

/// `Q(θ) = risk + λ ||θ||_clip,τ`.
pub fn objective_q(theta: &[f64], risk: f64, cfg: &PenaltyConfig) -> f64 {
    risk + cfg.value(theta)
}

/// Penalty part of the majorant for a precomputed `h`.
pub fn surrogate_penalty(theta: &[f64], h: &[f64], cfg: &PenaltyConfig) -> f64 {
    debug_assert_eq!(theta.len(), h.len());
    let mut linear = 0.0;
    let mut l1 = 0.0;
    for (&t, &hj) in theta.iter().zip(h) {
        linear += hj * (t - cfg.tau * hj);
        l1 += t.abs();
    }
    cfg.slope() * (l1 - linear)
}

/// `Q*(θ | θ_t)` given `risk = L_n(θ)`.
pub fn surrogate_q_star(theta: &[f64], theta_t: &[f64], risk_at_theta: f64, cfg: &PenaltyConfig) -> Result<f64> {
    if theta.len() != theta_t.len() {
        return Err(Error::ParamLength {
            expected: theta_t.len(),
            found: theta.len(),
        });
    }
    let h = h_vector(theta_t, cfg.tau);
    Ok(risk_at_theta + surrogate_penalty(theta, &h, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_norm_examples() {
        assert_eq!(clipped_norm(&[0.0, 0.0, 0.0], 0.5).unwrap(), 0.0);
        assert_eq!(clipped_norm(&[1.0, -2.0], 0.5).unwrap(), 2.0);
        assert!((clipped_norm(&[0.25, 1.0, -0.1], 0.5).unwrap() - 1.7).abs() < 1e-15);
        assert!(clipped_norm(&[1.0], 0.0).is_err());
        assert!(clipped_norm(&[1.0], -1.0).is_err());
    }

    #[test]
    fn h_vector_examples() {
        assert_eq!(h_vector(&[0.6, -0.7, 0.1], 0.5), vec![1.0, -1.0, 0.0]);
        assert_eq!(h_vector(&[0.0, 0.0], 0.5), vec![0.0, 0.0]);
        assert_eq!(h_vector(&[0.5, -0.5], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn objective_examples() {
        let cfg = PenaltyConfig::new(0.1, 0.5).unwrap();
        let q = objective_q(&[0.25, 1.0, -0.1], 0.4, &cfg);
        assert!((q - 0.57).abs() < 1e-15);
        let zero = PenaltyConfig::new(0.0, 0.5).unwrap();
        assert_eq!(objective_q(&[3.0, -1.0], 0.4, &zero), 0.4);
        assert_eq!(objective_q(&[0.0, 0.0], 0.4, &cfg), 0.4);
    }

    #[test]
    fn surrogate_with_zero_anchor_is_l1() {
        let cfg = PenaltyConfig::new(0.2, 0.1).unwrap();
        let theta = [0.3, -0.05, 2.0];
        let qs = surrogate_q_star(&theta, &[0.0; 3], 1.5, &cfg).unwrap();
        assert!((qs - (1.5 + 2.0 * l1_norm(&theta))).abs() < 1e-14);
    }

    #[test]
    fn surrogate_touches_with_negative_anchor() {
        let cfg = PenaltyConfig::new(0.2, 0.1).unwrap();
        let anchor = [-2.0, 0.05, 0.7];
        let q = objective_q(&anchor, 1.0, &cfg);
        assert!((surrogate_q_star(&anchor, &anchor, 1.0, &cfg).unwrap() - q).abs() < 1e-14);
        // at the origin the clipped penalty vanishes; the bound must hold
        assert!(surrogate_q_star(&[0.0; 3], &anchor, 1.0, &cfg).unwrap() >= 1.0);
    }

    #[test]
    fn surrogate_length_mismatch() {
        let cfg = PenaltyConfig::new(0.2, 0.1).unwrap();
        assert!(surrogate_q_star(&[1.0], &[1.0, 2.0], 0.0, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PenaltyConfig::new(-1.0, 0.1).is_err());
        assert!(PenaltyConfig::new(1.0, 0.0).is_err());
        assert!(PenaltyConfig::new(f64::NAN, 0.1).is_err());
    }
}

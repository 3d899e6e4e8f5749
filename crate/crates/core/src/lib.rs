//! Sparse deep networks trained with the clipped L1 penalty.
//!
//! The outer loop majorizes the nonconvex penalty by a convex surrogate at
//! the current iterate; the inner loop runs proximal gradient steps on that
//! surrogate. Simulation generators, a kNN comparator, bound calculators and
//! an experiment harness sit on top.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optimizer;
pub mod penalty;
pub mod rng;
pub mod theory;

pub use data::{DataView, Dataset, DatasetMeta, Task};
pub use error::{Error, Result};
pub use losses::LossKind;
pub use model::{Network, Predictor};
pub use nn::{Activation, MlpSpec, NetworkParams};
pub use optimizer::{FitReport, MonotonePolicy, OptimizerConfig};
pub use penalty::PenaltyConfig;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::TargetFn;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::nn::{Activation, MlpSpec};
use crate::optimizer::{EarlyStop, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentTask {
    RegressionSim,
    ClassificationToy,
    ClassificationCsv,
}

impl ExperimentTask {
    pub fn is_classification(&self) -> bool {
        !matches!(self, ExperimentTask::RegressionSim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sdnn,
    Nsdnn,
    Knn,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Sdnn, Estimator::Nsdnn, Estimator::Knn];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Sdnn => "sdnn",
            Estimator::Nsdnn => "nsdnn",
            Estimator::Knn => "knn",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sdnn" => Ok(Estimator::Sdnn),
            "nsdnn" => Ok(Estimator::Nsdnn),
            "knn" => Ok(Estimator::Knn),
            other => Err(Error::InvalidConfig(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Multipliers applied to `log^5(n)/n` to form the default λ grid.
pub const DEFAULT_LAMBDA_SCALES: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-2];
pub const DEFAULT_TAUS: [f64; 3] = [1e-3, 1e-2, 1e-1];
pub const DEFAULT_KS: [usize; 6] = [1, 3, 5, 10, 20, 50];
pub const DEFAULT_ADAM_STEPS: [usize; 6] = [25, 50, 100, 200, 500, 1000];

/// `log^5(n) / n`.
pub fn lambda_anchor(n: usize) -> f64 {
    let n = n as f64;
    n.ln().powi(5) / n
}

fn default_sdnn() -> OptimizerConfig {
    OptimizerConfig {
        eta: 1e-2,
        k_bar: 10,
        outer_iters: 1000,
        early_stop: Some(EarlyStop::default()),
        ..OptimizerConfig::default()
    }
}

fn default_nsdnn() -> OptimizerConfig {
    OptimizerConfig {
        eta: 1e-3,
        ..OptimizerConfig::default()
    }
}

/// Everything needed to reproduce one experiment; serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: ExperimentTask,
    /// Simulation target for `regression-sim`.
    pub function: TargetFn,
    /// Input dimension for `classification-toy`.
    pub toy_dim: usize,
    pub csv: Option<PathBuf>,
    pub label_column: Option<String>,
    /// Training-set size before the validation split (ignored for CSV input,
    /// where the 7:3 split decides it).
    pub n_train: usize,
    pub n_replicates: usize,
    pub n_test: usize,
    pub estimators: Vec<Estimator>,
    /// Absolute λ values; when absent, `lambda_scales × log^5(n)/n` with `n`
    /// the size of the fitting portion.
    pub lambdas: Option<Vec<f64>>,
    pub lambda_scales: Vec<f64>,
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
    /// Candidate Adam step counts for the unpenalized network.
    pub adam_steps: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Defaults to square loss for regression and logistic for classification.
    pub loss: Option<LossKind>,
    pub sdnn: OptimizerConfig,
    /// `outer_iters` is ignored; `adam_steps` sets the training length.
    pub nsdnn: OptimizerConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Write wall-clock seconds to the records; off gives byte-identical output.
    pub record_timing: bool,
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: ExperimentTask::RegressionSim,
            function: TargetFn::new(1).expect("f1 exists"),
            toy_dim: 5,
            csv: None,
            label_column: None,
            n_train: 200,
            n_replicates: 10,
            n_test: 100_000,
            estimators: Estimator::ALL.to_vec(),
            lambdas: None,
            lambda_scales: DEFAULT_LAMBDA_SCALES.to_vec(),
            taus: DEFAULT_TAUS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            adam_steps: DEFAULT_ADAM_STEPS.to_vec(),
            hidden_widths: vec![100; 5],
            activation: Activation::Relu,
            loss: None,
            sdnn: default_sdnn(),
            nsdnn: default_nsdnn(),
            seed: 0,
            out_dir: None,
            record_timing: true,
            write_traces: false,
        }
    }
}

/// Concrete grids for one fitting portion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grids {
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
    pub adam_steps: Vec<usize>,
}

impl Grids {
    /// `(λ, τ)` pairs in λ-major order.
    pub fn penalty_points(&self) -> Vec<(f64, f64)> {
        self.lambdas
            .iter()
            .flat_map(|&l| self.taus.iter().map(move |&t| (l, t)))
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss.unwrap_or(if self.task.is_classification() {
            LossKind::Logistic
        } else {
            LossKind::Square
        })
    }

    pub fn input_dim(&self, csv_dim: Option<usize>) -> usize {
        match self.task {
            ExperimentTask::RegressionSim => crate::datagen::SIM_DIM,
            ExperimentTask::ClassificationToy => self.toy_dim,
            ExperimentTask::ClassificationCsv => csv_dim.unwrap_or(0),
        }
    }

    pub fn network_spec(&self, input_dim: usize) -> Result<MlpSpec> {
        MlpSpec::new(input_dim, self.hidden_widths.clone(), self.activation)
    }

    pub fn grids(&self, n_fit: usize) -> Grids {
        let lambdas = match &self.lambdas {
            Some(l) => l.clone(),
            None => {
                let anchor = lambda_anchor(n_fit);
                self.lambda_scales.iter().map(|s| s * anchor).collect()
            }
        };
        Grids {
            lambdas,
            taus: self.taus.clone(),
            ks: self.ks.clone(),
            adam_steps: self.adam_steps.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.estimators.is_empty() {
            return bad("no estimators selected".into());
        }
        if self.n_replicates == 0 {
            return bad("n_replicates must be >= 1".into());
        }
        if self.task != ExperimentTask::ClassificationCsv && self.n_train < 10 {
            return bad(format!("n_train must be >= 10, got {}", self.n_train));
        }
        if self.task != ExperimentTask::ClassificationCsv && self.n_test == 0 {
            return bad("n_test must be >= 1".into());
        }
        if self.task == ExperimentTask::ClassificationCsv && (self.csv.is_none() || self.label_column.is_none()) {
            return bad("classification-csv needs an input file and a label column".into());
        }
        if self.task == ExperimentTask::ClassificationToy && self.toy_dim < 2 {
            return bad(format!("toy_dim must be >= 2, got {}", self.toy_dim));
        }
        for est in &self.estimators {
            match est {
                Estimator::Sdnn => {
                    let n_lambda = self.lambdas.as_ref().map_or(self.lambda_scales.len(), Vec::len);
                    if n_lambda == 0 || self.taus.is_empty() {
                        return bad("SDNN needs nonempty lambda and tau grids".into());
                    }
                    let lambdas = self.lambdas.iter().flatten().chain(&self.lambda_scales);
                    if lambdas.clone().any(|l| !(*l >= 0.0 && l.is_finite())) {
                        return bad("lambda values must be finite and >= 0".into());
                    }
                    if self.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                        return bad("tau values must be finite and > 0".into());
                    }
                    self.sdnn.validate()?;
                }
                Estimator::Nsdnn => {
                    if self.adam_steps.is_empty() || self.adam_steps.contains(&0) {
                        return bad("NSDNN needs a nonempty grid of positive step counts".into());
                    }
                    OptimizerConfig {
                        outer_iters: 1,
                        ..self.nsdnn.clone()
                    }
                    .validate()?;
                }
                Estimator::Knn => {
                    if self.ks.is_empty() || self.ks.contains(&0) {
                        return bad("kNN needs a nonempty grid of positive k".into());
                    }
                }
            }
        }
        let dim = self.input_dim(Some(1)).max(1);
        self.network_spec(dim)?;
        Ok(())
    }
}

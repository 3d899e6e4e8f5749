use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::knn_fit;
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::{Network, Predictor};
use crate::nn::{self, MlpSpec};
use crate::optimizer::{self, FitReport, OptimizerConfig};
use crate::penalty::PenaltyConfig;
use crate::rng;

use super::config::{Estimator, Grids};

/// Random 4:1 partition of `0..n`; the validation part has `floor(n/5)` rows.
/// Both index lists come back sorted.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::InvalidConfig(format!("need at least 10 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[0x5B11]));
    let (val, train) = idx.split_at_mut(n / 5);
    train.sort_unstable();
    val.sort_unstable();
    Ok((train.to_vec(), val.to_vec()))
}

pub fn split_validation(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(data.len(), seed)?;
    Ok((data.select(&train), data.select(&val)))
}

/// Index of the smallest finite score; ties go to the earliest entry.
pub fn select_best(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s.filter(|s| s.is_finite()) {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Validation score to minimize: mean squared error for regression and
/// misclassification rate (sign with 0 -> +1) for classification.
pub fn validation_score(predictor: &dyn Predictor, val: &Dataset) -> Result<f64> {
    let pred = predictor.predict_batch(val.inputs.view())?;
    let n = val.len() as f64;
    Ok(match val.task {
        Task::Regression => {
            pred.iter()
                .zip(&val.targets)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                / n
        }
        Task::Classification => 1.0 - accuracy(pred.iter().copied(), val.targets.iter().copied()),
    })
}

/// Share of predictions whose sign (0 counted as +1) matches the label.
pub fn accuracy(pred: impl Iterator<Item = f64>, labels: impl Iterator<Item = f64>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, y) in pred.zip(labels) {
        let s = if p >= 0.0 { 1.0 } else { -1.0 };
        hit += (s == y) as usize;
        total += 1;
    }
    hit as f64 / total.max(1) as f64
}

/// Hyperparameters picked by validation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Choice {
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    /// Neighbour count for kNN, Adam step count for the unpenalized network.
    pub k: Option<usize>,
}

/// Shared settings for fitting on one replicate.
#[derive(Debug, Clone)]
pub struct FitSettings<'a> {
    pub spec: &'a MlpSpec,
    pub loss: LossKind,
    pub sdnn: &'a OptimizerConfig,
    pub nsdnn: &'a OptimizerConfig,
    /// Seed for network initialization and mini-batch order.
    pub seed: u64,
}

pub struct Tuned {
    pub estimator: Estimator,
    pub model: Box<dyn Predictor>,
    pub choice: Choice,
    pub validation_score: f64,
    /// Validation score of every grid point in grid order; `None` for failures.
    pub scores: Vec<Option<f64>>,
    /// Fraction of nonzero parameters, for the sparse network only.
    pub sparsity: Option<f64>,
    pub report: Option<FitReport>,
}

fn failed(estimator: Estimator, errors: &[(String, Error)]) -> Error {
    let causes: Vec<String> = errors.iter().map(|(at, e)| format!("{at}: {e}")).collect();
    Error::AllGridPointsFailed(format!("{estimator}: {}", causes.join("; ")))
}

/// Fits one model per grid point on `train`, scores each on `val` and keeps
/// the best. The returned model is the one trained on `train`; no refit.
pub fn tune_and_fit(
    train: &Dataset,
    val: &Dataset,
    estimator: Estimator,
    grids: &Grids,
    fit: &FitSettings<'_>,
) -> Result<Tuned> {
    match estimator {
        Estimator::Sdnn => tune_sdnn(train, val, grids, fit),
        Estimator::Nsdnn => tune_nsdnn(train, val, grids, fit),
        Estimator::Knn => tune_knn(train, val, grids),
    }
}

fn tune_sdnn(train: &Dataset, val: &Dataset, grids: &Grids, fit: &FitSettings<'_>) -> Result<Tuned> {
    let points = grids.penalty_points();
    if points.is_empty() {
        return Err(Error::InvalidConfig("empty SDNN grid".into()));
    }
    let opt = OptimizerConfig {
        seed: fit.seed,
        ..fit.sdnn.clone()
    };
    let outcomes: Vec<Result<(FitReport, f64)>> = points
        .par_iter()
        .map(|&(lambda, tau)| {
            let penalty = PenaltyConfig::new(lambda, tau)?;
            let report = optimizer::fit(train.view(), fit.spec, fit.loss, &penalty, &opt)?;
            let net = Network {
                spec: fit.spec.clone(),
                theta: report.theta.clone(),
            };
            let score = validation_score(&net, val)?;
            Ok((report, score))
        })
        .collect();
    let scores: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().ok().map(|(_, s)| *s)).collect();
    let Some(best) = select_best(&scores) else {
        let errors: Vec<(String, Error)> = points
            .iter()
            .zip(outcomes)
            .map(|((l, t), o)| {
                let e = match o {
                    Err(e) => e,
                    Ok((_, s)) => Error::InvalidConfig(format!("non-finite validation score {s}")),
                };
                (format!("lambda={l:e} tau={t:e}"), e)
            })
            .collect();
        return Err(failed(Estimator::Sdnn, &errors));
    };
    let (lambda, tau) = points[best];
    let (report, score) = outcomes.into_iter().nth(best).expect("index in range")?;
    Ok(Tuned {
        estimator: Estimator::Sdnn,
        model: Box::new(Network {
            spec: fit.spec.clone(),
            theta: report.theta.clone(),
        }),
        choice: Choice {
            lambda: Some(lambda),
            tau: Some(tau),
            k: None,
        },
        validation_score: score,
        scores,
        sparsity: Some(report.sparsity()),
        report: Some(report),
    })
}

/// One Adam run to the largest step count, scoring a checkpoint at every
/// grid value; identical to separate runs of each length.
fn tune_nsdnn(train: &Dataset, val: &Dataset, grids: &Grids, fit: &FitSettings<'_>) -> Result<Tuned> {
    let Some(&max_steps) = grids.adam_steps.iter().max() else {
        return Err(Error::InvalidConfig("empty NSDNN grid".into()));
    };
    let opt = OptimizerConfig {
        seed: fit.seed,
        outer_iters: max_steps,
        ..fit.nsdnn.clone()
    };
    let mut checkpoints: Vec<Option<(f64, Vec<f64>)>> = vec![None; grids.adam_steps.len()];
    let mut first_error: Option<Error> = None;
    let theta0 = nn::init_flat(fit.spec, opt.seed);
    let run = optimizer::adam_fit_from(theta0, train.view(), fit.spec, fit.loss, &opt, &mut |step, theta| {
        for (slot, &s) in checkpoints.iter_mut().zip(&grids.adam_steps) {
            if s == step {
                let net = Network {
                    spec: fit.spec.clone(),
                    theta: theta.to_vec(),
                };
                match validation_score(&net, val) {
                    Ok(score) => *slot = Some((score, net.theta)),
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
        }
    });
    let report = match run {
        Ok(r) => Some(r),
        Err(e) if checkpoints.iter().all(Option::is_none) => {
            return Err(failed(Estimator::Nsdnn, &[("adam".into(), e)]));
        }
        // checkpoints scored before the failure remain usable
        Err(_) => None,
    };
    let scores: Vec<Option<f64>> = checkpoints.iter().map(|c| c.as_ref().map(|(s, _)| *s)).collect();
    let Some(best) = select_best(&scores) else {
        let e = first_error.unwrap_or_else(|| Error::InvalidConfig("no finite validation score".into()));
        return Err(failed(Estimator::Nsdnn, &[("adam".into(), e)]));
    };
    let (score, theta) = checkpoints[best].take().expect("scored checkpoint");
    let report = report.map(|mut r| {
        r.trace.truncate(grids.adam_steps[best]);
        r
    });
    Ok(Tuned {
        estimator: Estimator::Nsdnn,
        model: Box::new(Network {
            spec: fit.spec.clone(),
            theta,
        }),
        choice: Choice {
            lambda: None,
            tau: None,
            k: Some(grids.adam_steps[best]),
        },
        validation_score: score,
        scores,
        sparsity: None,
        report,
    })
}

fn tune_knn(train: &Dataset, val: &Dataset, grids: &Grids) -> Result<Tuned> {
    if grids.ks.is_empty() {
        return Err(Error::InvalidConfig("empty kNN grid".into()));
    }
    let outcomes: Vec<Result<(crate::baselines::KnnModel, f64)>> = grids
        .ks
        .par_iter()
        .map(|&k| {
            let model = knn_fit(train.view(), k, train.task)?;
            let score = validation_score(&model, val)?;
            Ok((model, score))
        })
        .collect();
    let scores: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().ok().map(|(_, s)| *s)).collect();
    let Some(best) = select_best(&scores) else {
        let errors: Vec<(String, Error)> = grids
            .ks
            .iter()
            .zip(outcomes)
            .filter_map(|(k, o)| o.err().map(|e| (format!("k={k}"), e)))
            .collect();
        return Err(failed(Estimator::Knn, &errors));
    };
    let (model, score) = outcomes.into_iter().nth(best).expect("index in range")?;
    Ok(Tuned {
        estimator: Estimator::Knn,
        choice: Choice {
            lambda: None,
            tau: None,
            k: Some(model.k),
        },
        model: Box::new(model),
        validation_score: score,
        scores,
        sparsity: None,
        report: None,
    })
}

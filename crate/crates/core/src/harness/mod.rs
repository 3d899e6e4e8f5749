//! Experiment orchestration: per-replicate data, validation tuning, test
//! evaluation and result files.

mod config;
mod ingest;
mod summary;
mod tune;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::datagen;
use crate::error::{Error, Result};
use crate::optimizer::TRACE_HEADER;
use crate::rng;

pub use config::{
    lambda_anchor, Estimator, ExperimentConfig, ExperimentTask, Grids, DEFAULT_ADAM_STEPS, DEFAULT_KS,
    DEFAULT_LAMBDA_SCALES, DEFAULT_TAUS,
};
pub use ingest::ingest_csv;
pub use summary::{summarize, EstimatorSummary, Summary};
pub use tune::{
    accuracy, select_best, split_indices, split_validation, tune_and_fit, validation_score, Choice, FitSettings, Tuned,
};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const THREADS_ENV: &str = "CLIPNET_THREADS";

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub replicate: usize,
    pub estimator: Estimator,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    /// Neighbour count for kNN, Adam step count for the unpenalized network.
    pub k: Option<usize>,
    /// Empirical L2 error for regression, test accuracy for classification.
    pub metric: f64,
    pub sparsity: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub replicate: usize,
    pub estimator: Estimator,
    pub lines: Vec<String>,
}

impl TraceFile {
    pub fn file_name(&self) -> String {
        format!("trace_{}_{}.csv", self.replicate, self.estimator)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
    pub traces: Vec<TraceFile>,
}

/// Row indices of one replicate, in the numbering of the source data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// 7:3 train/test resplit of `n` rows followed by the 4:1 validation split
/// of the training part.
pub fn csv_partition(n: usize, replicate_seed: u64) -> Result<Partition> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(replicate_seed, &[0x7030]));
    let n_test = n * 3 / 10;
    let (test, fit) = idx.split_at(n_test);
    let mut fit = fit.to_vec();
    fit.sort_unstable();
    let mut test = test.to_vec();
    test.sort_unstable();
    let (train_pos, val_pos) = split_indices(fit.len(), rng::derive_seed(replicate_seed, &[2]))?;
    Ok(Partition {
        train: train_pos.iter().map(|&i| fit[i]).collect(),
        validation: val_pos.iter().map(|&i| fit[i]).collect(),
        test,
    })
}

pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    rng::derive_seed(base, &[replicate as u64])
}

enum Source {
    Simulated,
    Csv(Dataset),
}

enum TestSet {
    Regression { function: usize, n: usize, seed: u64 },
    Labelled(Dataset),
}

struct ReplicateData {
    train: Dataset,
    validation: Dataset,
    test: TestSet,
}

fn replicate_data(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<ReplicateData> {
    let data_seed = rng::derive_seed(seed, &[1]);
    let split_seed = rng::derive_seed(seed, &[2]);
    let test_seed = rng::derive_seed(seed, &[3]);
    match (cfg.task, source) {
        (ExperimentTask::RegressionSim, _) => {
            let m = cfg.function.index();
            let full = datagen::gen_regression(m, cfg.n_train, data_seed)?;
            let (train, validation) = split_validation(&full, split_seed)?;
            Ok(ReplicateData {
                train,
                validation,
                test: TestSet::Regression {
                    function: m,
                    n: cfg.n_test,
                    seed: test_seed,
                },
            })
        }
        (ExperimentTask::ClassificationToy, _) => {
            let full = datagen::gen_classification_toy(cfg.toy_dim, cfg.n_train, data_seed)?;
            let (train, validation) = split_validation(&full, split_seed)?;
            let test = datagen::gen_classification_toy(cfg.toy_dim, cfg.n_test, test_seed)?;
            Ok(ReplicateData {
                train,
                validation,
                test: TestSet::Labelled(test),
            })
        }
        (ExperimentTask::ClassificationCsv, Source::Csv(data)) => {
            let part = csv_partition(data.len(), seed)?;
            Ok(ReplicateData {
                train: data.select(&part.train),
                validation: data.select(&part.validation),
                test: TestSet::Labelled(data.select(&part.test)),
            })
        }
        (ExperimentTask::ClassificationCsv, Source::Simulated) => {
            Err(Error::InvalidConfig("classification-csv needs loaded data".into()))
        }
    }
}

fn test_metric(tuned: &Tuned, test: &TestSet) -> Result<f64> {
    match test {
        TestSet::Regression { function, n, seed } => {
            datagen::empirical_l2_error(tuned.model.as_ref(), *function, *n, *seed)
        }
        TestSet::Labelled(data) => {
            let pred = tuned.model.predict_batch(data.inputs.view())?;
            Ok(accuracy(pred.iter().copied(), data.targets.iter().copied()))
        }
    }
}

type ReplicateRow = (ResultRecord, Option<TraceFile>);

fn run_replicate(cfg: &ExperimentConfig, source: &Source, replicate: usize) -> Result<Vec<ReplicateRow>> {
    let seed = replicate_seed(cfg.seed, replicate);
    let data = replicate_data(cfg, source, seed)?;
    let spec = cfg.network_spec(data.train.dim())?;
    let grids = cfg.grids(data.train.len());
    let fit = FitSettings {
        spec: &spec,
        loss: cfg.loss_kind(),
        sdnn: &cfg.sdnn,
        nsdnn: &cfg.nsdnn,
        seed: rng::derive_seed(seed, &[4]),
    };
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let wrap = |e: Error| Error::Replicate {
            replicate,
            estimator: estimator.to_string(),
            source: Box::new(e),
        };
        let start = Instant::now();
        let tuned = tune_and_fit(&data.train, &data.validation, estimator, &grids, &fit).map_err(wrap)?;
        let seconds = start.elapsed().as_secs_f64();
        let metric = test_metric(&tuned, &data.test).map_err(wrap)?;
        if !metric.is_finite() {
            return Err(wrap(Error::InvalidConfig(format!("non-finite test metric {metric}"))));
        }
        let trace = match (&tuned.report, cfg.write_traces) {
            (Some(report), true) => Some(TraceFile {
                replicate,
                estimator,
                lines: report.trace.iter().map(|r| r.to_line()).collect(),
            }),
            _ => None,
        };
        out.push((
            ResultRecord {
                replicate,
                estimator,
                lambda: tuned.choice.lambda,
                tau: tuned.choice.tau,
                k: tuned.choice.k,
                metric,
                sparsity: tuned.sparsity,
                seconds: if cfg.record_timing { seconds } else { 0.0 },
            },
            trace,
        ));
    }
    Ok(out)
}

/// Worker pool sized by `CLIPNET_THREADS` when set, else rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs every replicate, then writes `records.csv`, `summary.json` and any
/// traces into `cfg.out_dir` when it is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let source = match cfg.task {
        ExperimentTask::ClassificationCsv => {
            let path = cfg.csv.as_ref().expect("validated");
            let label = cfg.label_column.as_ref().expect("validated");
            Source::Csv(ingest_csv(path, label, Task::Classification)?)
        }
        _ => Source::Simulated,
    };
    let pool = thread_pool()?;
    let per_replicate: Vec<Result<Vec<ReplicateRow>>> = pool.install(|| {
        (0..cfg.n_replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &source, r))
            .collect()
    });

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for rep in per_replicate {
        for (record, trace) in rep? {
            records.push(record);
            traces.extend(trace);
        }
    }
    let summary = summarize(&records, cfg.task.is_classification());
    let output = ExperimentOutput {
        records,
        summary,
        traces,
    };
    if let Some(dir) = &cfg.out_dir {
        write_output(&output, dir)?;
    }
    Ok(output)
}

pub fn write_records<W: Write>(records: &[ResultRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record([
            "replicate",
            "estimator",
            "lambda",
            "tau",
            "k",
            "metric",
            "sparsity",
            "seconds",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_output(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records(&output.records, fs::File::create(dir.join(RECORDS_FILE))?)?;
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&output.summary)? + "\n",
    )?;
    for t in &output.traces {
        let mut text = String::from(TRACE_HEADER);
        text.push('\n');
        for line in &t.lines {
            text.push_str(line);
            text.push('\n');
        }
        fs::write(dir.join(t.file_name()), text)?;
    }
    Ok(())
}

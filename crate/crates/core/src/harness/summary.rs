use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ResultRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single record.
    pub sd: f64,
    pub median: f64,
    pub sparsity_mean: Option<f64>,
    pub sparsity_sd: Option<f64>,
    pub sparsity_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `"l2"` or `"accuracy"`.
    pub metric: String,
    pub estimators: BTreeMap<String, EstimatorSummary>,
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(records: &[ResultRecord], classification: bool) -> Summary {
    let mut groups: BTreeMap<String, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.estimator.to_string()).or_default().push(r);
    }
    let estimators = groups
        .into_iter()
        .map(|(name, rs)| {
            let metrics: Vec<f64> = rs.iter().map(|r| r.metric).collect();
            let (mean, sd) = mean_sd(&metrics);
            let sp: Vec<f64> = rs.iter().filter_map(|r| r.sparsity).collect();
            let (sparsity_mean, sparsity_sd, sparsity_median) = if sp.is_empty() {
                (None, None, None)
            } else {
                let (m, s) = mean_sd(&sp);
                (Some(m), Some(s), Some(median(&sp)))
            };
            (
                name,
                EstimatorSummary {
                    count: rs.len(),
                    mean,
                    sd,
                    median: median(&metrics),
                    sparsity_mean,
                    sparsity_sd,
                    sparsity_median,
                },
            )
        })
        .collect();
    Summary {
        metric: if classification { "accuracy" } else { "l2" }.to_string(),
        estimators,
    }
}

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{Dataset, DatasetMeta, Task};
use crate::error::{Error, Result};

const MAX_LISTED_ROWS: usize = 20;

fn ingest_error(path: &Path, message: String) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        message,
    }
}

fn row_list(rows: &[usize]) -> String {
    let shown: Vec<String> = rows.iter().take(MAX_LISTED_ROWS).map(|r| r.to_string()).collect();
    let more = rows.len().saturating_sub(MAX_LISTED_ROWS);
    if more > 0 {
        format!("{} and {more} more", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Reads a headed CSV file. Features are min-max scaled per column to
/// `[0,1]` (constant columns become 0.5). For classification the two label
/// values map to -1 and +1 in lexicographic order; for regression the label
/// column must be numeric. Row numbers in errors count data rows from 1.
pub fn ingest_csv(path: &Path, label_column: &str, task: Task) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| ingest_error(path, format!("no column named {label_column:?}")))?;
    let feature_names: Vec<&str> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h)
        .collect();
    if feature_names.is_empty() {
        return Err(ingest_error(path, "no feature columns".into()));
    }

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut missing = Vec::new();
    let mut non_numeric = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let mut values = Vec::with_capacity(feature_names.len());
        let mut row_missing = false;
        let mut row_bad = false;
        for (i, field) in record.iter().enumerate() {
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                row_missing = true;
                continue;
            }
            if i == label_idx {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => row_bad = true,
            }
        }
        if row_missing {
            missing.push(row);
        } else if row_bad {
            non_numeric.push(row);
        } else {
            features.push(values);
            raw_labels.push(record[label_idx].to_string());
        }
    }
    if !missing.is_empty() {
        return Err(ingest_error(
            path,
            format!("missing values in rows {}", row_list(&missing)),
        ));
    }
    if !non_numeric.is_empty() {
        return Err(ingest_error(
            path,
            format!("non-numeric features in rows {}", row_list(&non_numeric)),
        ));
    }
    if features.is_empty() {
        return Err(Error::EmptyData);
    }

    let targets: Array1<f64> = match task {
        Task::Classification => {
            let classes: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
            if classes.len() != 2 {
                return Err(ingest_error(
                    path,
                    format!(
                        "classification needs exactly 2 label values, found {}: {:?}",
                        classes.len(),
                        classes
                    ),
                ));
            }
            let negative = *classes.iter().next().expect("two classes");
            raw_labels
                .iter()
                .map(|l| if l == negative { -1.0 } else { 1.0 })
                .collect()
        }
        Task::Regression => {
            let mut bad = Vec::new();
            let values: Vec<f64> = raw_labels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    l.parse::<f64>().unwrap_or_else(|_| {
                        bad.push(i + 1);
                        f64::NAN
                    })
                })
                .collect();
            if !bad.is_empty() {
                return Err(ingest_error(
                    path,
                    format!("non-numeric labels in rows {}", row_list(&bad)),
                ));
            }
            Array1::from(values)
        }
    };

    let n = features.len();
    let d = feature_names.len();
    let mut inputs = Array2::from_shape_fn((n, d), |(i, j)| features[i][j]);
    for mut col in inputs.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            col.mapv_inplace(|v| (v - lo) / (hi - lo));
        } else {
            col.fill(0.5);
        }
    }

    Dataset::new(
        inputs,
        targets,
        task,
        DatasetMeta {
            generator: format!("csv:{}", path.display()),
            seed: None,
            c_m: None,
            n,
            d,
        },
    )
}

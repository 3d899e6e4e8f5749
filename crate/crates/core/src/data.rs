//! In-memory datasets and their CSV/JSON serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

/// Provenance of a dataset. Written as the JSON sidecar next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    /// Signal constant `c_m` for calibrated regression generators.
    pub c_m: Option<f64>,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub task: Task,
    pub meta: DatasetMeta,
}

/// Borrowed rows of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView1<'a, f64>,
}

impl<'a> DataView<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, targets: ArrayView1<'a, f64>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: format!("{} targets", inputs.nrows()),
                found: format!("{} targets", targets.len()),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, task: Task, meta: DatasetMeta) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: format!("{} targets", inputs.nrows()),
                found: format!("{} targets", targets.len()),
            });
        }
        if task == Task::Classification {
            if let Some(&bad) = targets.iter().find(|&&y| y != 1.0 && y != -1.0) {
                return Err(Error::InvalidLabel(bad));
            }
        }
        Ok(Self {
            inputs,
            targets,
            task,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn view(&self) -> DataView<'_> {
        DataView {
            inputs: self.inputs.view(),
            targets: self.targets.view(),
        }
    }

    /// Copy of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let inputs = self.inputs.select(Axis(0), rows);
        let targets = self.targets.select(Axis(0), rows);
        let mut meta = self.meta.clone();
        meta.n = rows.len();
        Dataset {
            inputs,
            targets,
            task: self.task,
            meta,
        }
    }

    /// Write `x1,...,xd,y` CSV plus a `<stem>.json` metadata sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.inputs.rows().into_iter().zip(self.targets.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;

        let sidecar = path.with_extension("json");
        let mut f = BufWriter::new(File::create(sidecar)?);
        serde_json::to_writer_pretty(&mut f, &self.meta)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn meta(n: usize, d: usize) -> DatasetMeta {
        DatasetMeta {
            generator: "test".into(),
            seed: None,
            c_m: None,
            n,
            d,
        }
    }

    #[test]
    fn classification_labels_checked() {
        let x = array![[0.0], [1.0]];
        let err = Dataset::new(x, array![1.0, 0.0], Task::Classification, meta(2, 1));
        assert!(matches!(err, Err(Error::InvalidLabel(v)) if v == 0.0));
    }

    #[test]
    fn select_keeps_order() {
        let x = array![[0.0], [1.0], [2.0]];
        let ds = Dataset::new(x, array![10.0, 11.0, 12.0], Task::Regression, meta(3, 1)).unwrap();
        let sub = ds.select(&[2, 0]);
        assert_eq!(sub.targets, array![12.0, 10.0]);
        assert_eq!(sub.meta.n, 2);
    }

    #[test]
    fn csv_round_trip_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = Dataset::new(array![[0.25, 0.5]], array![1.5], Task::Regression, meta(1, 2)).unwrap();
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x1,x2,y\n0.25,0.5,1.5\n");
        let side: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
        assert_eq!(side, ds.meta);
    }
}

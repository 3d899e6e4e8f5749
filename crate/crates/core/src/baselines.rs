//! Exact k-nearest-neighbour comparator.

use ndarray::{Array1, Array2, ArrayView2};

use crate::data::{DataView, Task};
use crate::error::{Error, Result};
use crate::model::Predictor;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub task: Task,
    inputs: Array2<f64>,
    targets: Array1<f64>,
}

pub fn knn_fit(data: DataView<'_>, k: usize, task: Task) -> Result<KnnModel> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if k == 0 || k > data.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} outside 1..={} for this training set",
            data.len()
        )));
    }
    Ok(KnnModel {
        k,
        task,
        inputs: data.inputs.to_owned(),
        targets: data.targets.to_owned(),
    })
}

impl KnnModel {
    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances go to the lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .inputs
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d2 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(by);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Mean neighbour target, or for classification the sign of the mean
    /// label with ties going to +1.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let idx = self.neighbors(x);
        let mean = idx.iter().map(|&i| self.targets[i]).sum::<f64>() / idx.len() as f64;
        match self.task {
            Task::Regression => mean,
            Task::Classification => {
                if mean >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

pub fn knn_predict(model: &KnnModel, x: &[f64]) -> f64 {
    model.predict(x)
}

impl Predictor for KnnModel {
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.inputs.ncols() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: format!("{} input columns", self.inputs.ncols()),
                found: format!("{} input columns", x.ncols()),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict(&r.to_vec())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k_range_checked() {
        let x = array![[0.0], [1.0]];
        let y = array![1.0, 2.0];
        let v = DataView::new(x.view(), y.view()).unwrap();
        assert!(knn_fit(v, 0, Task::Regression).is_err());
        assert!(knn_fit(v, 3, Task::Regression).is_err());
        assert!(knn_fit(v, 2, Task::Regression).is_ok());
    }

    #[test]
    fn single_point_and_exact_hit() {
        let x = array![[0.2, 0.3]];
        let y = array![4.5];
        let m = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 1, Task::Regression).unwrap();
        assert_eq!(m.predict(&[0.9, 0.9]), 4.5);

        let x = array![[0.0, 0.0], [1.0, 1.0], [0.5, 0.2]];
        let y = array![1.0, 2.0, 3.0];
        let m = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 1, Task::Regression).unwrap();
        assert_eq!(m.predict(&[0.5, 0.2]), 3.0);
    }

    #[test]
    fn equidistant_mean_and_ties() {
        let x = array![[0.0], [2.0], [1.0]];
        let y = array![0.0, 2.0, 10.0];
        let v = DataView::new(x.view(), y.view()).unwrap();
        let m = knn_fit(v, 2, Task::Regression).unwrap();
        // x = 0.5 -> nearest 0.0 (d .5) and 1.0 (d .5): tie kept by index
        assert_eq!(m.neighbors(&[0.5]), vec![0, 2]);
        // query at 1.0 with row 2 removed: 0 and 2 are equidistant
        let x = array![[0.0], [2.0]];
        let y = array![0.0, 2.0];
        let m = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 2, Task::Regression).unwrap();
        assert_eq!(m.predict(&[1.0]), 1.0);
        let m1 = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 1, Task::Regression).unwrap();
        assert_eq!(m1.neighbors(&[1.0]), vec![0]);
    }

    #[test]
    fn k_equals_n_is_constant() {
        let x = array![[0.0], [0.4], [1.0]];
        let y = array![1.0, -1.0, 1.0];
        let v = DataView::new(x.view(), y.view()).unwrap();
        let reg = knn_fit(v, 3, Task::Regression).unwrap();
        let cls = knn_fit(v, 3, Task::Classification).unwrap();
        for q in [0.0, 0.3, 0.99, 5.0] {
            assert!((reg.predict(&[q]) - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(cls.predict(&[q]), 1.0);
        }
    }

    #[test]
    fn classification_tie_goes_positive() {
        let x = array![[0.0], [1.0]];
        let y = array![-1.0, 1.0];
        let m = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 2, Task::Classification).unwrap();
        assert_eq!(m.predict(&[0.1]), 1.0);
    }
}

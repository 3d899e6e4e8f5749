use clipnet::baselines::{knn_fit, knn_predict};
use clipnet::data::{DataView, Task};
use clipnet::model::Predictor;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// Full sort by (distance, index).
fn brute_force(x: &Array2<f64>, y: &Array1<f64>, q: &[f64], k: usize, task: Task) -> f64 {
    let mut d: Vec<(f64, usize)> = x
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mean = d[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64;
    match task {
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

fn grid_value() -> impl Strategy<Value = f64> {
    // coarse values make exact distance ties common
    (0u8..5).prop_map(|v| v as f64 / 4.0)
}

proptest! {
    #[test]
    fn matches_brute_force(
        rows in prop::collection::vec(prop::collection::vec(grid_value(), 2), 1..30),
        labels in prop::collection::vec(prop::bool::ANY, 30),
        query in prop::collection::vec(grid_value(), 2),
        k_frac in 0.0..1.0f64,
        classify in prop::bool::ANY,
    ) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| rows[i][j]);
        let task = if classify { Task::Classification } else { Task::Regression };
        let y = Array1::from_shape_fn(n, |i| if labels[i] { 1.0 } else { -1.0 } * if classify { 1.0 } else { (i + 1) as f64 });
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let model = knn_fit(DataView::new(x.view(), y.view()).unwrap(), k, task).unwrap();
        prop_assert_eq!(knn_predict(&model, &query), brute_force(&x, &y, &query, k, task));
    }
}

#[test]
fn batch_prediction_agrees_and_checks_width() {
    let x = ndarray::array![[0.0, 0.0], [1.0, 1.0], [0.2, 0.9]];
    let y = ndarray::array![1.0, -1.0, -1.0];
    let model = knn_fit(DataView::new(x.view(), y.view()).unwrap(), 1, Task::Classification).unwrap();
    let q = ndarray::array![[0.1, 0.1], [0.9, 0.8]];
    assert_eq!(model.predict_batch(q.view()).unwrap().to_vec(), vec![1.0, -1.0]);
    assert!(model.predict_batch(ndarray::array![[0.1]].view()).is_err());
}

#![allow(dead_code)]

use flowevade_core::flows::FlowDataset;
use ndarray::{Array2, ArrayView2};

/// Per-class mean vectors of a dataset.
pub fn centroids(train: &FlowDataset) -> Array2<f64> {
    let k = train.label_set.len();
    let n = train.n_features();
    let mut centroid = Array2::<f64>::zeros((k, n));
    let counts = train.class_counts();
    for (i, &c) in train.y.iter().enumerate() {
        for j in 0..n {
            centroid[[c, j]] += train.x[[i, j]] / counts[c] as f64;
        }
    }
    centroid
}

pub fn nearest_centroid_predict(centroid: &Array2<f64>, x: ArrayView2<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            (0..centroid.nrows())
                .map(|c| {
                    let d: f64 = (0..x.ncols()).map(|j| (x[[i, j]] - centroid[[c, j]]).powi(2)).sum();
                    (c, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        })
        .collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

pub fn nearest_centroid_accuracy(train: &FlowDataset, test: &FlowDataset) -> f64 {
    accuracy(&nearest_centroid_predict(&centroids(train), test.x.view()), &test.y)
}

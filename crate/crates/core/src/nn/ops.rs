use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(values: ArrayView2<f64>) -> Vec<usize> {
    values
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Mean cross-entropy of `logits` against integer targets, plus its
/// gradient with respect to the logits and the per-row losses.
pub fn cross_entropy_with_grad(
    logits: ArrayView2<f64>,
    targets: &[usize],
) -> (f64, Array1<f64>, Array2<f64>) {
    let n = logits.nrows();
    debug_assert_eq!(n, targets.len());
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut per_row = Array1::zeros(n);
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        per_row[i] = log_sum - row[targets[i]];
        for (j, &v) in row.iter().enumerate() {
            grad[[i, j]] = (v - log_sum).exp();
        }
        grad[[i, targets[i]]] -= 1.0;
    }
    if n > 0 {
        grad.mapv_inplace(|g| g / n as f64);
    }
    let mean = if n == 0 { 0.0 } else { per_row.sum() / n as f64 };
    (mean, per_row, grad)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(z))` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_rows(Array2::<f64>::zeros((2, 4)).view());
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let v = array![[0.5, 0.5], [0.1, 0.9], [1.0, 1.0]];
        assert_eq!(argmax_rows(v.view()), vec![0, 1, 0]);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_difference() {
        let logits = array![[0.3, -1.2, 2.0], [0.0, 0.5, -0.5]];
        let targets = [2, 0];
        let (_, _, grad) = cross_entropy_with_grad(logits.view(), &targets);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut up = logits.clone();
                up[[i, j]] += h;
                let mut dn = logits.clone();
                dn[[i, j]] -= h;
                let fd = (cross_entropy_with_grad(up.view(), &targets).0
                    - cross_entropy_with_grad(dn.view(), &targets).0)
                    / (2.0 * h);
                assert!((fd - grad[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }
}

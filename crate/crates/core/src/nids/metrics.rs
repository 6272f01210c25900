use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::LabelSet;

/// One-vs-rest counts and scores for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some score had a zero denominator and was set to 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy plus macro-averaged precision, recall and F1.
pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], labels: &LabelSet) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let k = labels.len();
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(Error::UnknownLabel(bad.to_string()));
    }
    let n = y_true.len();
    let mut tp = vec![0usize; k];
    let mut pred_count = vec![0usize; k];
    let mut true_count = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        true_count[t] += 1;
        pred_count[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let fp = pred_count[c] - tp[c];
            let fn_ = true_count[c] - tp[c];
            let p = ratio(tp[c], tp[c] + fp);
            let r = ratio(tp[c], tp[c] + fn_);
            let f1 = match (p, r) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassMetrics {
                class: labels.name(c).to_string(),
                tp: tp[c],
                fp,
                fn_,
                tn: n - tp[c] - fp - fn_,
                precision: p.unwrap_or(0.0),
                recall: r.unwrap_or(0.0),
                f1: f1.unwrap_or(0.0),
                undefined: p.is_none() || r.is_none(),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    Ok(MetricsReport {
        accuracy: ratio(tp.iter().sum(), n).unwrap_or(0.0),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    })
}

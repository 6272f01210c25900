use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;

/// Per-feature minimum and maximum from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalingStats {
    /// Column-wise min/max of `x`.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let (mut min, mut max) = (Vec::new(), Vec::new());
        for col in x.axis_iter(Axis(1)) {
            min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Self { min, max }
    }

    /// Like [`ScalingStats::fit`] but pins one-hot columns to `[0, 1]` so
    /// indicator values pass through unchanged.
    pub fn fit_for_schema(x: ArrayView2<f64>, schema: &FeatureSchema) -> Self {
        let mut stats = Self::fit(x);
        for c in 0..schema.n_encoded() {
            if schema.is_one_hot(c) {
                stats.min[c] = 0.0;
                stats.max[c] = 1.0;
            }
        }
        stats
    }

    /// Stats that leave data already in `[0, 1]` untouched.
    pub fn identity(width: usize) -> Self {
        Self {
            min: vec![0.0; width],
            max: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// `(v - min) / (max - min)` per column; constant columns map to 0.
    /// When `clamp` is set the result is clipped into `[0, 1]`.
    pub fn apply(&self, x: ArrayView2<f64>, clamp: bool) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            col.mapv_inplace(|v| {
                if !(span > 0.0) {
                    return 0.0;
                }
                let s = (v - lo) / span;
                if clamp {
                    s.clamp(0.0, 1.0)
                } else {
                    s
                }
            });
        }
        out
    }
}

/// Min-max scale `x_raw`. Fresh stats are fitted when `stats` is `None`;
/// given stats (from a train split) are applied with clamping.
pub fn minmax_scale(x_raw: ArrayView2<f64>, stats: Option<&ScalingStats>) -> (Array2<f64>, ScalingStats) {
    match stats {
        Some(s) => (s.apply(x_raw, true), s.clone()),
        None => {
            let s = ScalingStats::fit(x_raw);
            (s.apply(x_raw, false), s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn fresh_column() {
        let (s, _) = minmax_scale(array![[2.0], [4.0], [6.0]].view(), None);
        assert_eq!(s.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (s, stats) = minmax_scale(array![[5.0], [5.0]].view(), None);
        assert_eq!(s.column(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(stats.min, vec![5.0]);
    }

    #[test]
    fn test_value_clamped_with_train_stats() {
        let stats = ScalingStats {
            min: vec![0.0],
            max: vec![8.0],
        };
        let (s, _) = minmax_scale(array![[10.0], [-1.0], [4.0]].view(), Some(&stats));
        assert_eq!(s.column(0).to_vec(), vec![1.0, 0.0, 0.5]);
    }

    proptest! {
        #[test]
        fn fresh_stats_span_unit_interval(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let x = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j]);
            let (s, stats) = minmax_scale(x.view(), None);
            for j in 0..3 {
                let col = s.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if stats.max[j] > stats.min[j] {
                    prop_assert!(lo.abs() < 1e-12);
                    prop_assert!((hi - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(lo == 0.0 && hi == 0.0);
                }
            }
            // idempotent when re-applied with the same stats
            let once = stats.apply(x.view(), true);
            let twice = stats.apply(x.view(), true);
            prop_assert_eq!(once, twice);
        }
    }
}

//! Hand-written classical classifiers: CART tree, one-vs-rest linear SVM
//! and brute-force KNN. Hyperparameters come from [`ClassicalConfig`].

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax_rows;

/// The shipped `configs/classical.toml`.
pub const SHIPPED_CONFIG: &str = include_str!("../../../../configs/classical.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub calibration_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    pub seed: u64,
    pub decision_tree: TreeConfig,
    pub svm: SvmConfig,
    pub knn: KnnConfig,
    pub logistic_regression: LogisticConfig,
}

impl ClassicalConfig {
    pub fn shipped() -> Self {
        Self::from_toml(SHIPPED_CONFIG).expect("shipped classical config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.decision_tree.max_depth == 0 || self.decision_tree.min_samples_leaf == 0 {
            return Err(Error::config("decision_tree depth and leaf size must be positive"));
        }
        if self.knn.k == 0 {
            return Err(Error::config("knn.k must be positive"));
        }
        if !(self.svm.lambda > 0.0 && self.svm.learning_rate > 0.0 && self.svm.calibration_scale > 0.0) {
            return Err(Error::config("svm lambda, learning_rate and calibration_scale must be positive"));
        }
        let lr = &self.logistic_regression;
        if !(lr.learning_rate > 0.0) || lr.batch_size == 0 || !(lr.l2 >= 0.0) {
            return Err(Error::config("invalid logistic_regression settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum Node {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, cfg: &TreeConfig) -> Self {
        let mut tree = Self {
            nodes: Vec::new(),
            n_classes,
        };
        let idx: Vec<usize> = (0..x.nrows()).collect();
        tree.grow(x, y, idx, 0, cfg);
        tree
    }

    fn leaf(&mut self, y: &[usize], idx: &[usize]) -> usize {
        let mut probs = vec![0.0; self.n_classes];
        for &i in idx {
            probs[y[i]] += 1.0;
        }
        let n = idx.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    fn grow(&mut self, x: ArrayView2<f64>, y: &[usize], idx: Vec<usize>, depth: usize, cfg: &TreeConfig) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in &idx {
            counts[y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= cfg.max_depth || idx.len() < cfg.min_samples_split.max(2) {
            return self.leaf(y, &idx);
        }
        let Some((feature, threshold)) = self.best_split(x, y, &idx, &counts, cfg) else {
            return self.leaf(y, &idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[[i, feature]] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let left = self.grow(x, y, l, depth + 1, cfg);
        let right = self.grow(x, y, r, depth + 1, cfg);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    fn best_split(
        &self,
        x: ArrayView2<f64>,
        y: &[usize],
        idx: &[usize],
        counts: &[usize],
        cfg: &TreeConfig,
    ) -> Option<(usize, f64)> {
        let n = idx.len();
        let parent = gini(counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for j in 0..x.ncols() {
            order.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            for s in 0..n - 1 {
                left[y[order[s]]] += 1;
                let (v, next) = (x[[order[s], j]], x[[order[s + 1], j]]);
                let nl = s + 1;
                if v == next || nl < cfg.min_samples_leaf || n - nl < cfg.min_samples_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if score <= parent + 1e-12 && best.is_none_or(|b| score < b.0) {
                    best = Some((score, j, 0.5 * (v + next)));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }

    fn row_probs(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_probs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            out.row_mut(i).assign(&ArrayView1::from(self.row_probs(row)));
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// One-vs-rest linear SVM. Probabilities are a softmax over scaled margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// `features x classes`
    weights: Array2<f64>,
    bias: Array1<f64>,
    calibration_scale: f64,
}

impl LinearSvm {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, cfg: &SvmConfig, seed: u64) -> Self {
        let d = x.ncols();
        let mut weights = Array2::zeros((d, n_classes));
        let mut bias = Array1::zeros(n_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for c in 0..n_classes {
            let mut w = vec![0.0; d];
            let mut b = 0.0;
            let mut t = 0.0;
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let eta = cfg.learning_rate / (1.0 + cfg.learning_rate * cfg.lambda * t);
                    t += 1.0;
                    let target = if y[i] == c { 1.0 } else { -1.0 };
                    let row = x.row(i);
                    let margin = target * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
                    let shrink = 1.0 - eta * cfg.lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (v, &xi) in w.iter_mut().zip(row) {
                            *v += eta * target * xi;
                        }
                        b += eta * target;
                    }
                }
            }
            weights.column_mut(c).assign(&Array1::from(w));
            bias[c] = b;
        }
        Self {
            weights,
            bias,
            calibration_scale: cfg.calibration_scale,
        }
    }

    pub fn margins(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn predict_probs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows((self.margins(x) * self.calibration_scale).view())
    }
}

/// Brute-force k-nearest neighbours (Euclidean); probabilities are vote
/// fractions. Distance ties go to the lower training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    x: Array2<f64>,
    y: Vec<usize>,
    k: usize,
    n_classes: usize,
}

impl Knn {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, cfg: &KnnConfig) -> Self {
        Self {
            x: x.to_owned(),
            y: y.to_vec(),
            k: cfg.k.min(y.len()).max(1),
            n_classes,
        }
    }

    pub fn predict_probs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        for (q, row) in x.axis_iter(Axis(0)).enumerate() {
            dist.clear();
            for (i, t) in self.x.axis_iter(Axis(0)).enumerate() {
                let d: f64 = row.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((d, i));
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if self.k < dist.len() {
                dist.select_nth_unstable_by(self.k - 1, cmp);
            }
            for &(_, i) in &dist[..self.k] {
                out[[q, self.y[i]]] += 1.0 / self.k as f64;
            }
        }
        out
    }
}

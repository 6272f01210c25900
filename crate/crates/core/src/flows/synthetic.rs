//! Seeded Gaussian-blob datasets that stand in for the benchmarks.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{FlowDataset, LabelSet, Split};
use super::scale::ScalingStats;
use super::schema::{FeatureSchema, FeatureSpec};
use super::split::stratified_split;
use crate::error::{Error, Result};

/// Parameters of a synthetic dataset. Class 0 is benign and centred at
/// `0.5` in every coordinate; class `k > 0` is centred at
/// `0.5 + separation * spread * u_k` for a random unit vector `u_k`, so
/// `separation` is the centre distance to benign in units of the
/// per-coordinate standard deviation `spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_classes: usize,
    /// Total rows per class (train + test).
    pub samples_per_class: Vec<usize>,
    pub separation: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Fraction of features marked attack-semantic (frozen).
    #[serde(default)]
    pub frozen_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub seed: u64,
}

fn default_spread() -> f64 {
    0.05
}

fn default_test_fraction() -> f64 {
    0.25
}

impl SyntheticSpec {
    pub fn balanced(n_features: usize, n_classes: usize, per_class: usize, separation: f64, seed: u64) -> Self {
        Self {
            n_features,
            n_classes,
            samples_per_class: vec![per_class; n_classes],
            separation,
            spread: default_spread(),
            frozen_fraction: 0.0,
            test_fraction: default_test_fraction(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_classes < 1 {
            return Err(Error::config("synthetic data needs features and classes"));
        }
        if self.samples_per_class.len() != self.n_classes || self.samples_per_class.contains(&0) {
            return Err(Error::config("samples_per_class must hold one positive count per class"));
        }
        if !(self.separation >= 0.0) || !(self.spread > 0.0) {
            return Err(Error::config("separation must be >= 0 and spread > 0"));
        }
        if !(0.0..=1.0).contains(&self.frozen_fraction) || !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("fractions must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Class centres, row `k` for class `k`.
    pub fn centers(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_c3a7);
        let mut centers = Array2::from_elem((self.n_classes, self.n_features), 0.5);
        for k in 1..self.n_classes {
            let dir: Vec<f64> = (0..self.n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (j, d) in dir.iter().enumerate() {
                centers[[k, j]] += self.separation * self.spread * d / norm;
            }
        }
        centers
    }

    /// Indices of the frozen features.
    pub fn frozen_features(&self) -> Vec<usize> {
        let count = (self.frozen_fraction * self.n_features as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x0f20_2e17);
        let mut idx = sample(&mut rng, self.n_features, count).into_vec();
        idx.sort_unstable();
        idx
    }
}

pub fn class_names(n_classes: usize) -> Vec<String> {
    let mut names = vec!["Benign".to_string()];
    names.extend((1..n_classes).map(|k| format!("Attack{k}")));
    names
}

/// Generate a synthetic train/test pair. Bit-identical for equal specs.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<(FlowDataset, FlowDataset)> {
    spec.validate()?;
    let centers = spec.centers();
    let frozen = spec.frozen_features();
    let features: Vec<FeatureSpec> = (0..spec.n_features)
        .map(|j| {
            let f = FeatureSpec::numeric(format!("f{j}"));
            if frozen.contains(&j) {
                f.semantic()
            } else {
                f
            }
        })
        .collect();
    let schema = FeatureSchema::new(features);
    let names = class_names(spec.n_classes);
    let label_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let label_set = LabelSet::new(&label_refs, "Benign")?;

    let total: usize = spec.samples_per_class.iter().sum();
    let mut x = Array2::zeros((total, spec.n_features));
    let mut y = Vec::with_capacity(total);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut row = 0;
    for (k, &count) in spec.samples_per_class.iter().enumerate() {
        for _ in 0..count {
            for j in 0..spec.n_features {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[[row, j]] = (centers[[k, j]] + spec.spread * z).clamp(0.0, 1.0);
            }
            y.push(k);
            row += 1;
        }
    }
    let (train_idx, test_idx) = stratified_split(&y, spec.test_fraction, spec.seed.wrapping_add(1));
    let full = FlowDataset {
        schema,
        x,
        y,
        label_set,
        scaling: ScalingStats::identity(spec.n_features),
        split: Split::Train,
        seed: Some(spec.seed),
        source: format!("synthetic(seed={})", spec.seed),
    };
    let train = full.select(&train_idx);
    let mut test = full.select(&test_idx);
    test.split = Split::Test;
    Ok((train, test))
}

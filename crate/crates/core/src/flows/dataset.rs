use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;
use super::scale::ScalingStats;
use crate::error::{Error, Result};

/// Ordered class names with one designated benign class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub names: Vec<String>,
    pub benign: usize,
}

impl LabelSet {
    pub fn new(names: &[&str], benign: &str) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let benign = names
            .iter()
            .position(|n| n == benign)
            .ok_or_else(|| Error::UnknownLabel(benign.to_string()))?;
        Ok(Self { names, benign })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn benign_name(&self) -> &str {
        &self.names[self.benign]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A scaled flow-feature matrix with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDataset {
    pub schema: FeatureSchema,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub label_set: LabelSet,
    pub scaling: ScalingStats,
    pub split: Split,
    pub seed: Option<u64>,
    pub source: String,
}

impl FlowDataset {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn benign(&self) -> usize {
        self.label_set.benign
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_set.len()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn class_count_map(&self) -> BTreeMap<String, usize> {
        self.class_counts()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (self.label_set.names[i].clone(), c))
            .collect()
    }

    pub fn rows_of_class(&self, class: usize) -> Vec<usize> {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FlowDataset {
        FlowDataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            ..self.clone_meta()
        }
    }

    pub fn class_subset(&self, class: usize) -> FlowDataset {
        self.select(&self.rows_of_class(class))
    }

    /// Same metadata, replaced rows.
    pub fn with_rows(&self, x: Array2<f64>, y: Vec<usize>) -> FlowDataset {
        FlowDataset {
            x,
            y,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> FlowDataset {
        FlowDataset {
            schema: self.schema.clone(),
            x: Array2::zeros((0, self.n_features())),
            y: Vec::new(),
            label_set: self.label_set.clone(),
            scaling: self.scaling.clone(),
            split: self.split,
            seed: self.seed,
            source: self.source.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.nrows() {
            return Err(Error::LengthMismatch {
                expected: self.x.nrows(),
                actual: self.y.len(),
            });
        }
        if self.x.ncols() != self.schema.n_encoded() {
            return Err(Error::LengthMismatch {
                expected: self.schema.n_encoded(),
                actual: self.x.ncols(),
            });
        }
        if let Some(v) = self.x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("feature value {v} outside [0,1]")));
        }
        if let Some(&c) = self.y.iter().find(|&&c| c >= self.label_set.len()) {
            return Err(Error::UnknownLabel(c.to_string()));
        }
        self.schema.validate().map_err(Error::config)
    }
}

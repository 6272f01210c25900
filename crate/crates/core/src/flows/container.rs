//! Columnar JSON container for [`FlowDataset`]s.
//!
//! Layout (`format = "flowevade.columnar.v1"`):
//! `schema`, `label_set`, `scaling`, `split`, `seed`, `source`, `labels`
//! (class index per row) and `columns`, a list of `{name, values}` in
//! encoded-column order.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{FlowDataset, LabelSet, Split};
use super::scale::ScalingStats;
use super::schema::FeatureSchema;
use crate::error::{Error, Result};

pub const FORMAT: &str = "flowevade.columnar.v1";

#[derive(Serialize, Deserialize)]
struct Column {
    name: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    schema: FeatureSchema,
    label_set: LabelSet,
    scaling: ScalingStats,
    split: Split,
    seed: Option<u64>,
    source: String,
    labels: Vec<usize>,
    columns: Vec<Column>,
}

pub fn to_json(ds: &FlowDataset) -> Result<String> {
    let columns = ds
        .schema
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| Column {
            name: c.name.clone(),
            values: ds.x.column(j).to_vec(),
        })
        .collect();
    let c = Container {
        format: FORMAT.into(),
        schema: ds.schema.clone(),
        label_set: ds.label_set.clone(),
        scaling: ds.scaling.clone(),
        split: ds.split,
        seed: ds.seed,
        source: ds.source.clone(),
        labels: ds.y.clone(),
        columns,
    };
    Ok(serde_json::to_string(&c)?)
}

pub fn from_json(text: &str) -> Result<FlowDataset> {
    let c: Container = serde_json::from_str(text)?;
    if c.format != FORMAT {
        return Err(Error::Serde(format!("unsupported container format `{}`", c.format)));
    }
    let rows = c.labels.len();
    if c.columns.len() != c.schema.n_encoded() {
        return Err(Error::LengthMismatch {
            expected: c.schema.n_encoded(),
            actual: c.columns.len(),
        });
    }
    if let Some(col) = c.columns.iter().find(|col| col.values.len() != rows) {
        return Err(Error::LengthMismatch {
            expected: rows,
            actual: col.values.len(),
        });
    }
    let x = Array2::from_shape_fn((rows, c.columns.len()), |(i, j)| c.columns[j].values[i]);
    let ds = FlowDataset {
        schema: c.schema,
        x,
        y: c.labels,
        label_set: c.label_set,
        scaling: c.scaling,
        split: c.split,
        seed: c.seed,
        source: c.source,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset(path: &Path, ds: &FlowDataset) -> Result<()> {
    std::fs::write(path, to_json(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<FlowDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

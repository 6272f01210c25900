//! Flow-feature datasets: schemas, encoding, scaling, splits, loaders for
//! the NSL-KDD and CICIDS-2017 layouts, and synthetic stand-ins.

pub mod cicids;
pub mod container;
mod dataset;
pub mod nslkdd;
mod report;
mod scale;
mod schema;
mod split;
mod synthetic;

pub use cicids::{load_cicids, load_cicids_with_seed, merge_cicids_classes};
pub use dataset::{FlowDataset, LabelSet, Split};
pub use nslkdd::{load_nslkdd, merge_nslkdd_class};
pub use report::{LoadReport, RejectedRow, UnknownLevel};
pub use scale::{minmax_scale, ScalingStats};
pub use schema::{EncodedColumn, FeatureKind, FeatureSchema, FeatureSpec, RawValue};
pub use split::{stratified_sample, stratified_split, DEFAULT_SPLIT_SEED};
pub use synthetic::{class_names, synthetic_dataset, SyntheticSpec};

/// Train/test pair produced by a loader, with its load report.
#[derive(Debug, Clone)]
pub struct LoadedSplits {
    pub train: FlowDataset,
    pub test: FlowDataset,
    pub report: LoadReport,
}

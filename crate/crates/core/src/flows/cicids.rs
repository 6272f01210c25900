//! CICIDS-2017 flow exports (CICFlowMeter CSV with a header row).
//!
//! Preprocessing manifest, applied in order:
//! 1. header names are trimmed; a repeated name gets a `.1` suffix;
//! 2. identifier and timestamp columns are dropped (`DROPPED_COLUMNS`);
//! 3. `Protocol`, when present, is one-hot encoded (6 → tcp, 17 → udp);
//! 4. `+inf`/`-inf` become the column's finite max/min and `NaN` becomes 0;
//!    a column with no finite value at all is dropped;
//! 5. the 14 attack labels are merged into 7 families;
//! 6. a stratified 75/25 split is drawn with a fixed seed and scaling
//!    statistics are fitted on the train side only.
//!
//! Constant columns are kept (they scale to 0) so the encoded width does
//! not depend on which rows were sampled. The full `GeneratedLabelledFlows`
//! layout yields 82 encoded columns.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::dataset::{FlowDataset, LabelSet, Split};
use super::report::{LoadReport, RejectedRow};
use super::scale::ScalingStats;
use super::schema::{FeatureSchema, FeatureSpec, RawValue};
use super::split::{stratified_split, DEFAULT_SPLIT_SEED};
use super::LoadedSplits;
use crate::error::{Error, Result};

pub const CLASSES: [&str; 7] = ["Benign", "Bot", "Pat", "DoS", "Inf", "Port", "Web"];

pub const DROPPED_COLUMNS: [&str; 7] = [
    "Flow ID",
    "Source IP",
    "Src IP",
    "Destination IP",
    "Dst IP",
    "Timestamp",
    "SimillarHTTP",
];

const LABEL_COLUMN: &str = "Label";
const PROTOCOL_COLUMN: &str = "Protocol";

/// TCP-only counters.
const TCP_FEATURES: [&str; 16] = [
    "FIN Flag Count",
    "SYN Flag Count",
    "RST Flag Count",
    "PSH Flag Count",
    "ACK Flag Count",
    "URG Flag Count",
    "CWE Flag Count",
    "ECE Flag Count",
    "Fwd PSH Flags",
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "Init_Win_bytes_forward",
    "Init_Win_bytes_backward",
    "Init Fwd Win Bytes",
    "Init Bwd Win Bytes",
];

/// Default per-class frozen features.
pub const DEFAULT_CLASS_SEMANTICS: [(&str, &[&str]); 6] = [
    ("Bot", &["Destination Port"]),
    ("Pat", &["Destination Port", "Init_Win_bytes_forward"]),
    ("DoS", &["Destination Port", "Flow Duration"]),
    ("Inf", &["Destination Port"]),
    ("Port", &["Destination Port", "Total Fwd Packets"]),
    ("Web", &["Destination Port", "Total Length of Fwd Packets"]),
];

fn normalize(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Merge an original CICIDS-2017 label into one of the seven families.
pub fn merge_cicids_classes(raw_label: &str) -> Result<&'static str> {
    let class = match normalize(raw_label).as_str() {
        "benign" => "Benign",
        "bot" | "botnet" => "Bot",
        "ftppatator" | "sshpatator" => "Pat",
        "ddos" | "dos" | "goldeneye" | "dosgoldeneye" | "doshulk" | "dosslowhttptest"
        | "dosslowloris" | "heartbleed" => "DoS",
        "infiltration" => "Inf",
        "portscan" => "Port",
        "bruteforce" | "webattackbruteforce" | "sqlinjection" | "webattacksqlinjection"
        | "xss" | "webattackxss" => "Web",
        _ => return Err(Error::UnknownLabel(raw_label.to_string())),
    };
    Ok(class)
}

fn protocol_name(code: &str) -> String {
    match code.trim() {
        "6" => "tcp".into(),
        "17" => "udp".into(),
        other => other.to_string(),
    }
}

struct RawTable {
    header: Vec<String>,
    /// per kept column: numeric values or protocol level
    rows: Vec<Vec<RawValue>>,
    labels: Vec<usize>,
}

fn unique_header(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names
        .map(|n| {
            let mut name = n;
            while !seen.insert(name.clone()) {
                name.push_str(".1");
            }
            name
        })
        .collect()
}

fn read_tables(paths: &[&Path], classes: &LabelSet, report: &mut LoadReport) -> Result<RawTable> {
    let mut table: Option<RawTable> = None;
    let mut rejected = 0;
    for &path in paths {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        report.sources.push(path.display().to_string());
        let csv_err = |e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(csv_err)?;
        let header = unique_header(reader.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()));
        let label_idx = header
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                row: 0,
                reason: "header has no `Label` column".into(),
            })?;
        let kept: Vec<usize> = (0..header.len())
            .filter(|&i| i != label_idx && !DROPPED_COLUMNS.contains(&header[i].as_str()))
            .collect();
        let kept_names: Vec<String> = kept.iter().map(|&i| header[i].clone()).collect();
        for &i in (0..header.len()).filter(|i| !kept.contains(i) && *i != label_idx).collect::<Vec<_>>().iter() {
            if !report.dropped_columns.contains(&header[i]) {
                report.dropped_columns.push(header[i].clone());
            }
        }
        let t = table.get_or_insert_with(|| RawTable {
            header: kept_names.clone(),
            rows: Vec::new(),
            labels: Vec::new(),
        });
        if t.header != kept_names {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row: 0,
                reason: "header differs from the first file".into(),
            });
        }
        let file = path.display().to_string();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != header.len() {
                report.rejected_rows.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason: format!("expected {} fields, found {}", header.len(), record.len()),
                });
                rejected += 1;
                continue;
            }
            let mut values = Vec::with_capacity(kept.len());
            let mut bad = None;
            for (&i, name) in kept.iter().zip(&kept_names) {
                let field = record[i].trim();
                if name == PROTOCOL_COLUMN {
                    values.push(RawValue::Level(protocol_name(field)));
                    continue;
                }
                match field.parse::<f64>() {
                    Ok(v) => values.push(RawValue::Number(v)),
                    Err(_) => {
                        bad = Some(format!("field `{name}` is not numeric: `{field}`"));
                        break;
                    }
                }
            }
            if let Some(reason) = bad {
                report.rejected_rows.push(RejectedRow {
                    file: file.clone(),
                    row,
                    reason,
                });
                rejected += 1;
                continue;
            }
            let family = merge_cicids_classes(&record[label_idx])?;
            t.labels.push(classes.index(family)?);
            t.rows.push(values);
        }
    }
    match table {
        Some(t) if !t.rows.is_empty() => Ok(t),
        _ => Err(Error::EmptyInput {
            path: paths.first().map(|p| p.to_path_buf()).unwrap_or_default(),
            rejected,
        }),
    }
}

/// Replace non-finite values in place; returns the indices of columns with
/// no finite value.
fn repair_non_finite(table: &mut RawTable, report: &mut LoadReport) -> Vec<usize> {
    let n_cols = table.header.len();
    let mut dead = Vec::new();
    for c in 0..n_cols {
        let finite: Vec<f64> = table
            .rows
            .iter()
            .filter_map(|r| match r[c] {
                RawValue::Number(v) if v.is_finite() => Some(v),
                _ => None,
            })
            .collect();
        if table.header[c] == PROTOCOL_COLUMN {
            continue;
        }
        if finite.is_empty() {
            dead.push(c);
            continue;
        }
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        for r in &mut table.rows {
            if let RawValue::Number(v) = &mut r[c] {
                if !v.is_finite() {
                    *v = if v.is_nan() {
                        0.0
                    } else if *v > 0.0 {
                        hi
                    } else {
                        lo
                    };
                    report.replaced_non_finite += 1;
                }
            }
        }
    }
    dead
}

/// Load one or more CICIDS-2017 CSV files with the default split seed.
pub fn load_cicids(paths: &[&Path]) -> Result<LoadedSplits> {
    load_cicids_with_seed(paths, DEFAULT_SPLIT_SEED)
}

pub fn load_cicids_with_seed(paths: &[&Path], seed: u64) -> Result<LoadedSplits> {
    let classes = LabelSet::new(&CLASSES, "Benign")?;
    let mut report = LoadReport::default();
    let mut table = read_tables(paths, &classes, &mut report)?;
    let dead = repair_non_finite(&mut table, &mut report);
    for &c in &dead {
        report.dropped_columns.push(format!("{} (no finite values)", table.header[c]));
    }
    let keep: Vec<usize> = (0..table.header.len()).filter(|c| !dead.contains(c)).collect();
    let header: Vec<String> = keep.iter().map(|&c| table.header[c].clone()).collect();
    let rows: Vec<Vec<RawValue>> = table
        .rows
        .iter()
        .map(|r| keep.iter().map(|&c| r[c].clone()).collect())
        .collect();

    let (train_idx, test_idx) = stratified_split(&table.labels, 0.25, seed);

    let features = header
        .iter()
        .enumerate()
        .map(|(c, name)| {
            if name == PROTOCOL_COLUMN {
                let levels: BTreeSet<String> = train_idx
                    .iter()
                    .filter_map(|&i| match &rows[i][c] {
                        RawValue::Level(l) => Some(l.clone()),
                        RawValue::Number(_) => None,
                    })
                    .collect();
                FeatureSpec::categorical(name.clone(), levels.into_iter().collect()).semantic()
            } else if TCP_FEATURES.contains(&name.as_str()) {
                FeatureSpec::numeric(name.clone()).with_protocol("tcp")
            } else {
                FeatureSpec::numeric(name.clone())
            }
        })
        .collect();
    let mut schema = FeatureSchema::new(features).with_protocols(&["tcp", "udp"]);
    for (class, feats) in DEFAULT_CLASS_SEMANTICS {
        let present: Vec<&str> = feats.iter().copied().filter(|f| schema.raw_index(f).is_some()).collect();
        schema = schema.with_class_semantics(class, &present);
    }

    let encode = |idx: &[usize]| {
        let mut x = Array2::zeros((idx.len(), schema.n_encoded()));
        for (r, &i) in idx.iter().enumerate() {
            let (enc, _) = schema.encode_record(&rows[i]);
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&enc));
        }
        x
    };
    let x_train = encode(&train_idx);
    let x_test = encode(&test_idx);
    let stats = ScalingStats::fit_for_schema(x_train.view(), &schema);
    report.notes.push(format!(
        "encoded width {}; stratified 75/25 split with seed {seed}",
        schema.n_encoded()
    ));
    let source = paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(";");
    let make = |x: Array2<f64>, idx: &[usize], split| FlowDataset {
        schema: schema.clone(),
        x: stats.apply(x.view(), true),
        y: idx.iter().map(|&i| table.labels[i]).collect(),
        label_set: classes.clone(),
        scaling: stats.clone(),
        split,
        seed: Some(seed),
        source: source.clone(),
    };
    Ok(LoadedSplits {
        train: make(x_train, &train_idx, Split::Train),
        test: make(x_test, &test_idx, Split::Test),
        report,
    })
}

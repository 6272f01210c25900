//! NSL-KDD record layout: 41 comma-separated features, the attack label,
//! and an optional trailing difficulty score.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::dataset::{FlowDataset, LabelSet, Split};
use super::report::{LoadReport, RejectedRow, UnknownLevel};
use super::scale::ScalingStats;
use super::schema::{FeatureKind, FeatureSchema, FeatureSpec, RawValue};
use super::LoadedSplits;
use crate::error::{Error, Result};

pub const CLASSES: [&str; 5] = ["Benign", "DoS", "Probe", "R2L", "U2R"];

/// Raw column names in file order.
pub const FEATURES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

const CATEGORICAL: [&str; 3] = ["protocol_type", "service", "flag"];
const BINARY: [&str; 4] = ["land", "logged_in", "is_host_login", "is_guest_login"];
/// Features only meaningful for TCP connections.
const TCP_ONLY: [&str; 1] = ["urgent"];

/// Default per-class frozen features: the statistics that define each
/// attack family's behaviour.
pub const DEFAULT_CLASS_SEMANTICS: [(&str, &[&str]); 4] = [
    (
        "DoS",
        &["count", "srv_count", "serror_rate", "srv_serror_rate", "same_srv_rate"],
    ),
    (
        "Probe",
        &["diff_srv_rate", "rerror_rate", "srv_rerror_rate", "dst_host_diff_srv_rate"],
    ),
    ("R2L", &["num_failed_logins", "logged_in", "is_guest_login", "hot"]),
    (
        "U2R",
        &["root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells"],
    ),
];

/// Map an NSL-KDD subclass label to its five-class family.
pub fn merge_nslkdd_class(raw: &str) -> Result<&'static str> {
    let l = raw.trim().to_ascii_lowercase();
    let class = match l.as_str() {
        "normal" | "benign" => "Benign",
        "apache2" | "back" | "land" | "neptune" | "mailbomb" | "pod" | "processtable" | "smurf"
        | "teardrop" | "udpstorm" | "worm" => "DoS",
        "ipsweep" | "mscan" | "nmap" | "portsweep" | "saint" | "satan" => "Probe",
        "buffer_overflow" | "loadmodule" | "perl" | "ps" | "rootkit" | "sqlattack" | "xterm" => {
            "U2R"
        }
        "ftp_write" | "guess_passwd" | "httptunnel" | "imap" | "multihop" | "named" | "phf"
        | "sendmail" | "snmpgetattack" | "spy" | "snmpguess" | "warezclient" | "warezmaster"
        | "xlock" | "xsnoop" => "R2L",
        _ => return Err(Error::UnknownLabel(raw.to_string())),
    };
    Ok(class)
}

struct ParsedFile {
    rows: Vec<Vec<RawValue>>,
    labels: Vec<usize>,
}

fn parse_file(path: &Path, classes: &LabelSet, report: &mut LoadReport) -> Result<ParsedFile> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let file = path.display().to_string();
    let mut out = ParsedFile {
        rows: Vec::new(),
        labels: Vec::new(),
    };
    let mut rejected = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let reject = |reason: String, report: &mut LoadReport| {
            report.rejected_rows.push(RejectedRow {
                file: file.clone(),
                row,
                reason,
            });
        };
        if record.len() != 42 && record.len() != 43 {
            reject(format!("expected 42 or 43 fields, found {}", record.len()), report);
            rejected += 1;
            continue;
        }
        let mut values = Vec::with_capacity(41);
        let mut bad = None;
        for (i, field) in record.iter().take(41).enumerate() {
            if CATEGORICAL.contains(&FEATURES[i]) {
                values.push(RawValue::Level(field.to_string()));
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(RawValue::Number(v)),
                    _ => {
                        bad = Some(format!("field `{}` is not a finite number: `{field}`", FEATURES[i]));
                        break;
                    }
                }
            }
        }
        if let Some(reason) = bad {
            reject(reason, report);
            rejected += 1;
            continue;
        }
        let family = merge_nslkdd_class(&record[41])?;
        out.labels.push(classes.index(family)?);
        out.rows.push(values);
    }
    if out.rows.is_empty() {
        return Err(Error::EmptyInput {
            path: path.to_path_buf(),
            rejected,
        });
    }
    Ok(out)
}

/// Build the schema with categorical vocabularies taken from the train rows
/// (sorted, so row order does not matter).
fn build_schema(train: &[Vec<RawValue>]) -> FeatureSchema {
    let features = FEATURES
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            if CATEGORICAL.contains(&name) {
                let levels: BTreeSet<String> = train
                    .iter()
                    .filter_map(|r| match &r[i] {
                        RawValue::Level(l) => Some(l.clone()),
                        RawValue::Number(_) => None,
                    })
                    .collect();
                let mut spec = FeatureSpec::categorical(name, levels.into_iter().collect());
                if name == "protocol_type" {
                    spec = spec.semantic();
                }
                spec
            } else if BINARY.contains(&name) {
                FeatureSpec::binary(name)
            } else if TCP_ONLY.contains(&name) {
                FeatureSpec::numeric(name).with_protocol("tcp")
            } else {
                FeatureSpec::numeric(name)
            }
        })
        .collect();
    let mut schema = FeatureSchema::new(features).with_protocols(&["tcp", "udp", "icmp"]);
    for (class, feats) in DEFAULT_CLASS_SEMANTICS {
        schema = schema.with_class_semantics(class, feats);
    }
    schema
}

fn encode(
    schema: &FeatureSchema,
    parsed: &ParsedFile,
    split: &str,
    report: &mut LoadReport,
) -> Array2<f64> {
    let mut x = Array2::zeros((parsed.rows.len(), schema.n_encoded()));
    for (r, raw) in parsed.rows.iter().enumerate() {
        let (enc, unknown) = schema.encode_record(raw);
        for (feat, level) in unknown {
            report.unknown_levels.push(UnknownLevel {
                split: split.to_string(),
                row: r,
                feature: schema.features[feat].name.clone(),
                level,
            });
        }
        x.row_mut(r).assign(&ndarray::ArrayView1::from(&enc));
    }
    x
}

/// Load the train and test files, one-hot encode the categorical columns
/// and min-max scale with train statistics.
pub fn load_nslkdd(train_path: &Path, test_path: &Path) -> Result<LoadedSplits> {
    let classes = LabelSet::new(&CLASSES, "Benign")?;
    let mut report = LoadReport {
        sources: vec![
            train_path.display().to_string(),
            test_path.display().to_string(),
        ],
        ..Default::default()
    };
    let train_raw = parse_file(train_path, &classes, &mut report)?;
    let test_raw = parse_file(test_path, &classes, &mut report)?;
    let schema = build_schema(&train_raw.rows);
    let x_train = encode(&schema, &train_raw, "train", &mut report);
    let x_test = encode(&schema, &test_raw, "test", &mut report);
    let stats = ScalingStats::fit_for_schema(x_train.view(), &schema);
    report.notes.push(format!(
        "encoded width {} ({} numeric/binary + {} one-hot)",
        schema.n_encoded(),
        schema
            .features
            .iter()
            .filter(|f| f.kind != FeatureKind::Categorical)
            .count(),
        schema.one_hot_groups.iter().map(|g| g.len()).sum::<usize>()
    ));
    let make = |x: Array2<f64>, y: Vec<usize>, split, src: &Path| FlowDataset {
        schema: schema.clone(),
        x: stats.apply(x.view(), true),
        y,
        label_set: classes.clone(),
        scaling: stats.clone(),
        split,
        seed: None,
        source: src.display().to_string(),
    };
    Ok(LoadedSplits {
        train: make(x_train, train_raw.labels, Split::Train, train_path),
        test: make(x_test, test_raw.labels, Split::Test, test_path),
        report,
    })
}

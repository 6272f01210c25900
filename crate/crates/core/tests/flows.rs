mod common;

use std::collections::BTreeMap;
use std::io::Write;

use flowevade_core::flows::{
    container, load_cicids, load_nslkdd, merge_cicids_classes, minmax_scale, stratified_split,
    synthetic_dataset, FeatureSchema, FeatureSpec, RawValue, ScalingStats,
    SyntheticSpec,
};
use common::nearest_centroid_accuracy;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn temp_lines(lines: &[String]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

const PROTOS: [&str; 3] = ["tcp", "udp", "icmp"];
const SERVICES: [&str; 5] = ["http", "ftp", "smtp", "domain_u", "ecr_i"];
const FLAGS: [&str; 4] = ["SF", "S0", "REJ", "RSTO"];
const LABELS: [&str; 6] = ["normal", "neptune", "smurf", "satan", "guess_passwd", "rootkit"];

fn random_nsl_rows(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut r = Vec::with_capacity(43);
            for i in 0..41 {
                r.push(match i {
                    1 => PROTOS[rng.random_range(0..3)].to_string(),
                    2 => SERVICES[rng.random_range(0..5)].to_string(),
                    3 => FLAGS[rng.random_range(0..4)].to_string(),
                    6 | 11 | 20 | 21 => rng.random_range(0..2).to_string(),
                    _ => format!("{}", rng.random_range(0..1000) as f64 / 7.0),
                });
            }
            r.push(LABELS[rng.random_range(0..6)].to_string());
            r.push(rng.random_range(1..22).to_string());
            r
        })
        .collect()
}

/// Straight-line re-implementation of the NSL-KDD encoding: sorted train
/// vocabularies, one-hot in place, min-max over train numerics.
fn hand_encode(train: &[Vec<String>], rows: &[Vec<String>]) -> Vec<Vec<f64>> {
    let cat = [1usize, 2, 3];
    let vocab: BTreeMap<usize, Vec<String>> = cat
        .iter()
        .map(|&c| {
            let mut v: Vec<String> = train.iter().map(|r| r[c].clone()).collect();
            v.sort();
            v.dedup();
            (c, v)
        })
        .collect();
    let raw_encode = |r: &Vec<String>| -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..41 {
            if let Some(levels) = vocab.get(&i) {
                for l in levels {
                    out.push(if *l == r[i] { 1.0 } else { 0.0 });
                }
            } else {
                out.push(r[i].parse().unwrap());
            }
        }
        out
    };
    let enc_train: Vec<Vec<f64>> = train.iter().map(raw_encode).collect();
    let width = enc_train[0].len();
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for r in &enc_train {
        for j in 0..width {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    rows.iter()
        .map(|r| {
            raw_encode(r)
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    if hi[j] > lo[j] {
                        ((v - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn nslkdd_matches_hand_encoder() {
    let train = random_nsl_rows(50, 3);
    let test = random_nsl_rows(20, 4);
    let tf = temp_lines(&train.iter().map(|r| r.join(",")).collect::<Vec<_>>());
    let sf = temp_lines(&test.iter().map(|r| r.join(",")).collect::<Vec<_>>());
    let loaded = load_nslkdd(tf.path(), sf.path()).unwrap();
    for (ds, rows) in [(&loaded.train, &train), (&loaded.test, &test)] {
        let expected = hand_encode(&train, rows);
        assert_eq!(ds.n_rows(), rows.len());
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(ds.x.row(i).to_vec(), *e, "row {i}");
        }
        ds.validate().unwrap();
    }
    assert_eq!(loaded.train.label_set.names.len(), 5);
}

const CIC_HEADER: &str = "Flow ID, Source IP, Destination Port, Protocol, Timestamp, Flow Duration, Total Fwd Packets, Flow Bytes/s, SYN Flag Count, Label";

fn cic_rows(counts: &[(&str, usize)], seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![CIC_HEADER.to_string()];
    for (label, n) in counts {
        for i in 0..*n {
            let proto = if rng.random_bool(0.7) { 6 } else { 17 };
            let bytes = if i % 17 == 0 { "Infinity".to_string() } else { rng.random_range(0..5000).to_string() };
            out.push(format!(
                "id{i},10.0.0.{},{},{proto},3/7/2017 9:00,{},{},{bytes},{},{label}",
                i % 255,
                rng.random_range(1..65535),
                rng.random_range(0..100000),
                rng.random_range(1..50),
                rng.random_range(0..3),
            ));
        }
    }
    out
}

#[test]
fn cicids_split_is_stratified() {
    let counts = [("BENIGN", 100), ("DDoS", 40), ("PortScan", 30), ("FTP-Patator", 20), ("Bot", 10)];
    let f = temp_lines(&cic_rows(&counts, 9));
    let loaded = load_cicids(&[f.path()]).unwrap();
    let whole: usize = counts.iter().map(|c| c.1).sum();
    assert_eq!(loaded.train.n_rows() + loaded.test.n_rows(), whole);
    for ds in [&loaded.train, &loaded.test] {
        let map = ds.class_count_map();
        for (raw, n) in counts {
            let family = merge_cicids_classes(raw).unwrap();
            let got = *map.get(family).unwrap_or(&0) as f64 / ds.n_rows() as f64;
            let want = n as f64 / whole as f64;
            assert!((got - want).abs() <= 0.02, "{family}: {got} vs {want}");
        }
        ds.validate().unwrap();
    }
    // Protocol becomes a two-column one-hot group, identifiers are gone.
    let schema = &loaded.train.schema;
    assert_eq!(schema.one_hot_groups.len(), 1);
    assert!(schema.raw_index("Flow ID").is_none());
    assert!(schema.raw_index("Timestamp").is_none());
    assert_eq!(schema.n_encoded(), 7);
}

#[test]
fn cicids_merge_examples() {
    assert_eq!(merge_cicids_classes("FTP-Patator").unwrap(), "Pat");
    assert_eq!(merge_cicids_classes("Benign").unwrap(), "Benign");
    assert_eq!(merge_cicids_classes("Heartbleed").unwrap(), "DoS");
    assert!(merge_cicids_classes("Ransomware").is_err());
}

#[test]
fn minmax_examples() {
    let (s, stats) = minmax_scale(array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]].view(), None);
    assert_eq!(s.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    assert_eq!(s.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    assert_eq!(stats.min, vec![2.0, 5.0]);
    let train_stats = ScalingStats {
        min: vec![0.0],
        max: vec![8.0],
    };
    let (t, _) = minmax_scale(array![[10.0]].view(), Some(&train_stats));
    assert_eq!(t[[0, 0]], 1.0);
}

#[test]
fn synthetic_separation_six_is_separable() {
    let spec = SyntheticSpec::balanced(20, 2, 250, 6.0, 11);
    let (train, test) = synthetic_dataset(&spec).unwrap();
    assert_eq!(train.n_rows() + test.n_rows(), 500);
    assert!(nearest_centroid_accuracy(&train, &test) >= 0.99);
}

#[test]
fn synthetic_separation_zero_is_chance() {
    let spec = SyntheticSpec::balanced(10, 4, 500, 0.0, 5);
    let (train, test) = synthetic_dataset(&spec).unwrap();
    let acc = nearest_centroid_accuracy(&train, &test);
    assert!((acc - 0.25).abs() < 0.06, "accuracy {acc}");
}

#[test]
fn container_file_round_trip() {
    let (train, _) = synthetic_dataset(&SyntheticSpec::balanced(4, 3, 10, 3.0, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.json");
    container::write_dataset(&path, &train).unwrap();
    assert_eq!(container::read_dataset(&path).unwrap(), train);
}

fn categorical_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureSpec::numeric("a"),
        FeatureSpec::categorical("p", PROTOS.iter().map(|s| s.to_string()).collect()),
        FeatureSpec::binary("b"),
        FeatureSpec::categorical("f", FLAGS.iter().map(|s| s.to_string()).collect()),
    ])
}

proptest! {
    #[test]
    fn one_hot_round_trip(a in 0.0..10.0f64, p in 0usize..3, b in 0usize..2, f in 0usize..4) {
        let s = categorical_schema();
        let raw = [
            RawValue::Number(a),
            RawValue::Level(PROTOS[p].into()),
            RawValue::Number(b as f64),
            RawValue::Level(FLAGS[f].into()),
        ];
        let (enc, unknown) = s.encode_record(&raw);
        prop_assert!(unknown.is_empty());
        prop_assert_eq!(
            s.decode_levels(&enc),
            vec![Some(PROTOS[p].to_string()), Some(FLAGS[f].to_string())]
        );
    }

    #[test]
    fn fresh_scaling_spans_unit_interval(
        rows in proptest::collection::vec(proptest::collection::vec(-50.0..50.0f64, 3), 2..30)
    ) {
        let x = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j]);
        let (s, stats) = minmax_scale(x.view(), None);
        for j in 0..3 {
            let col = s.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if stats.max[j] > stats.min[j] {
                prop_assert_eq!(lo, 0.0);
                prop_assert!((hi - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(hi, 0.0);
            }
        }
        let (again, _) = minmax_scale(x.view(), Some(&stats));
        prop_assert_eq!(again, s);
    }

    #[test]
    fn split_conserves_class_counts(
        labels in proptest::collection::vec(0usize..4, 1..120),
        seed in any::<u64>(),
    ) {
        let (tr, te) = stratified_split(&labels, 0.25, seed);
        for c in 0..4 {
            let whole = labels.iter().filter(|&&l| l == c).count();
            let parts = tr.iter().chain(&te).filter(|&&i| labels[i] == c).count();
            prop_assert_eq!(whole, parts);
        }
        prop_assert_eq!(tr.len() + te.len(), labels.len());
    }
}

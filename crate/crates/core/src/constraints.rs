//! Perturbation masks, per-class valid ranges and compliance checks.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{FeatureSchema, FlowDataset, LabelSet};

/// Binary perturbation mask over encoded columns; `true` means the column
/// may be perturbed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(width: usize) -> Self {
        Self { bits: vec![true; width] }
    }

    pub fn zeros(width: usize) -> Self {
        Self { bits: vec![false; width] }
    }

    /// Mask with exactly the listed columns open.
    pub fn from_indices(width: usize, open: &[usize]) -> Result<Self> {
        let mut bits = vec![false; width];
        for &i in open {
            if i >= width {
                return Err(Error::config(format!("mask index {i} out of range for width {width}")));
            }
            bits[i] = true;
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_open(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Open (perturbable) column indices.
    pub fn open_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn count_open(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Per-column `[d_min, d_max]` in scaled space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidRanges {
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
}

impl ValidRanges {
    pub fn unit(width: usize) -> Self {
        Self {
            d_min: vec![0.0; width],
            d_max: vec![1.0; width],
        }
    }

    pub fn len(&self) -> usize {
        self.d_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_min.is_empty()
    }

    pub fn contains(&self, i: usize, v: f64) -> bool {
        self.d_min[i] <= v && v <= self.d_max[i]
    }

    fn check(&self) -> Result<()> {
        if self.d_min.len() != self.d_max.len() {
            return Err(Error::LengthMismatch {
                expected: self.d_min.len(),
                actual: self.d_max.len(),
            });
        }
        for (i, (&lo, &hi)) in self.d_min.iter().zip(&self.d_max).enumerate() {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::config(format!("range {i} = [{lo}, {hi}] is not inside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub class_samples: usize,
}

/// Mask and valid ranges for one attack class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintProfile {
    pub attack_class: String,
    pub mask: Mask,
    pub ranges: ValidRanges,
    /// Encoded columns of attack-semantic features.
    pub semantic: Vec<usize>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    attack_class: String,
    width: usize,
    perturbable: Vec<usize>,
    #[serde(default)]
    semantic: Vec<usize>,
    provenance: Provenance,
    ranges: ValidRanges,
}

impl ConstraintProfile {
    pub fn new(
        attack_class: impl Into<String>,
        mask: Mask,
        ranges: ValidRanges,
        semantic: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        let p = Self {
            attack_class: attack_class.into(),
            mask,
            ranges,
            semantic,
            provenance,
        };
        p.check()?;
        Ok(p)
    }

    /// Build the full profile for `attack_class` from a (train) dataset.
    pub fn fit(dataset: &FlowDataset, attack_class: &str, protocol: Option<&str>) -> Result<Self> {
        let mask = build_mask(&dataset.schema, &dataset.label_set, attack_class, protocol)?;
        let ranges = compute_valid_ranges(dataset, attack_class)?;
        let class = dataset.label_set.index(attack_class)?;
        Self::new(
            attack_class,
            mask,
            ranges,
            semantic_columns(&dataset.schema, attack_class),
            Provenance {
                dataset: dataset.source.clone(),
                class_samples: dataset.rows_of_class(class).len(),
            },
        )
    }

    pub fn width(&self) -> usize {
        self.mask.len()
    }

    fn check(&self) -> Result<()> {
        self.ranges.check()?;
        if self.ranges.len() != self.mask.len() {
            return Err(Error::LengthMismatch {
                expected: self.mask.len(),
                actual: self.ranges.len(),
            });
        }
        if let Some(&i) = self.semantic.iter().find(|&&i| i >= self.width() || self.mask.is_open(i)) {
            return Err(Error::config(format!("semantic column {i} is not masked")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        let file = ProfileFile {
            attack_class: self.attack_class.clone(),
            width: self.width(),
            perturbable: self.mask.open_indices(),
            semantic: self.semantic.clone(),
            provenance: self.provenance.clone(),
            ranges: self.ranges.clone(),
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ProfileFile = toml::from_str(text)?;
        Self::new(
            f.attack_class,
            Mask::from_indices(f.width, &f.perturbable)?,
            f.ranges,
            f.semantic,
            f.provenance,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

fn semantic_columns(schema: &FeatureSchema, attack_class: &str) -> Vec<usize> {
    let extra = schema.class_semantics.get(attack_class);
    let mut cols = Vec::new();
    for (raw, f) in schema.features.iter().enumerate() {
        if f.attack_semantic || extra.is_some_and(|names| names.contains(&f.name)) {
            cols.extend(schema.encoded_range(raw));
        }
    }
    cols
}

/// Mask out attack-semantic features (global and per class), features
/// tied to a protocol other than `protocol`, and every one-hot column.
pub fn build_mask(
    schema: &FeatureSchema,
    labels: &LabelSet,
    attack_class: &str,
    protocol: Option<&str>,
) -> Result<Mask> {
    labels.index(attack_class)?;
    if let Some(p) = protocol {
        if !schema.protocols.iter().any(|q| q == p) {
            return Err(Error::UnknownProtocol(p.to_string()));
        }
    }
    let mut bits = vec![true; schema.n_encoded()];
    for i in semantic_columns(schema, attack_class) {
        bits[i] = false;
    }
    for (raw, f) in schema.features.iter().enumerate() {
        if let (Some(tag), Some(p)) = (&f.protocol_tag, protocol) {
            if tag != p {
                for i in schema.encoded_range(raw) {
                    bits[i] = false;
                }
            }
        }
    }
    for g in &schema.one_hot_groups {
        for i in g.clone() {
            bits[i] = false;
        }
    }
    Ok(Mask { bits })
}

pub fn apply_mask(delta: &[f64], mask: &Mask) -> Result<Vec<f64>> {
    if delta.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            actual: delta.len(),
        });
    }
    Ok(delta
        .iter()
        .zip(mask.bits())
        .map(|(&d, &open)| if open { d } else { 0.0 })
        .collect())
}

/// Per-feature min/max over the rows of `attack_class`.
pub fn compute_valid_ranges(dataset: &FlowDataset, attack_class: &str) -> Result<ValidRanges> {
    let class = dataset.label_set.index(attack_class)?;
    let rows = dataset.rows_of_class(class);
    if rows.is_empty() {
        return Err(Error::EmptyClass(attack_class.to_string()));
    }
    let n = dataset.n_features();
    let mut ranges = ValidRanges {
        d_min: vec![f64::INFINITY; n],
        d_max: vec![f64::NEG_INFINITY; n],
    };
    for &r in &rows {
        for (j, &v) in dataset.x.row(r).iter().enumerate() {
            ranges.d_min[j] = ranges.d_min[j].min(v);
            ranges.d_max[j] = ranges.d_max[j].max(v);
        }
    }
    Ok(ranges)
}

pub fn clip_to_ranges(x_star: &[f64], ranges: &ValidRanges) -> Result<Vec<f64>> {
    if x_star.len() != ranges.len() {
        return Err(Error::LengthMismatch {
            expected: ranges.len(),
            actual: x_star.len(),
        });
    }
    Ok(x_star
        .iter()
        .enumerate()
        .map(|(i, &v)| v.clamp(ranges.d_min[i], ranges.d_max[i]))
        .collect())
}

/// Both enforcements on a batch: masked columns are copied from `x`,
/// open columns become `clamp(x + delta)`. Also returns, per element,
/// whether the value passed through unclipped (the derivative of `x*`
/// with respect to `delta` is 1 there and 0 elsewhere).
pub fn enforce_batch(
    x: ArrayView2<f64>,
    delta: ArrayView2<f64>,
    profile: &ConstraintProfile,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.ncols() != profile.width() || x.dim() != delta.dim() {
        return Err(Error::LengthMismatch {
            expected: profile.width(),
            actual: if x.ncols() != profile.width() { x.ncols() } else { delta.ncols() },
        });
    }
    let mut x_star = x.to_owned();
    let mut pass = Array2::zeros(x.dim());
    Zip::indexed(&mut x_star)
        .and(&mut pass)
        .and(delta)
        .for_each(|(_, j), xs, p, &d| {
            if profile.mask.is_open(j) {
                let v = *xs + d;
                let (lo, hi) = (profile.ranges.d_min[j], profile.ranges.d_max[j]);
                *xs = v.clamp(lo, hi);
                *p = if v >= lo && v <= hi { 1.0 } else { 0.0 };
            }
        });
    Ok((x_star, pass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub index: usize,
    pub value: f64,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub passed: bool,
    pub mask_violations: Vec<usize>,
    pub range_violations: Vec<RangeViolation>,
    pub semantic_drift: Vec<usize>,
}

/// Check `x_star` against a profile: masked columns must equal `x_orig`
/// exactly and open columns must lie in their valid range.
pub fn validate_flow(x_orig: &[f64], x_star: &[f64], profile: &ConstraintProfile) -> ComplianceReport {
    let n = profile.width();
    let mut report = ComplianceReport {
        passed: false,
        mask_violations: Vec::new(),
        range_violations: Vec::new(),
        semantic_drift: Vec::new(),
    };
    if x_orig.len() != n || x_star.len() != n {
        report.mask_violations = (0..n).collect();
        return report;
    }
    for i in 0..n {
        let changed = x_star[i].to_bits() != x_orig[i].to_bits();
        if !profile.mask.is_open(i) {
            if changed {
                report.mask_violations.push(i);
            }
        } else if !profile.ranges.contains(i, x_star[i]) {
            report.range_violations.push(RangeViolation {
                index: i,
                value: x_star[i],
                range: (profile.ranges.d_min[i], profile.ranges.d_max[i]),
            });
        }
        if changed && profile.semantic.contains(&i) {
            report.semantic_drift.push(i);
        }
    }
    report.passed = report.mask_violations.is_empty()
        && report.range_violations.is_empty()
        && report.semantic_drift.is_empty();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FeatureSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec::numeric("a"),
            FeatureSpec::numeric("b"),
            FeatureSpec::numeric("c").semantic(),
            FeatureSpec::numeric("d"),
            FeatureSpec::numeric("e").semantic(),
            FeatureSpec::numeric("syn").with_protocol("tcp"),
            FeatureSpec::categorical("proto", vec!["tcp".into(), "udp".into()]),
        ])
        .with_protocols(&["tcp", "udp"])
    }

    fn labels() -> LabelSet {
        LabelSet::new(&["Benign", "DoS"], "Benign").unwrap()
    }

    #[test]
    fn semantic_protocol_and_one_hot_are_masked() {
        let m = build_mask(&schema(), &labels(), "DoS", Some("udp")).unwrap();
        assert_eq!(m.open_indices(), vec![0, 1, 3]);
        let m = build_mask(&schema(), &labels(), "DoS", Some("tcp")).unwrap();
        assert_eq!(m.open_indices(), vec![0, 1, 3, 5]);
    }

    #[test]
    fn plain_schema_gives_all_ones() {
        let s = FeatureSchema::new((0..4).map(|i| FeatureSpec::numeric(format!("f{i}"))).collect());
        assert_eq!(build_mask(&s, &labels(), "DoS", None).unwrap(), Mask::ones(4));
    }

    #[test]
    fn unknown_class_or_protocol() {
        assert!(matches!(
            build_mask(&schema(), &labels(), "Worm", None),
            Err(Error::UnknownLabel(_))
        ));
        assert!(matches!(
            build_mask(&schema(), &labels(), "DoS", Some("icmp")),
            Err(Error::UnknownProtocol(_))
        ));
    }

    #[test]
    fn class_semantics_extend_the_mask() {
        let s = schema().with_class_semantics("DoS", &["a"]);
        let m = build_mask(&s, &labels(), "DoS", None).unwrap();
        assert!(!m.is_open(0));
        assert!(build_mask(&s, &labels(), "Benign", None).unwrap().is_open(0));
    }

    #[test]
    fn hadamard_pattern() {
        let m = Mask::from_bits(vec![true, false, true, false, true]);
        let d = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(apply_mask(&d, &m).unwrap(), vec![0.1, 0.0, 0.3, 0.0, 0.5]);
        assert_eq!(apply_mask(&d, &Mask::ones(5)).unwrap(), d.to_vec());
        assert_eq!(apply_mask(&d, &Mask::zeros(5)).unwrap(), vec![0.0; 5]);
        assert!(apply_mask(&d, &Mask::ones(4)).is_err());
    }

    #[test]
    fn clip_examples() {
        let r = ValidRanges {
            d_min: vec![0.1, 0.0, 0.0],
            d_max: vec![0.9, 0.7, 1.0],
        };
        assert_eq!(clip_to_ranges(&[0.05, 1.0, 0.4], &r).unwrap(), vec![0.1, 0.7, 0.4]);
        assert!(clip_to_ranges(&[0.5], &r).is_err());
    }

    fn profile() -> ConstraintProfile {
        ConstraintProfile::new(
            "DoS",
            Mask::from_bits(vec![true, false, true]),
            ValidRanges {
                d_min: vec![0.0, 0.0, 0.2],
                d_max: vec![1.0, 1.0, 0.6],
            },
            vec![1],
            Provenance {
                dataset: "test".into(),
                class_samples: 3,
            },
        )
        .unwrap()
    }

    #[test]
    fn compliance() {
        let p = profile();
        let x = [0.3, 0.4, 0.5];
        assert!(validate_flow(&x, &x, &p).passed);
        let r = validate_flow(&x, &[0.3, 0.41, 0.5], &p);
        assert!(!r.passed);
        assert_eq!(r.mask_violations, vec![1]);
        assert_eq!(r.semantic_drift, vec![1]);
        let r = validate_flow(&x, &[0.3, 0.4, 0.7], &p);
        assert_eq!(r.range_violations.len(), 1);
        assert!(!r.passed);
    }

    #[test]
    fn enforce_batch_copies_masked_columns() {
        let p = profile();
        let x = ndarray::array![[0.3, 0.4, 0.5]];
        let d = ndarray::array![[0.2, 0.5, 0.3]];
        let (xs, pass) = enforce_batch(x.view(), d.view(), &p).unwrap();
        assert_eq!(xs, ndarray::array![[0.5, 0.4, 0.6]]);
        assert_eq!(pass, ndarray::array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn toml_round_trip() {
        let p = profile();
        let text = p.to_toml().unwrap();
        assert!(text.contains("perturbable = [0, 2]"));
        assert_eq!(ConstraintProfile::from_toml(&text).unwrap(), p);
    }

    #[test]
    fn invalid_profile_rejected() {
        let mut r = profile().ranges;
        r.d_min[0] = 0.9;
        r.d_max[0] = 0.1;
        assert!(ConstraintProfile::new("DoS", Mask::ones(3), r, vec![], profile().provenance).is_err());
    }
}

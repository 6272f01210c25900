use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    BinaryFlag,
}

/// One raw (pre-encoding) feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Protocol this feature is specific to (e.g. TCP flag counters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_tag: Option<String>,
    /// Frozen for every attack class.
    #[serde(default)]
    pub attack_semantic: bool,
    /// Levels of a categorical feature, in encoded order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            protocol_tag: None,
            attack_semantic: false,
            levels: Vec::new(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            kind: FeatureKind::BinaryFlag,
            ..Self::numeric(name)
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            kind: FeatureKind::Categorical,
            levels,
            ..Self::numeric(name)
        }
    }

    pub fn with_protocol(mut self, protocol: impl Into<String>) -> Self {
        self.protocol_tag = Some(protocol.into());
        self
    }

    pub fn semantic(mut self) -> Self {
        self.attack_semantic = true;
        self
    }

    fn encoded_width(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical => self.levels.len(),
            _ => 1,
        }
    }
}

/// An encoded column and the raw feature it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub raw_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

/// Feature metadata for a dataset: raw features, their one-hot expansion,
/// protocol tags and attack-semantic markings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub columns: Vec<EncodedColumn>,
    pub one_hot_groups: Vec<Range<usize>>,
    /// Protocols a flow may declare; `protocol_tag`s come from this set.
    #[serde(default)]
    pub protocols: Vec<String>,
    /// Extra frozen raw-feature names per attack class.
    #[serde(default)]
    pub class_semantics: BTreeMap<String, Vec<String>>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Self {
        let mut columns = Vec::new();
        let mut one_hot_groups = Vec::new();
        for (raw_index, f) in features.iter().enumerate() {
            let start = columns.len();
            match f.kind {
                FeatureKind::Categorical => {
                    for level in &f.levels {
                        columns.push(EncodedColumn {
                            name: format!("{}={}", f.name, level),
                            raw_index,
                            level: Some(level.clone()),
                        });
                    }
                    one_hot_groups.push(start..columns.len());
                }
                _ => columns.push(EncodedColumn {
                    name: f.name.clone(),
                    raw_index,
                    level: None,
                }),
            }
        }
        let mut protocols: Vec<String> = features
            .iter()
            .filter_map(|f| f.protocol_tag.clone())
            .collect();
        protocols.sort();
        protocols.dedup();
        Self {
            features,
            columns,
            one_hot_groups,
            protocols,
            class_semantics: BTreeMap::new(),
        }
    }

    pub fn with_protocols(mut self, protocols: &[&str]) -> Self {
        for p in protocols {
            if !self.protocols.iter().any(|q| q == p) {
                self.protocols.push(p.to_string());
            }
        }
        self.protocols.sort();
        self
    }

    pub fn with_class_semantics(mut self, class: &str, features: &[&str]) -> Self {
        self.class_semantics
            .insert(class.to_string(), features.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn n_raw(&self) -> usize {
        self.features.len()
    }

    pub fn n_encoded(&self) -> usize {
        self.columns.len()
    }

    pub fn raw_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Encoded column range of raw feature `raw`.
    pub fn encoded_range(&self, raw: usize) -> Range<usize> {
        let start: usize = self.features[..raw].iter().map(FeatureSpec::encoded_width).sum();
        start..start + self.features[raw].encoded_width()
    }

    pub fn is_one_hot(&self, col: usize) -> bool {
        self.columns[col].level.is_some()
    }

    /// Check the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.n_encoded();
        if n < self.n_raw() {
            return Err(format!("n_encoded {n} < n_raw {}", self.n_raw()));
        }
        let mut owner = vec![usize::MAX; n];
        for (i, c) in self.columns.iter().enumerate() {
            if c.raw_index >= self.n_raw() {
                return Err(format!("column {i} points past the raw features"));
            }
            owner[i] = c.raw_index;
        }
        let mut covered = vec![false; n];
        for g in &self.one_hot_groups {
            if g.end > n || g.start >= g.end && !g.is_empty() {
                return Err(format!("group {g:?} out of bounds"));
            }
            for i in g.clone() {
                if covered[i] {
                    return Err(format!("column {i} in two one-hot groups"));
                }
                covered[i] = true;
                if owner[i] != owner[g.start] {
                    return Err(format!("group {g:?} spans raw features"));
                }
            }
        }
        for (raw, f) in self.features.iter().enumerate() {
            let r = self.encoded_range(raw);
            if r.clone().any(|c| owner[c] != raw) {
                return Err(format!("feature `{}` columns misaligned", f.name));
            }
        }
        Ok(())
    }

    /// Encode one raw record (numeric values as text or numbers). Unknown
    /// categorical levels yield an all-zero group and are returned in the
    /// second element.
    pub fn encode_record(&self, raw: &[RawValue]) -> (Vec<f64>, Vec<(usize, String)>) {
        let mut out = vec![0.0; self.n_encoded()];
        let mut unknown = Vec::new();
        let mut col = 0;
        for (i, (f, v)) in self.features.iter().zip(raw).enumerate() {
            match (f.kind, v) {
                (FeatureKind::Categorical, RawValue::Level(level)) => {
                    match f.levels.iter().position(|l| l == level) {
                        Some(k) => out[col + k] = 1.0,
                        None => unknown.push((i, level.clone())),
                    }
                    col += f.levels.len();
                }
                (FeatureKind::Categorical, RawValue::Number(n)) => {
                    unknown.push((i, n.to_string()));
                    col += f.levels.len();
                }
                (_, RawValue::Number(n)) => {
                    out[col] = *n;
                    col += 1;
                }
                (_, RawValue::Level(s)) => {
                    out[col] = s.parse().unwrap_or(f64::NAN);
                    col += 1;
                }
            }
        }
        (out, unknown)
    }

    /// Recover categorical levels from an encoded row (`None` for an
    /// all-zero group).
    pub fn decode_levels(&self, row: &[f64]) -> Vec<Option<String>> {
        self.one_hot_groups
            .iter()
            .map(|g| {
                let raw = self.columns[g.start].raw_index;
                g.clone()
                    .position(|c| row[c] > 0.5)
                    .map(|k| self.features[raw].levels[k].clone())
            })
            .collect()
    }
}

/// A raw field value before encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Level(String),
}

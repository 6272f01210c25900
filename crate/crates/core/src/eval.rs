//! Success rates, perturbation sweeps, the l2 budget table, realization
//! planning and CSV table output.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::attack::{l2_norms, train_nidsgan, AttackConfig, GanVariant};
use crate::constraints::{ConstraintProfile, Mask, ValidRanges};
use crate::error::{Error, Result};
use crate::flows::{FeatureSchema, FlowDataset};
use crate::nids::{Classifier, TrainedClassifier};

/// Fraction of `adversarials` that `target` assigns to `benign`.
pub fn success_rate(
    target: &dyn Classifier,
    originals: ArrayView2<f64>,
    adversarials: ArrayView2<f64>,
    benign: usize,
) -> Result<f64> {
    if originals.dim() != adversarials.dim() {
        return Err(Error::LengthMismatch {
            expected: originals.nrows(),
            actual: adversarials.nrows(),
        });
    }
    if adversarials.nrows() == 0 {
        return Ok(0.0);
    }
    let labels = target.predict_labels(adversarials)?;
    Ok(labels.iter().filter(|&&l| l == benign).count() as f64 / labels.len() as f64)
}

/// Magnitude left for each of the other `k - 1` features when one feature
/// moves by `c` and the whole perturbation has l2 norm `epsilon`. With a
/// single feature the whole budget is available to it.
pub fn budget_table(k: usize, c: f64, epsilon: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("at least one feature must be perturbed"));
    }
    if !(c >= 0.0) || !(epsilon >= 0.0) || c > epsilon {
        return Err(Error::config(format!("need 0 <= c <= epsilon, got c = {c}, epsilon = {epsilon}")));
    }
    if k == 1 {
        return Ok(epsilon);
    }
    Ok(((epsilon * epsilon - c * c) / (k - 1) as f64).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    /// Insert non-functional packets.
    Inject,
    /// Change inter-packet timing.
    Rearrange,
    /// Divide payloads over more packets.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStep {
    pub feature: String,
    pub column: usize,
    pub delta: f64,
    pub direction: Direction,
    pub operation: Operation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationPlan {
    pub steps: Vec<RealizationStep>,
    /// Perturbed columns with no known traffic manipulation.
    pub unrealizable: Vec<(String, usize, f64)>,
}

pub const DEFAULT_REALIZATION_THRESHOLD: f64 = 1e-6;

/// Traffic operation for a flow feature, by name.
pub fn operation_for(feature: &str) -> Option<Operation> {
    let f = feature.to_ascii_lowercase();
    let has = |s: &str| f.contains(s);
    if has("iat") || has("duration") || has("active") || has("idle") || f.ends_with("/s") {
        return Some(Operation::Rearrange);
    }
    if has("bytes/bulk") {
        return Some(Operation::Split);
    }
    if has("packets/bulk") || has("bulk rate") || has("flag") || has("header") || has("min_seg_size") {
        return Some(Operation::Inject);
    }
    if has("down/up") || (has("init") && has("win")) {
        return Some(Operation::Inject);
    }
    if has("act_data_pkt") || has("payload") {
        return Some(Operation::Split);
    }
    if has("length of") || has("totlen") || has("packet length") || has("pkt len") {
        return Some(Operation::Inject);
    }
    if has("total") && (has("packets") || has("pkts")) {
        return Some(Operation::Split);
    }
    None
}

/// Map every column perturbed by more than `threshold` to an operation.
pub fn realization_plan(
    schema: &FeatureSchema,
    x_orig: &[f64],
    x_star: &[f64],
    threshold: f64,
) -> Result<RealizationPlan> {
    let n = schema.n_encoded();
    if x_orig.len() != n || x_star.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: if x_orig.len() != n { x_orig.len() } else { x_star.len() },
        });
    }
    let mut plan = RealizationPlan {
        steps: Vec::new(),
        unrealizable: Vec::new(),
    };
    for (j, col) in schema.columns.iter().enumerate() {
        let delta = x_star[j] - x_orig[j];
        if delta.abs() <= threshold {
            continue;
        }
        let feature = schema.features[col.raw_index].name.clone();
        match operation_for(&feature) {
            Some(operation) => plan.steps.push(RealizationStep {
                feature,
                column: j,
                delta,
                direction: if delta > 0.0 { Direction::Increase } else { Direction::Decrease },
                operation,
            }),
            None => plan.unrealizable.push((col.name.clone(), j, delta)),
        }
    }
    Ok(plan)
}

/// Plain comma-separated table with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| Error::Serde(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Serde(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Fixed-precision float cell.
pub fn cell(v: f64) -> String {
    format!("{v:.6}")
}

/// Every (k, c) cell of the budget table.
pub fn budget_grid(ks: &[usize], cs: &[f64], epsilon: f64) -> Result<Table> {
    let mut header = vec!["features_perturbed".to_string()];
    header.extend(cs.iter().map(|c| format!("c={c:.2}")));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for &k in ks {
        let mut row = vec![k.to_string()];
        for &c in cs {
            row.push(cell(budget_table(k, c, epsilon)?));
        }
        t.rows.push(row);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SweepVariant {
    pub constrained: bool,
    pub gan: GanVariant,
}

impl SweepVariant {
    pub const ALL: [SweepVariant; 4] = [
        SweepVariant {
            constrained: true,
            gan: GanVariant::WganGp,
        },
        SweepVariant {
            constrained: false,
            gan: GanVariant::WganGp,
        },
        SweepVariant {
            constrained: true,
            gan: GanVariant::OriginalGan,
        },
        SweepVariant {
            constrained: false,
            gan: GanVariant::OriginalGan,
        },
    ];

    pub fn label(&self) -> String {
        format!(
            "{}/{}",
            if self.constrained { "constrained" } else { "unconstrained" },
            self.gan
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub variant: SweepVariant,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub variants: Vec<SweepVariant>,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
    pub attack: AttackConfig,
}

impl SweepResult {
    /// Seed-averaged success rate for one grid point and variant.
    pub fn mean_success(&self, epsilon: f64, variant: SweepVariant) -> f64 {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.epsilon == epsilon && p.variant == variant)
            .map(|p| p.success_rate)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// One row per grid point, one seed-averaged column per variant.
    pub fn curve_table(&self) -> Table {
        let mut header = vec!["epsilon".to_string()];
        header.extend(self.variants.iter().map(|v| v.label()));
        let mut t = Table {
            header,
            rows: Vec::new(),
        };
        for &e in &self.epsilons {
            let mut row = vec![cell(e)];
            row.extend(self.variants.iter().map(|&v| cell(self.mean_success(e, v))));
            t.rows.push(row);
        }
        t
    }

    pub fn points_table(&self) -> Table {
        let mut t = Table::new(&["epsilon", "variant", "seed", "success_rate", "mean_l2"]);
        for p in &self.points {
            t.push(vec![
                cell(p.epsilon),
                p.variant.label(),
                p.seed.to_string(),
                cell(p.success_rate),
                cell(p.mean_l2),
            ]);
        }
        t
    }
}

/// Same class and ranges opened to every column and the unit interval.
pub fn unconstrained_profile(profile: &ConstraintProfile) -> Result<ConstraintProfile> {
    let w = profile.width();
    ConstraintProfile::new(
        profile.attack_class.clone(),
        Mask::ones(w),
        ValidRanges::unit(w),
        Vec::new(),
        profile.provenance.clone(),
    )
}

/// Inputs shared by every run of a sweep.
pub struct SweepSetup<'a> {
    pub target: &'a TrainedClassifier,
    pub attacker: &'a FlowDataset,
    pub eval: &'a FlowDataset,
    pub profile: &'a ConstraintProfile,
    pub attack: AttackConfig,
}

/// One whitebox attack per grid point, variant and seed. An `epsilon` of 0
/// measures the unperturbed flows.
pub fn perturbation_sweep(
    epsilons: &[f64],
    variants: &[SweepVariant],
    seeds: &[u64],
    setup: &SweepSetup<'_>,
) -> Result<SweepResult> {
    if epsilons.is_empty() || variants.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep needs epsilons, variants and seeds"));
    }
    if epsilons[0] < 0.0 || epsilons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("epsilon grid must be non-negative and strictly increasing"));
    }
    let model = setup.target.as_differentiable()?;
    let labels = &setup.target.label_set;
    let target_class = match &setup.attack.target_class {
        Some(name) => labels.index(name)?,
        None => labels.benign,
    };
    let class = labels.index(&setup.profile.attack_class)?;
    let train_rows = setup.attacker.rows_of_class(class);
    let eval_rows = setup.eval.rows_of_class(class);
    if train_rows.is_empty() || eval_rows.is_empty() {
        return Err(Error::EmptyClass(setup.profile.attack_class.clone()));
    }
    let x_train = setup.attacker.x.select(Axis(0), &train_rows);
    let x_eval = setup.eval.x.select(Axis(0), &eval_rows);
    let open = unconstrained_profile(setup.profile)?;

    let mut points = Vec::new();
    for &epsilon in epsilons {
        for &variant in variants {
            for &seed in seeds {
                let (rate, mean_l2) = if epsilon == 0.0 {
                    (success_rate(setup.target, x_eval.view(), x_eval.view(), target_class)?, 0.0)
                } else {
                    let cfg = AttackConfig {
                        epsilon,
                        gan_variant: variant.gan,
                        seed,
                        ..setup.attack.clone()
                    };
                    let profile = if variant.constrained { setup.profile } else { &open };
                    let art = train_nidsgan(&cfg, x_train.view(), model, target_class, profile)?;
                    let adv = art.generate(x_eval.view())?;
                    let l2 = l2_norms((&adv - &x_eval).view());
                    (
                        success_rate(setup.target, x_eval.view(), adv.view(), target_class)?,
                        l2.mean().unwrap_or(0.0),
                    )
                };
                points.push(SweepPoint {
                    epsilon,
                    variant,
                    seed,
                    success_rate: rate,
                    mean_l2,
                });
            }
        }
    }
    Ok(SweepResult {
        epsilons: epsilons.to_vec(),
        variants: variants.to_vec(),
        seeds: seeds.to_vec(),
        points,
        attack: setup.attack.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        assert!((budget_table(10, 0.10, 0.3).unwrap() - 0.0943).abs() < 1e-4);
        assert_eq!(budget_table(1, 0.30, 0.3).unwrap(), 0.30);
        assert!((budget_table(2, 0.25, 0.3).unwrap() - 0.1658).abs() < 1e-4);
        assert_eq!(budget_table(5, 0.3, 0.3).unwrap(), 0.0);
        assert!(budget_table(3, 0.4, 0.3).is_err());
        assert!(budget_table(0, 0.1, 0.3).is_err());
    }

    #[test]
    fn operations() {
        assert_eq!(operation_for("Total Fwd Packets"), Some(Operation::Split));
        assert_eq!(operation_for("Total Backward Packets"), Some(Operation::Split));
        assert_eq!(operation_for("Flow IAT Mean"), Some(Operation::Rearrange));
        assert_eq!(operation_for("Fwd IAT Std"), Some(Operation::Rearrange));
        assert_eq!(operation_for("Total Length of Fwd Packets"), Some(Operation::Inject));
        assert_eq!(operation_for("Fwd Packet Length Max"), Some(Operation::Inject));
        assert_eq!(operation_for("Flow Bytes/s"), Some(Operation::Rearrange));
        assert_eq!(operation_for("PSH Flag Count"), Some(Operation::Inject));
        assert_eq!(operation_for("Fwd Avg Bytes/Bulk"), Some(Operation::Split));
        assert_eq!(operation_for("Fwd Avg Packets/Bulk"), Some(Operation::Inject));
        assert_eq!(operation_for("Init_Win_bytes_forward"), Some(Operation::Inject));
        assert_eq!(operation_for("act_data_pkt_fwd"), Some(Operation::Split));
        assert_eq!(operation_for("Idle Max"), Some(Operation::Rearrange));
        assert_eq!(operation_for("Down/Up Ratio"), Some(Operation::Inject));
        assert_eq!(operation_for("Destination Port"), None);
    }

    #[test]
    fn csv_escaping() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"x,y\",1\n");
    }
}

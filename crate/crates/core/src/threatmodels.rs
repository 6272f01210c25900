//! Attack pipelines under the three threat models. Blackbox pipelines see
//! the target only through [`TargetOracle`], which returns hard labels and
//! charges every query to a [`QueryLedger`].

use std::cell::Cell;
use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::attack::{l2_norms, train_nidsgan, AttackArtifacts, AttackConfig};
use crate::constraints::ConstraintProfile;
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::flows::{stratified_sample, FlowDataset, LabelSet};
use crate::nids::{
    build_spec, train_classifier, Classifier, Differentiable, ModelFamily, TrainedClassifier, TrainingConfig, TrainingRecord,
};

/// Largest local training set allowed in restricted mode.
pub const RESTRICTED_MAX_LOCAL: usize = 740;
/// Largest query multiplier allowed in restricted mode.
pub const RESTRICTED_MAX_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreatMode {
    Whitebox,
    Blackbox,
    RestrictedBlackbox,
}

impl ThreatMode {
    pub fn name(self) -> &'static str {
        match self {
            ThreatMode::Whitebox => "whitebox",
            ThreatMode::Blackbox => "blackbox",
            ThreatMode::RestrictedBlackbox => "restricted-blackbox",
        }
    }
}

fn d_rounds() -> usize {
    2
}
fn d_ft_epochs() -> usize {
    20
}
fn d_multiplier() -> f64 {
    3.0
}
fn d_surrogate() -> ModelFamily {
    ModelFamily::Idsnet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveLearningConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    /// Probes per round; the local training size when absent.
    #[serde(default)]
    pub probes_per_round: Option<usize>,
    #[serde(default = "d_ft_epochs")]
    pub fine_tune_epochs: usize,
    /// Retrain the surrogate from scratch instead of fine-tuning.
    #[serde(default)]
    pub retrain: bool,
}

impl Default for ActiveLearningConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatModelConfig {
    pub mode: ThreatMode,
    pub adversary_pool_size: usize,
    /// Fraction of the pool labelled by the target to train the surrogate.
    pub local_train_fraction: f64,
    /// Total target queries allowed, as a multiple of the local training size.
    #[serde(default = "d_multiplier")]
    pub query_budget_multiplier: f64,
    #[serde(default)]
    pub active_learning: ActiveLearningConfig,
    #[serde(default = "d_surrogate")]
    pub surrogate_family: ModelFamily,
    /// Full width list for a `custom-mlp` surrogate.
    #[serde(default)]
    pub surrogate_widths: Option<Vec<usize>>,
    /// Batch 32, learning rate 0.003, 50 epochs when absent.
    #[serde(default)]
    pub surrogate_training: Option<TrainingConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl ThreatModelConfig {
    pub fn local_train_size(&self) -> usize {
        (self.local_train_fraction * self.adversary_pool_size as f64).round() as usize
    }

    /// Labelling plus active-learning queries allowed.
    pub fn query_budget(&self) -> usize {
        (self.query_budget_multiplier * self.local_train_size() as f64).floor() as usize
    }

    pub fn surrogate_training(&self) -> TrainingConfig {
        self.surrogate_training
            .clone()
            .unwrap_or_else(|| TrainingConfig::new(32, 0.003, 50, self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.adversary_pool_size == 0 {
            return Err(Error::config("adversary_pool_size must be positive"));
        }
        if !(self.local_train_fraction > 0.0 && self.local_train_fraction <= 1.0) {
            return Err(Error::config("local_train_fraction must lie in (0, 1]"));
        }
        if !(self.query_budget_multiplier >= 1.0) {
            return Err(Error::config("query_budget_multiplier must be at least 1"));
        }
        if !(self.surrogate_family.is_mlp() || self.surrogate_family == ModelFamily::LogisticRegression) {
            return Err(Error::config("the surrogate must be a gradient-trained model"));
        }
        if self.mode == ThreatMode::RestrictedBlackbox {
            let local = self.local_train_size();
            if local > RESTRICTED_MAX_LOCAL {
                return Err(Error::config(format!(
                    "restricted mode allows at most {RESTRICTED_MAX_LOCAL} local samples, config gives {local}"
                )));
            }
            if self.query_budget_multiplier > RESTRICTED_MAX_MULTIPLIER {
                return Err(Error::config(format!(
                    "restricted mode allows a query multiplier of at most {RESTRICTED_MAX_MULTIPLIER}"
                )));
            }
        }
        if let Some(t) = &self.surrogate_training {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Labeling,
    ActiveLearning,
    /// Measuring final success; recorded but not charged to the budget.
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub labeling_queries: usize,
    pub active_learning_queries: usize,
    pub evaluation_queries: usize,
    pub budget: usize,
}

impl QueryLedger {
    pub fn new(budget: usize) -> Self {
        Self {
            labeling_queries: 0,
            active_learning_queries: 0,
            evaluation_queries: 0,
            budget,
        }
    }

    pub fn budgeted(&self) -> usize {
        self.labeling_queries + self.active_learning_queries
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.budgeted())
    }

    pub fn charge(&mut self, kind: QueryKind, n: usize) -> Result<()> {
        if kind != QueryKind::Evaluation && n > self.remaining() {
            return Err(Error::BudgetExceeded {
                requested: n,
                remaining: self.remaining(),
            });
        }
        match kind {
            QueryKind::Labeling => self.labeling_queries += n,
            QueryKind::ActiveLearning => self.active_learning_queries += n,
            QueryKind::Evaluation => self.evaluation_queries += n,
        }
        Ok(())
    }
}

/// Label-only access to a target model.
pub struct TargetOracle<'a> {
    target: &'a dyn Classifier,
    rows_seen: Cell<usize>,
}

impl<'a> TargetOracle<'a> {
    pub fn new(target: &'a dyn Classifier) -> Self {
        Self {
            target,
            rows_seen: Cell::new(0),
        }
    }

    /// Hard labels for `flows`; the ledger is charged first and the query is
    /// refused when the budget cannot cover it.
    pub fn query(&self, flows: ArrayView2<f64>, ledger: &mut QueryLedger, kind: QueryKind) -> Result<Vec<usize>> {
        if flows.nrows() == 0 {
            return Ok(Vec::new());
        }
        if flows.ncols() != self.target.n_features() {
            return Err(Error::LengthMismatch {
                expected: self.target.n_features(),
                actual: flows.ncols(),
            });
        }
        ledger.charge(kind, flows.nrows())?;
        self.rows_seen.set(self.rows_seen.get() + flows.nrows());
        self.target.predict_labels(flows)
    }

    /// Rows sent to the target so far.
    pub fn rows_seen(&self) -> usize {
        self.rows_seen.get()
    }
}

/// Stratified subsample of `size` rows.
pub fn sample_adversary_pool(dataset: &FlowDataset, size: usize, seed: u64) -> Result<FlowDataset> {
    Ok(dataset.select(&stratified_sample(&dataset.y, size, seed)?))
}

pub fn label_with_target(oracle: &TargetOracle<'_>, flows: ArrayView2<f64>, ledger: &mut QueryLedger) -> Result<Vec<usize>> {
    oracle.query(flows, ledger, QueryKind::Labeling)
}

/// Train a surrogate on flows whose `y` holds the target's labels.
pub fn train_local_model(
    labeled: &FlowDataset,
    family: ModelFamily,
    widths: Option<&[usize]>,
    training: &TrainingConfig,
) -> Result<TrainedClassifier> {
    let classes: BTreeSet<usize> = labeled.y.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass(format!(
            "the target labelled all {} local flows as one class; the surrogate needs two",
            labeled.n_rows()
        )));
    }
    let spec = build_spec(family, &labeled.schema, labeled.label_set.len(), widths)?;
    // Narrow ReLU nets occasionally die at initialisation and predict one
    // class everywhere; retry from a different seed when that happens.
    let mut model = train_classifier(&spec, labeled, training, None)?;
    for attempt in 1..SURROGATE_ATTEMPTS {
        let predicted: BTreeSet<usize> = model.predict_labels(labeled.x.view())?.into_iter().collect();
        if predicted.len() > 1 {
            break;
        }
        log::warn!("surrogate collapsed to a single class, retrying (attempt {})", attempt + 1);
        let cfg = TrainingConfig {
            seed: training.seed.wrapping_add(attempt as u64 * 0x9e37),
            ..training.clone()
        };
        model = train_classifier(&spec, labeled, &cfg, None)?;
    }
    Ok(model)
}

const SURROGATE_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvasion {
    pub class: String,
    pub attempted: usize,
    pub evaded: usize,
    pub success_rate: f64,
    /// Fraction of the unperturbed flows already labelled as the target class.
    pub baseline_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    pub mode: String,
    /// Model the success rate was measured against.
    pub target: String,
    pub success_rate: f64,
    pub baseline_rate: f64,
    pub per_class: Vec<ClassEvasion>,
    pub mean_l2: f64,
    pub median_l2: f64,
    pub p95_l2: f64,
    pub max_l2: f64,
    pub ledger: QueryLedger,
    pub local_train_size: Option<usize>,
    pub local_fraction: Option<f64>,
    pub active_learning_rounds: usize,
    pub active_learning_added: usize,
    pub threat_config_hash: Option<String>,
    pub attack_config_hash: String,
    pub profile_hashes: Vec<String>,
    pub seed: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// One attack class's originals, adversarial versions and the labels the
/// measured model assigned to both.
struct ClassBatch {
    class: String,
    originals: Array2<f64>,
    adversarial: Array2<f64>,
    labels: Vec<usize>,
    baseline_labels: Vec<usize>,
}

fn assemble(
    mode: &str,
    target: &str,
    batches: &[ClassBatch],
    target_class: usize,
    ledger: QueryLedger,
    attack: &AttackConfig,
    profiles: &[ConstraintProfile],
) -> Result<EvasionReport> {
    let mut per_class = Vec::new();
    let mut norms = Vec::new();
    let (mut attempted, mut evaded, mut base) = (0usize, 0usize, 0usize);
    for b in batches {
        let e = b.labels.iter().filter(|&&l| l == target_class).count();
        let bl = b.baseline_labels.iter().filter(|&&l| l == target_class).count();
        let n = b.labels.len();
        per_class.push(ClassEvasion {
            class: b.class.clone(),
            attempted: n,
            evaded: e,
            success_rate: if n == 0 { 0.0 } else { e as f64 / n as f64 },
            baseline_rate: if n == 0 { 0.0 } else { bl as f64 / n as f64 },
        });
        attempted += n;
        evaded += e;
        base += bl;
        norms.extend(l2_norms((&b.adversarial - &b.originals).view()));
    }
    norms.sort_by(f64::total_cmp);
    let frac = |k: usize| if attempted == 0 { 0.0 } else { k as f64 / attempted as f64 };
    Ok(EvasionReport {
        mode: mode.to_string(),
        target: target.to_string(),
        success_rate: frac(evaded),
        baseline_rate: frac(base),
        per_class,
        mean_l2: if norms.is_empty() { 0.0 } else { norms.iter().sum::<f64>() / norms.len() as f64 },
        median_l2: percentile(&norms, 0.5),
        p95_l2: percentile(&norms, 0.95),
        max_l2: norms.last().copied().unwrap_or(0.0),
        ledger,
        local_train_size: None,
        local_fraction: None,
        active_learning_rounds: 0,
        active_learning_added: 0,
        threat_config_hash: None,
        attack_config_hash: json_digest(attack)?,
        profile_hashes: profiles
            .iter()
            .map(|p| json_digest(&p.to_toml()?))
            .collect::<Result<_>>()?,
        seed: attack.seed,
    })
}

fn target_index(labels: &LabelSet, attack: &AttackConfig) -> Result<usize> {
    match &attack.target_class {
        Some(name) => labels.index(name),
        None => Ok(labels.benign),
    }
}

/// Train one generator per profile against `model` on the attacker's flows
/// of that profile's class.
fn train_generators(
    model: &dyn Differentiable,
    attacker: &FlowDataset,
    attack: &AttackConfig,
    target: usize,
    profiles: &[ConstraintProfile],
) -> Result<Vec<AttackArtifacts>> {
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let class = attacker.label_set.index(&p.attack_class)?;
            let rows = attacker.rows_of_class(class);
            if rows.is_empty() {
                return Err(Error::EmptyClass(p.attack_class.clone()));
            }
            let cfg = AttackConfig {
                seed: attack.seed.wrapping_add(i as u64),
                ..attack.clone()
            };
            train_nidsgan(&cfg, attacker.x.select(Axis(0), &rows).view(), model, target, p)
        })
        .collect()
}

/// Adversarial versions of each profile's evaluation flows, labelled by
/// `label`.
fn craft_and_label(
    artifacts: &[AttackArtifacts],
    eval: &FlowDataset,
    mut label: impl FnMut(ArrayView2<f64>) -> Result<Vec<usize>>,
) -> Result<Vec<ClassBatch>> {
    let mut out = Vec::new();
    for art in artifacts {
        let profile = art.profile()?;
        let rows = eval.rows_of_class(eval.label_set.index(&profile.attack_class)?);
        let originals = eval.x.select(Axis(0), &rows);
        let adversarial = art.generate(originals.view())?;
        let baseline_labels = label(originals.view())?;
        let labels = label(adversarial.view())?;
        out.push(ClassBatch {
            class: profile.attack_class.clone(),
            originals,
            adversarial,
            labels,
            baseline_labels,
        });
    }
    Ok(out)
}

/// Full-knowledge attack: generators are trained on `attacker` flows
/// directly against the target and evaluated on the attack flows of `eval`.
pub fn run_whitebox(
    target: &TrainedClassifier,
    attacker: &FlowDataset,
    eval: &FlowDataset,
    attack: &AttackConfig,
    profiles: &[ConstraintProfile],
) -> Result<(EvasionReport, Vec<AttackArtifacts>)> {
    let model = target.as_differentiable()?;
    let t = target_index(&target.label_set, attack)?;
    let artifacts = train_generators(model, attacker, attack, t, profiles)?;
    let batches = craft_and_label(&artifacts, eval, |x| target.predict_labels(x))?;
    let report = assemble(
        ThreatMode::Whitebox.name(),
        target.spec.family.name(),
        &batches,
        t,
        QueryLedger::new(0),
        attack,
        profiles,
    )?;
    Ok((report, artifacts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub probes: usize,
    /// Probes the target still assigned to a non-target class; these were
    /// added to the local training set.
    pub failed: usize,
}

/// Query the target on adversarial versions of `probe_flows`, add the ones
/// it does not assign to the generator's target class to `local_set` with
/// the target's labels, and update the surrogate on the augmented set.
#[allow(clippy::too_many_arguments)]
pub fn active_learning_round(
    local: &mut TrainedClassifier,
    local_set: &mut FlowDataset,
    oracle: &TargetOracle<'_>,
    generator: &AttackArtifacts,
    probe_flows: ArrayView2<f64>,
    ledger: &mut QueryLedger,
    settings: &ActiveLearningConfig,
    seed: u64,
) -> Result<RoundOutcome> {
    if probe_flows.nrows() > ledger.remaining() {
        return Err(Error::BudgetExceeded {
            requested: probe_flows.nrows(),
            remaining: ledger.remaining(),
        });
    }
    let x_star = generator.generate(probe_flows)?;
    let labels = oracle.query(x_star.view(), ledger, QueryKind::ActiveLearning)?;
    let failed: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != generator.target_class).collect();
    let outcome = RoundOutcome {
        probes: labels.len(),
        failed: failed.len(),
    };
    if failed.is_empty() {
        return Ok(outcome);
    }
    let added = x_star.select(Axis(0), &failed);
    let x = ndarray::concatenate(Axis(0), &[local_set.x.view(), added.view()]).expect("equal widths");
    let mut y = local_set.y.clone();
    y.extend(failed.iter().map(|&i| labels[i]));
    *local_set = local_set.with_rows(x, y);
    if settings.retrain {
        let cfg = match &local.training {
            TrainingRecord::Gradient(c) => c.clone(),
            TrainingRecord::Classical(_) => return Err(Error::config("surrogate is not gradient-trained")),
        };
        *local = train_classifier(&local.spec, local_set, &cfg, None)?;
    } else {
        local.fine_tune(local_set.x.view(), &local_set.y, settings.fine_tune_epochs, seed)?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackboxOutcome {
    pub report: EvasionReport,
    /// The same run measured before any active-learning round.
    pub without_active_learning: Option<EvasionReport>,
    pub rounds: Vec<RoundOutcome>,
    pub surrogate: TrainedClassifier,
    pub artifacts: Vec<AttackArtifacts>,
}

/// Label-only attack: the target is touched only through hard-label
/// queries for the local training set and for the final measurement.
pub fn run_blackbox(
    target: &dyn Classifier,
    adversary_data: &FlowDataset,
    eval: &FlowDataset,
    threat: &ThreatModelConfig,
    attack: &AttackConfig,
    profiles: &[ConstraintProfile],
) -> Result<BlackboxOutcome> {
    if threat.mode != ThreatMode::Blackbox {
        return Err(Error::config(format!("run_blackbox needs mode blackbox, got {}", threat.mode.name())));
    }
    blackbox_pipeline(target, adversary_data, eval, threat, attack, profiles, false)
}

/// Blackbox attack under the restricted budget, followed by the configured
/// active-learning rounds.
pub fn run_restricted_blackbox(
    target: &dyn Classifier,
    adversary_data: &FlowDataset,
    eval: &FlowDataset,
    threat: &ThreatModelConfig,
    attack: &AttackConfig,
    profiles: &[ConstraintProfile],
) -> Result<BlackboxOutcome> {
    if threat.mode != ThreatMode::RestrictedBlackbox {
        return Err(Error::config(format!(
            "run_restricted_blackbox needs mode restricted-blackbox, got {}",
            threat.mode.name()
        )));
    }
    blackbox_pipeline(target, adversary_data, eval, threat, attack, profiles, threat.active_learning.enabled)
}

fn benign_margins(model: &TrainedClassifier, x: ArrayView2<f64>, target: usize) -> Result<Vec<f64>> {
    let p = model.predict_probs(x)?;
    Ok(p.rows()
        .into_iter()
        .map(|r| {
            let other = r
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != target)
                .map(|(_, &v)| v)
                .fold(0.0, f64::max);
            (r[target] - other).abs()
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn blackbox_pipeline(
    target: &dyn Classifier,
    adversary_data: &FlowDataset,
    eval: &FlowDataset,
    threat: &ThreatModelConfig,
    attack: &AttackConfig,
    profiles: &[ConstraintProfile],
    active_learning: bool,
) -> Result<BlackboxOutcome> {
    threat.validate()?;
    attack.validate()?;
    let oracle = TargetOracle::new(target);
    let mut ledger = QueryLedger::new(threat.query_budget());
    let t = target_index(&adversary_data.label_set, attack)?;

    let pool = sample_adversary_pool(adversary_data, threat.adversary_pool_size, threat.seed)?;
    let local_size = threat.local_train_size();
    let local_idx = stratified_sample(&pool.y, local_size, threat.seed.wrapping_add(1))?;
    let local_flows = pool.select(&local_idx);
    let labels = label_with_target(&oracle, local_flows.x.view(), &mut ledger)?;
    let mut local_set = local_flows.with_rows(local_flows.x.clone(), labels);
    let training = threat.surrogate_training();
    let mut surrogate = train_local_model(
        &local_set,
        threat.surrogate_family,
        threat.surrogate_widths.as_deref(),
        &training,
    )?;

    let mut artifacts = train_generators(surrogate.as_differentiable()?, &pool, attack, t, profiles)?;
    let mode = threat.mode.name();
    let decorate = |mut r: EvasionReport, rounds: usize, added: usize| -> Result<EvasionReport> {
        r.local_train_size = Some(local_size);
        r.local_fraction = Some(threat.local_train_fraction);
        r.active_learning_rounds = rounds;
        r.active_learning_added = added;
        r.threat_config_hash = Some(json_digest(threat)?);
        Ok(r)
    };
    let measure = |artifacts: &[AttackArtifacts], ledger: &mut QueryLedger| -> Result<EvasionReport> {
        let batches = craft_and_label(artifacts, eval, |x| oracle.query(x, ledger, QueryKind::Evaluation))?;
        assemble(mode, "target", &batches, t, ledger.clone(), attack, profiles)
    };

    if !active_learning {
        let report = decorate(measure(&artifacts, &mut ledger)?, 0, 0)?;
        return Ok(BlackboxOutcome {
            report,
            without_active_learning: None,
            rounds: Vec::new(),
            surrogate,
            artifacts,
        });
    }

    let before = decorate(measure(&artifacts, &mut ledger)?, 0, 0)?;
    let al = &threat.active_learning;
    let per_round = al.probes_per_round.unwrap_or(local_size);
    let mut probed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); profiles.len()];
    let mut rounds = Vec::new();
    for round in 0..al.rounds {
        let quota = per_round.min(ledger.remaining());
        if quota == 0 {
            break;
        }
        let mut done = 0;
        let mut failed = 0;
        for (i, art) in artifacts.iter().enumerate() {
            let share = quota / profiles.len() + usize::from(i < quota % profiles.len());
            let class = pool.label_set.index(&profiles[i].attack_class)?;
            let candidates: Vec<usize> = pool
                .rows_of_class(class)
                .into_iter()
                .filter(|r| !probed[i].contains(r))
                .collect();
            if share == 0 || candidates.is_empty() {
                continue;
            }
            let cx = pool.x.select(Axis(0), &candidates);
            let margins = benign_margins(&surrogate, art.generate(cx.view())?.view(), t)?;
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
            order.truncate(share);
            let chosen: Vec<usize> = order.iter().map(|&k| candidates[k]).collect();
            probed[i].extend(chosen.iter().copied());
            let outcome = active_learning_round(
                &mut surrogate,
                &mut local_set,
                &oracle,
                art,
                pool.x.select(Axis(0), &chosen).view(),
                &mut ledger,
                al,
                threat.seed.wrapping_add(100 + round as u64),
            )?;
            done += outcome.probes;
            failed += outcome.failed;
        }
        rounds.push(RoundOutcome { probes: done, failed });
        if done == 0 {
            break;
        }
        artifacts = train_generators(surrogate.as_differentiable()?, &pool, attack, t, profiles)?;
    }
    let added = rounds.iter().map(|r| r.failed).sum();
    let report = decorate(measure(&artifacts, &mut ledger)?, rounds.len(), added)?;
    Ok(BlackboxOutcome {
        report,
        without_active_learning: Some(before),
        rounds,
        surrogate,
        artifacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: EvasionReport,
    pub targets: Vec<EvasionReport>,
}

/// Measure the generators' unchanged outputs against other models. No
/// target queries are charged.
pub fn run_transfer(
    artifacts: &[AttackArtifacts],
    source: (&str, &dyn Classifier),
    targets: &[(&str, &dyn Classifier)],
    eval: &FlowDataset,
) -> Result<TransferReport> {
    let first = artifacts
        .first()
        .ok_or_else(|| Error::config("transfer needs at least one trained generator"))?;
    let t = first.target_class;
    let attack = &first.config;
    let profiles: Vec<ConstraintProfile> = artifacts.iter().map(|a| a.profile()).collect::<Result<_>>()?;
    let batches = craft_and_label(artifacts, eval, |x| source.1.predict_labels(x))?;
    let measure = |name: &str, model: &dyn Classifier| -> Result<EvasionReport> {
        let relabelled: Vec<ClassBatch> = batches
            .iter()
            .map(|b| {
                Ok(ClassBatch {
                    class: b.class.clone(),
                    originals: b.originals.clone(),
                    adversarial: b.adversarial.clone(),
                    labels: model.predict_labels(b.adversarial.view())?,
                    baseline_labels: model.predict_labels(b.originals.view())?,
                })
            })
            .collect::<Result<_>>()?;
        assemble("transfer", name, &relabelled, t, QueryLedger::new(0), attack, &profiles)
    };
    Ok(TransferReport {
        source: assemble("transfer", source.0, &batches, t, QueryLedger::new(0), attack, &profiles)?,
        targets: targets
            .iter()
            .map(|(name, model)| measure(name, *model))
            .collect::<Result<_>>()?,
    })
}

/// Surrogate-to-target label agreement on `x`, computed without touching
/// the ledger; for diagnostics only.
pub fn agreement(a: &dyn Classifier, b: &dyn Classifier, x: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let la = a.predict_labels(x)?;
    let lb = b.predict_labels(x)?;
    Ok(la.iter().zip(&lb).filter(|(p, q)| p == q).count() as f64 / x.nrows() as f64)
}

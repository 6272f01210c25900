//! Declarative experiment configs and the run-directory pipeline behind the
//! command-line tool.
//!
//! A run directory is `<out>/<hash12>-s<seed>`, where the hash covers the
//! resolved config. Layout:
//!
//! ```text
//! config.toml            resolved config, re-runnable as is
//! data/{train,test}.json columnar dataset containers
//! data/load_report.json
//! models/target.json     plus one file per classical model when transfer is on
//! profiles/<class>.toml
//! attack/outcome.json    reports, ledger, active-learning rounds, transfer
//! attack/generator-<class>.json, attack/trace-<class>.jsonl
//! sweep/result.json
//! tables/*.csv           regenerated by `report`
//! summary.txt
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttackArtifacts, AttackConfig, GanVariant};
use crate::constraints::ConstraintProfile;
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::eval::{budget_grid, cell, perturbation_sweep, realization_plan, SweepResult, SweepSetup, SweepVariant, Table};
use crate::flows::{
    container, load_cicids_with_seed, load_nslkdd, synthetic_dataset, FlowDataset, LoadReport, SyntheticSpec,
};
use crate::nids::{
    build_spec, train_classical, train_classifier, ClassicalConfig, Classifier, MetricsReport, ModelFamily,
    TrainedClassifier, TrainingConfig,
};
use crate::threatmodels::{
    run_blackbox, run_restricted_blackbox, run_transfer, run_whitebox, EvasionReport, RoundOutcome, ThreatMode,
    ThreatModelConfig, TransferReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        n_features: usize,
        n_classes: usize,
        per_class: usize,
        separation: f64,
        #[serde(default)]
        frozen_fraction: f64,
    },
    NslKdd {
        train: PathBuf,
        test: PathBuf,
    },
    Cicids {
        files: Vec<PathBuf>,
    },
    /// Dataset containers written by `prepare-data`.
    Container {
        train: PathBuf,
        test: PathBuf,
    },
}

fn d_family() -> ModelFamily {
    ModelFamily::Idsnet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default = "d_family")]
    pub family: ModelFamily,
    /// Full width list for `custom-mlp`.
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    /// Dataset-specific defaults when absent.
    #[serde(default)]
    pub training: Option<TrainingConfig>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            family: d_family(),
            widths: None,
            training: None,
        }
    }
}

fn d_variants() -> Vec<GanVariant> {
    vec![GanVariant::WganGp, GanVariant::OriginalGan]
}
fn d_constrained() -> Vec<bool> {
    vec![true, false]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    #[serde(default = "d_variants")]
    pub gan_variants: Vec<GanVariant>,
    #[serde(default = "d_constrained")]
    pub constrained: Vec<bool>,
    /// Attack seeds averaged per grid point; the experiment seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Attack class swept; the first attack class when absent.
    #[serde(default)]
    pub attack_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Classical hyperparameters; the shipped file when absent.
    #[serde(default)]
    pub classical: Option<ClassicalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Drives every seeded stage; nested seed fields are overwritten by it.
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    /// Whitebox when absent.
    #[serde(default)]
    pub threat: Option<ThreatModelConfig>,
    /// Every non-benign class when empty.
    #[serde(default)]
    pub attack_classes: Vec<String>,
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub transfer: TransferConfig,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parse TOML; relative data paths are taken from `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        match &mut cfg.data {
            DataConfig::NslKdd { train, test } | DataConfig::Container { train, test } => {
                absolutize(base_dir, train);
                absolutize(base_dir, test);
            }
            DataConfig::Cicids { files } => files.iter_mut().for_each(|f| absolutize(base_dir, f)),
            DataConfig::Synthetic { .. } => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        let base = abs.parent().unwrap_or(Path::new("/"));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy with every nested seed set from the experiment seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.attack.seed = c.seed;
        if let Some(t) = &mut c.threat {
            t.seed = c.seed;
            if let Some(tr) = &mut t.surrogate_training {
                tr.seed = c.seed;
            }
        }
        if let Some(tr) = &mut c.target.training {
            tr.seed = c.seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name must not be empty"));
        }
        self.attack.validate()?;
        if let Some(t) = &self.threat {
            t.validate()?;
        }
        if let Some(t) = &self.target.training {
            t.validate()?;
        }
        if let DataConfig::Synthetic {
            n_features,
            n_classes,
            per_class,
            ..
        } = &self.data
        {
            if *n_features == 0 || *n_classes < 2 || *per_class == 0 {
                return Err(Error::config("synthetic data needs features, two classes and rows"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.epsilons.is_empty() || s.epsilons[0] < 0.0 || s.epsilons.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config("sweep.epsilons must be non-empty, non-negative and strictly increasing"));
            }
            if s.gan_variants.is_empty() || s.constrained.is_empty() {
                return Err(Error::config("sweep needs at least one variant"));
            }
        }
        if let Some(c) = &self.transfer.classical {
            c.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the resolved config.
    pub fn hash(&self) -> Result<String> {
        json_digest(&self.resolved())
    }

    pub fn run_dir(&self, out: &Path) -> Result<PathBuf> {
        Ok(out.join(format!("{}-s{}", &self.hash()?[..12], self.seed)))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.resolved())?)
    }

    pub fn mode(&self) -> ThreatMode {
        self.threat.as_ref().map_or(ThreatMode::Whitebox, |t| t.mode)
    }

    fn target_training(&self) -> TrainingConfig {
        if let Some(t) = &self.target.training {
            return TrainingConfig {
                seed: self.seed,
                ..t.clone()
            };
        }
        match self.data {
            DataConfig::NslKdd { .. } => TrainingConfig::nslkdd(self.seed),
            DataConfig::Cicids { .. } => TrainingConfig::cicids(self.seed),
            _ => TrainingConfig::new(32, 0.003, 20, self.seed),
        }
    }
}

/// Paths inside one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: PathBuf, cfg: &ExperimentConfig) -> Result<Self> {
        for sub in ["data", "models", "profiles", "attack", "sweep", "tables"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let dir = Self { root };
        write(&dir.config(), &cfg.to_toml()?)?;
        Ok(dir)
    }

    pub fn open(root: PathBuf) -> Result<(Self, ExperimentConfig)> {
        let dir = Self { root };
        let cfg = ExperimentConfig::load(&dir.config())?;
        Ok((dir, cfg))
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    fn train(&self) -> PathBuf {
        self.root.join("data/train.json")
    }
    fn test(&self) -> PathBuf {
        self.root.join("data/test.json")
    }
    fn load_report(&self) -> PathBuf {
        self.root.join("data/load_report.json")
    }
    fn target(&self) -> PathBuf {
        self.root.join("models/target.json")
    }
    fn classical(&self, family: ModelFamily) -> PathBuf {
        self.root.join(format!("models/{family}.json"))
    }
    fn profile(&self, class: &str) -> PathBuf {
        self.root.join(format!("profiles/{}.toml", file_stem(class)))
    }
    fn outcome(&self) -> PathBuf {
        self.root.join("attack/outcome.json")
    }
    fn generator(&self, class: &str) -> PathBuf {
        self.root.join(format!("attack/generator-{}.json", file_stem(class)))
    }
    fn trace(&self, class: &str) -> PathBuf {
        self.root.join(format!("attack/trace-{}.jsonl", file_stem(class)))
    }
    fn sweep(&self) -> PathBuf {
        self.root.join("sweep/result.json")
    }
    pub fn table(&self, name: &str) -> PathBuf {
        self.root.join(format!("tables/{name}.csv"))
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
}

fn file_stem(class: &str) -> String {
    class
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(v)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load or generate the train/test split described by `cfg`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(FlowDataset, FlowDataset, LoadReport)> {
    match &cfg.data {
        DataConfig::Synthetic {
            n_features,
            n_classes,
            per_class,
            separation,
            frozen_fraction,
        } => {
            let mut spec = SyntheticSpec::balanced(*n_features, *n_classes, *per_class, *separation, cfg.seed);
            spec.frozen_fraction = *frozen_fraction;
            let (train, test) = synthetic_dataset(&spec)?;
            let report = LoadReport {
                sources: vec![format!("synthetic, seed {}", cfg.seed)],
                ..LoadReport::default()
            };
            Ok((train, test, report))
        }
        DataConfig::NslKdd { train, test } => {
            let s = load_nslkdd(train, test)?;
            Ok((s.train, s.test, s.report))
        }
        DataConfig::Cicids { files } => {
            let paths: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
            let s = load_cicids_with_seed(&paths, cfg.seed)?;
            Ok((s.train, s.test, s.report))
        }
        DataConfig::Container { train, test } => {
            let report = LoadReport {
                sources: vec![train.display().to_string(), test.display().to_string()],
                ..LoadReport::default()
            };
            Ok((container::read_dataset(train)?, container::read_dataset(test)?, report))
        }
    }
}

fn attack_classes(cfg: &ExperimentConfig, train: &FlowDataset) -> Vec<String> {
    if !cfg.attack_classes.is_empty() {
        return cfg.attack_classes.clone();
    }
    let counts = train.class_counts();
    (0..train.label_set.len())
        .filter(|&k| k != train.label_set.benign && counts[k] > 0)
        .map(|k| train.label_set.name(k).to_string())
        .collect()
}

/// `prepare-data`: write the dataset containers.
pub fn prepare_data(cfg: &ExperimentConfig, dir: &RunDir) -> Result<(FlowDataset, FlowDataset)> {
    let (train, test, report) = load_data(cfg)?;
    container::write_dataset(&dir.train(), &train)?;
    container::write_dataset(&dir.test(), &test)?;
    write_json(&dir.load_report(), &report)?;
    Ok((train, test))
}

fn data(cfg: &ExperimentConfig, dir: &RunDir) -> Result<(FlowDataset, FlowDataset)> {
    if dir.train().exists() && dir.test().exists() {
        return Ok((container::read_dataset(&dir.train())?, container::read_dataset(&dir.test())?));
    }
    prepare_data(cfg, dir)
}

/// `train-nids`: train the target (and the classical models when transfer
/// is enabled).
pub fn train_target(cfg: &ExperimentConfig, dir: &RunDir) -> Result<TrainedClassifier> {
    let (train, test) = data(cfg, dir)?;
    let family = cfg.target.family;
    let model = if family.is_mlp() {
        let spec = build_spec(family, &train.schema, train.label_set.len(), cfg.target.widths.as_deref())?;
        train_classifier(&spec, &train, &cfg.target_training(), Some(&test))?
    } else {
        train_classical(family, &train, &classical_config(cfg), Some(&test))?
    };
    model.save(&dir.target())?;
    if cfg.transfer.enabled {
        for f in ModelFamily::CLASSICAL {
            train_classical(f, &train, &classical_config(cfg), Some(&test))?.save(&dir.classical(f))?;
        }
    }
    Ok(model)
}

fn classical_config(cfg: &ExperimentConfig) -> ClassicalConfig {
    ClassicalConfig {
        seed: cfg.seed,
        ..cfg.transfer.classical.clone().unwrap_or_else(ClassicalConfig::shipped)
    }
}

fn target(cfg: &ExperimentConfig, dir: &RunDir) -> Result<TrainedClassifier> {
    if dir.target().exists() && (!cfg.transfer.enabled || dir.classical(ModelFamily::Svm).exists()) {
        return TrainedClassifier::load(&dir.target());
    }
    train_target(cfg, dir)
}

fn profiles(cfg: &ExperimentConfig, dir: &RunDir, train: &FlowDataset) -> Result<Vec<ConstraintProfile>> {
    attack_classes(cfg, train)
        .iter()
        .map(|c| {
            let p = ConstraintProfile::fit(train, c, cfg.protocol.as_deref())?;
            p.save(&dir.profile(c))?;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub mode: ThreatMode,
    pub report: EvasionReport,
    pub without_active_learning: Option<EvasionReport>,
    pub rounds: Vec<RoundOutcome>,
    pub transfer: Option<TransferReport>,
    pub config_hash: String,
    pub seed: u64,
}

/// `attack`: run the configured threat model and write its artifacts and
/// tables.
pub fn run_attack(cfg: &ExperimentConfig, dir: &RunDir) -> Result<AttackOutcome> {
    let (train, test) = data(cfg, dir)?;
    let target = target(cfg, dir)?;
    let profiles = profiles(cfg, dir, &train)?;
    let attack = cfg.resolved().attack;
    let (report, without, rounds, artifacts) = match &cfg.resolved().threat {
        None => {
            let (r, a) = run_whitebox(&target, &train, &test, &attack, &profiles)?;
            (r, None, Vec::new(), a)
        }
        Some(t) => match t.mode {
            ThreatMode::Whitebox => {
                let (r, a) = run_whitebox(&target, &train, &test, &attack, &profiles)?;
                (r, None, Vec::new(), a)
            }
            ThreatMode::Blackbox => {
                let o = run_blackbox(&target, &train, &test, t, &attack, &profiles)?;
                (o.report, o.without_active_learning, o.rounds, o.artifacts)
            }
            ThreatMode::RestrictedBlackbox => {
                let o = run_restricted_blackbox(&target, &train, &test, t, &attack, &profiles)?;
                (o.report, o.without_active_learning, o.rounds, o.artifacts)
            }
        },
    };
    for a in &artifacts {
        let class = a.profile()?.attack_class;
        a.save(&dir.generator(&class))?;
        a.write_trace_jsonl(&dir.trace(&class))?;
    }
    let transfer = if cfg.transfer.enabled {
        let models: Vec<(ModelFamily, TrainedClassifier)> = ModelFamily::CLASSICAL
            .iter()
            .map(|&f| Ok((f, TrainedClassifier::load(&dir.classical(f))?)))
            .collect::<Result<_>>()?;
        let targets: Vec<(&str, &dyn Classifier)> =
            models.iter().map(|(f, m)| (f.name(), m as &dyn Classifier)).collect();
        Some(run_transfer(&artifacts, (target.spec.family.name(), &target), &targets, &test)?)
    } else {
        None
    };
    let outcome = AttackOutcome {
        mode: cfg.mode(),
        report,
        without_active_learning: without,
        rounds,
        transfer,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
    };
    write_json(&dir.outcome(), &outcome)?;
    write_tables(cfg, dir)?;
    Ok(outcome)
}

/// `sweep`: success rate against the target over the epsilon grid.
pub fn run_sweep(cfg: &ExperimentConfig, dir: &RunDir) -> Result<SweepResult> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("the config has no [sweep] section"))?;
    let (train, test) = data(cfg, dir)?;
    let target = target(cfg, dir)?;
    let class = match &sweep.attack_class {
        Some(c) => c.clone(),
        None => attack_classes(cfg, &train)
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("no attack class to sweep"))?,
    };
    let profile = ConstraintProfile::fit(&train, &class, cfg.protocol.as_deref())?;
    profile.save(&dir.profile(&class))?;
    let mut variants = Vec::new();
    for &gan in &sweep.gan_variants {
        for &constrained in &sweep.constrained {
            variants.push(SweepVariant { constrained, gan });
        }
    }
    let seeds = if sweep.seeds.is_empty() { vec![cfg.seed] } else { sweep.seeds.clone() };
    let setup = SweepSetup {
        target: &target,
        attacker: &train,
        eval: &test,
        profile: &profile,
        attack: cfg.resolved().attack,
    };
    let result = perturbation_sweep(&sweep.epsilons, &variants, &seeds, &setup)?;
    write_json(&dir.sweep(), &result)?;
    write_tables(cfg, dir)?;
    Ok(result)
}

pub fn metrics_table(m: &MetricsReport) -> Table {
    let mut t = Table::new(&["class", "precision", "recall", "f1", "tp", "fp", "fn", "tn"]);
    for c in &m.per_class {
        t.push(vec![
            c.class.clone(),
            cell(c.precision),
            cell(c.recall),
            cell(c.f1),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ]);
    }
    t.push(vec![
        "macro".into(),
        cell(m.precision),
        cell(m.recall),
        cell(m.f1),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    t.push(vec![
        "accuracy".into(),
        cell(m.accuracy),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    t
}

fn evasion_rows(t: &mut Table, variant: &str, r: &EvasionReport) {
    let frac = r.local_fraction.map(cell).unwrap_or_default();
    for c in &r.per_class {
        t.push(vec![
            r.mode.clone(),
            variant.into(),
            r.target.clone(),
            frac.clone(),
            c.class.clone(),
            c.attempted.to_string(),
            c.evaded.to_string(),
            cell(c.success_rate),
            cell(c.baseline_rate),
        ]);
    }
    t.push(vec![
        r.mode.clone(),
        variant.into(),
        r.target.clone(),
        frac,
        "all".into(),
        r.per_class.iter().map(|c| c.attempted).sum::<usize>().to_string(),
        r.per_class.iter().map(|c| c.evaded).sum::<usize>().to_string(),
        cell(r.success_rate),
        cell(r.baseline_rate),
    ]);
}

pub fn evasion_table(o: &AttackOutcome) -> Table {
    let mut t = Table::new(&[
        "mode",
        "active_learning",
        "target",
        "local_fraction",
        "class",
        "attempted",
        "evaded",
        "success_rate",
        "baseline_rate",
    ]);
    if let Some(before) = &o.without_active_learning {
        evasion_rows(&mut t, "off", before);
        evasion_rows(&mut t, "on", &o.report);
    } else {
        evasion_rows(&mut t, "off", &o.report);
    }
    t
}

pub fn ledger_table(o: &AttackOutcome) -> Table {
    let l = &o.report.ledger;
    let mut t = Table::new(&["labeling", "active_learning", "evaluation", "budget", "local_train_size"]);
    t.push(vec![
        l.labeling_queries.to_string(),
        l.active_learning_queries.to_string(),
        l.evaluation_queries.to_string(),
        l.budget.to_string(),
        o.report.local_train_size.map(|n| n.to_string()).unwrap_or_default(),
    ]);
    t
}

pub fn perturbation_table(o: &AttackOutcome) -> Table {
    let r = &o.report;
    let mut t = Table::new(&["mean_l2", "median_l2", "p95_l2", "max_l2"]);
    t.push(vec![cell(r.mean_l2), cell(r.median_l2), cell(r.p95_l2), cell(r.max_l2)]);
    t
}

pub fn transfer_table(tr: &TransferReport) -> Table {
    let mut t = Table::new(&["model", "role", "success_rate", "baseline_rate", "target_queries"]);
    let q = |r: &EvasionReport| (r.ledger.budgeted() + r.ledger.evaluation_queries).to_string();
    t.push(vec![
        tr.source.target.clone(),
        "source".into(),
        cell(tr.source.success_rate),
        cell(tr.source.baseline_rate),
        q(&tr.source),
    ]);
    for r in &tr.targets {
        t.push(vec![
            r.target.clone(),
            "transfer".into(),
            cell(r.success_rate),
            cell(r.baseline_rate),
            q(r),
        ]);
    }
    t
}

/// Operation per perturbed feature, aggregated over the adversarial
/// versions of the test attack flows.
fn realization_table(generators: &[AttackArtifacts], test: &FlowDataset) -> Result<Table> {
    use std::collections::BTreeMap;
    let mut t = Table::new(&["class", "feature", "operation", "flows", "mean_delta"]);
    for art in generators {
        let profile = art.profile()?;
        let rows = test.rows_of_class(test.label_set.index(&profile.attack_class)?);
        let x = test.x.select(ndarray::Axis(0), &rows);
        let adv = art.generate(x.view())?;
        let mut agg: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
        for (a, b) in x.rows().into_iter().zip(adv.rows()) {
            let plan = realization_plan(
                &test.schema,
                &a.to_vec(),
                &b.to_vec(),
                crate::eval::DEFAULT_REALIZATION_THRESHOLD,
            )?;
            for s in plan.steps {
                let e = agg.entry((s.feature, format!("{:?}", s.operation))).or_default();
                e.0 += 1;
                e.1 += s.delta;
            }
            for (name, _, delta) in plan.unrealizable {
                let e = agg.entry((name, "unrealizable".into())).or_default();
                e.0 += 1;
                e.1 += delta;
            }
        }
        for ((feature, op), (n, sum)) in agg {
            t.push(vec![profile.attack_class.clone(), feature, op, n.to_string(), cell(sum / n as f64)]);
        }
    }
    Ok(t)
}

/// `report`: rebuild every table and the summary from the run directory.
pub fn write_tables(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summary = vec![
        format!("experiment: {}", cfg.name),
        format!("config hash: {}", cfg.hash()?),
        format!("seed: {}", cfg.seed),
        format!("mode: {}", cfg.mode().name()),
    ];
    let mut emit = |name: &str, t: Table| -> Result<()> {
        let p = dir.table(name);
        t.write(&p)?;
        written.push(p);
        Ok(())
    };
    if dir.target().exists() {
        let target = TrainedClassifier::load(&dir.target())?;
        if let Some(m) = &target.metrics_on_test {
            summary.push(format!("target {} test accuracy {:.4}", target.spec.family, m.accuracy));
            emit("target_metrics", metrics_table(m))?;
        }
    }
    if dir.outcome().exists() {
        let o: AttackOutcome = read_json(&dir.outcome())?;
        summary.push(format!("success rate {:.4}", o.report.success_rate));
        emit("evasion", evasion_table(&o))?;
        emit("ledger", ledger_table(&o))?;
        emit("perturbation", perturbation_table(&o))?;
        if let Some(tr) = &o.transfer {
            emit("transfer", transfer_table(tr))?;
        }
        let classes: Vec<String> = o.report.per_class.iter().map(|c| c.class.clone()).collect();
        let gens: Vec<AttackArtifacts> = classes
            .iter()
            .filter(|c| dir.generator(c).exists())
            .map(|c| AttackArtifacts::load(&dir.generator(c)))
            .collect::<Result<_>>()?;
        if !gens.is_empty() && dir.test().exists() {
            emit("realization", realization_table(&gens, &container::read_dataset(&dir.test())?)?)?;
        }
    }
    if dir.sweep().exists() {
        let s: SweepResult = read_json(&dir.sweep())?;
        summary.push(format!("sweep over {} epsilons", s.epsilons.len()));
        emit("sweep_curve", s.curve_table())?;
        emit("sweep_points", s.points_table())?;
    }
    let eps = cfg.attack.epsilon;
    let cs: Vec<f64> = [1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0].iter().map(|f| f * eps).collect();
    emit("budget", budget_grid(&[30, 20, 10, 5, 2, 1], &cs, eps)?)?;
    summary.push(String::new());
    write(&dir.summary(), &summary.join("\n"))?;
    Ok(written)
}

use std::cell::Cell;

use flowevade_core::attack::AttackConfig;
use flowevade_core::constraints::ConstraintProfile;
use flowevade_core::flows::{synthetic_dataset, FlowDataset, SyntheticSpec};
use flowevade_core::nids::{
    build_spec, train_classical, train_classifier, ClassicalConfig, Classifier, Model, ModelFamily, TrainedClassifier,
    TrainingConfig,
};
use flowevade_core::threatmodels::*;
use flowevade_core::Error;
use ndarray::{Array2, ArrayView2, Axis};
use proptest::prelude::*;

/// Counts every row the wrapped model is asked about.
struct Counting<'a> {
    inner: &'a dyn Classifier,
    rows: Cell<usize>,
}

impl Classifier for Counting<'_> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }
    fn predict_probs(&self, x: ArrayView2<f64>) -> flowevade_core::Result<Array2<f64>> {
        self.rows.set(self.rows.get() + x.nrows());
        self.inner.predict_probs(x)
    }
}

/// Always answers class 0.
struct ConstantBenign(usize);

impl Classifier for ConstantBenign {
    fn n_features(&self) -> usize {
        self.0
    }
    fn n_classes(&self) -> usize {
        2
    }
    fn predict_probs(&self, x: ArrayView2<f64>) -> flowevade_core::Result<Array2<f64>> {
        Ok(Array2::from_shape_fn((x.nrows(), 2), |(_, k)| if k == 0 { 1.0 } else { 0.0 }))
    }
}

struct Setup {
    train: FlowDataset,
    test: FlowDataset,
    target: TrainedClassifier,
    profile: ConstraintProfile,
}

fn setup(seed: u64, per_class: usize) -> Setup {
    let mut spec = SyntheticSpec::balanced(20, 2, per_class, 3.0, seed);
    spec.frozen_fraction = 0.25;
    let (train, test) = synthetic_dataset(&spec).unwrap();
    let tspec = build_spec(ModelFamily::Idsnet, &train.schema, 2, None).unwrap();
    let target = train_classifier(&tspec, &train, &TrainingConfig::new(32, 0.003, 20, seed), None).unwrap();
    let profile = ConstraintProfile::fit(&train, "Attack1", None).unwrap();
    Setup {
        train,
        test,
        target,
        profile,
    }
}

fn attack(seed: u64) -> AttackConfig {
    AttackConfig {
        epochs: 100,
        evasion_threshold: 0.95,
        seed,
        ..AttackConfig::default()
    }
}

fn threat(mode: ThreatMode, pool: usize, fraction: f64, seed: u64) -> ThreatModelConfig {
    ThreatModelConfig {
        mode,
        adversary_pool_size: pool,
        local_train_fraction: fraction,
        query_budget_multiplier: 3.0,
        active_learning: ActiveLearningConfig::default(),
        surrogate_family: ModelFamily::Idsnet,
        surrogate_widths: None,
        surrogate_training: None,
        seed,
    }
}

#[test]
fn ledger_charges_and_refuses() {
    let mut l = QueryLedger::new(300);
    l.charge(QueryKind::Labeling, 140).unwrap();
    assert_eq!(l.labeling_queries, 140);
    l.charge(QueryKind::ActiveLearning, 160).unwrap();
    assert_eq!(l.remaining(), 0);
    match l.charge(QueryKind::ActiveLearning, 1) {
        Err(Error::BudgetExceeded { requested, remaining }) => assert_eq!((requested, remaining), (1, 0)),
        other => panic!("{other:?}"),
    }
    assert_eq!(l.active_learning_queries, 160);
    l.charge(QueryKind::Evaluation, 1000).unwrap();
    assert_eq!(l.evaluation_queries, 1000);
}

#[test]
fn labels_are_hard_and_charged() {
    let s = setup(1, 400);
    let oracle = TargetOracle::new(&s.target);
    let mut ledger = QueryLedger::new(1000);
    let empty = s.test.x.slice(ndarray::s![0..0, ..]);
    assert!(label_with_target(&oracle, empty, &mut ledger).unwrap().is_empty());
    assert_eq!(ledger, QueryLedger::new(1000));
    let x = s.test.x.slice(ndarray::s![0..140, ..]);
    let labels = label_with_target(&oracle, x, &mut ledger).unwrap();
    assert_eq!(ledger.labeling_queries, 140);
    assert_eq!(labels, s.target.predict_labels(x).unwrap());
    let mut small = QueryLedger::new(10);
    assert!(matches!(
        label_with_target(&oracle, x, &mut small),
        Err(Error::BudgetExceeded { requested: 140, remaining: 10 })
    ));
    assert_eq!(oracle.rows_seen(), 140);
}

#[test]
fn pool_sampling() {
    let s = setup(2, 100);
    let full = sample_adversary_pool(&s.train, s.train.n_rows(), 0).unwrap();
    assert_eq!(full, s.train);
    let tenth = sample_adversary_pool(&s.train, s.train.n_rows() / 10, 4).unwrap();
    let c = tenth.class_counts();
    assert!(c[0].abs_diff(c[1]) <= 1, "{c:?}");
    assert!(sample_adversary_pool(&s.train, s.train.n_rows() + 1, 0).is_err());
    let counts = s.train.class_counts();
    let n = s.train.n_rows();
    for seed in 0..20 {
        let size = 17 + seed as usize * 3;
        let pool = sample_adversary_pool(&s.train, size, seed).unwrap();
        assert_eq!(pool.n_rows(), size);
        for (k, &got) in pool.class_counts().iter().enumerate() {
            let exact = counts[k] as f64 * size as f64 / n as f64;
            assert!((got as f64 - exact).abs() < 1.0, "seed {seed} class {k}: {got} vs {exact}");
        }
    }
}

#[test]
fn surrogate_agrees_with_linear_target() {
    let s = setup(3, 500);
    let linear = train_classical(ModelFamily::LogisticRegression, &s.train, &ClassicalConfig::shipped(), None).unwrap();
    let oracle = TargetOracle::new(&linear);
    let mut ledger = QueryLedger::new(usize::MAX);
    let labels = label_with_target(&oracle, s.train.x.view(), &mut ledger).unwrap();
    let labeled = s.train.with_rows(s.train.x.clone(), labels);
    let local = train_local_model(&labeled, ModelFamily::Idsnet, None, &TrainingConfig::new(32, 0.003, 50, 0)).unwrap();
    let agree = agreement(&local, &linear, s.test.x.view()).unwrap();
    assert!(agree >= 0.95, "{agree}");

    let single = s.train.with_rows(s.train.x.clone(), vec![0; s.train.n_rows()]);
    assert!(matches!(
        train_local_model(&single, ModelFamily::Idsnet, None, &TrainingConfig::new(32, 0.003, 5, 0)),
        Err(Error::SingleClass(_))
    ));
}

#[test]
fn whitebox_on_benign_everywhere_target_needs_no_training() {
    let s = setup(4, 100);
    let mut target = s.target.clone();
    if let Model::Mlp(net) = &mut target.model {
        net.zero_output_layer();
        net.layers.last_mut().unwrap().bias[0] = 1.0;
    }
    let (report, arts) = run_whitebox(&target, &s.train, &s.test, &attack(0), std::slice::from_ref(&s.profile)).unwrap();
    assert_eq!(report.success_rate, 1.0);
    assert!(arts[0].trace.is_empty());
    assert_eq!(report.ledger.budgeted() + report.ledger.evaluation_queries, 0);
}

#[test]
fn whitebox_against_linear_target() {
    let s = setup(5, 300);
    let linear = train_classical(ModelFamily::LogisticRegression, &s.train, &ClassicalConfig::shipped(), None).unwrap();
    let (report, _) = run_whitebox(&linear, &s.train, &s.test, &attack(1), std::slice::from_ref(&s.profile)).unwrap();
    assert!(report.success_rate >= 0.95, "{}", report.success_rate);
    assert!((0.0..=1.0).contains(&report.baseline_rate));
    assert!(report.median_l2 <= report.p95_l2 && report.p95_l2 <= report.max_l2);
    let tree = train_classical(ModelFamily::DecisionTree, &s.train, &ClassicalConfig::shipped(), None).unwrap();
    assert!(matches!(
        run_whitebox(&tree, &s.train, &s.test, &attack(1), std::slice::from_ref(&s.profile)),
        Err(Error::NotDifferentiable(_))
    ));
}

#[test]
fn blackbox_touches_target_only_through_the_ledger() {
    let s = setup(6, 600);
    let counting = Counting {
        inner: &s.target,
        rows: Cell::new(0),
    };
    let cfg = threat(ThreatMode::Blackbox, 800, 1.0, 6);
    let out = run_blackbox(&counting, &s.train, &s.test, &cfg, &attack(6), std::slice::from_ref(&s.profile)).unwrap();
    let l = &out.report.ledger;
    assert_eq!(counting.rows.get(), l.labeling_queries + l.active_learning_queries + l.evaluation_queries);
    assert!(l.budgeted() <= l.budget);
    assert_eq!(l.labeling_queries, 800);
    let (wb, _) = run_whitebox(&s.target, &s.train, &s.test, &attack(6), std::slice::from_ref(&s.profile)).unwrap();
    assert!(
        (out.report.success_rate - wb.success_rate).abs() <= 0.05,
        "{} vs {}",
        out.report.success_rate,
        wb.success_rate
    );
    assert_eq!(out.report.local_train_size, Some(800));
}

#[test]
fn blackbox_with_single_class_surrogate_fails() {
    let s = setup(7, 100);
    let cfg = threat(ThreatMode::Blackbox, 100, 0.01, 0);
    let err = run_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(0), std::slice::from_ref(&s.profile)).unwrap_err();
    assert!(matches!(err, Error::SingleClass(_)), "{err}");
}

#[test]
fn mode_mismatch_rejected() {
    let s = setup(8, 60);
    let cfg = threat(ThreatMode::Whitebox, 50, 0.5, 0);
    assert!(run_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(0), std::slice::from_ref(&s.profile)).is_err());
    assert!(run_restricted_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(0), std::slice::from_ref(&s.profile)).is_err());
}

#[test]
fn restricted_invariants_enforced() {
    let big = threat(ThreatMode::RestrictedBlackbox, 10_000, 0.075, 0);
    assert_eq!(big.local_train_size(), 750);
    assert!(big.validate().is_err());
    let ok = threat(ThreatMode::RestrictedBlackbox, 10_000, 0.074, 0);
    assert!(ok.validate().is_ok());
    let greedy = ThreatModelConfig {
        query_budget_multiplier: 3.5,
        ..ok.clone()
    };
    assert!(greedy.validate().is_err());
    // the same sizes are fine outside restricted mode
    assert!(ThreatModelConfig {
        mode: ThreatMode::Blackbox,
        ..big
    }
    .validate()
    .is_ok());
}

#[test]
fn restricted_with_active_learning_stays_in_budget() {
    let s = setup(9, 1000);
    let mut cfg = threat(ThreatMode::RestrictedBlackbox, 1000, 0.05, 9);
    cfg.active_learning.enabled = true;
    let out = run_restricted_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(9), std::slice::from_ref(&s.profile)).unwrap();
    let l = &out.report.ledger;
    assert!(l.budgeted() <= 3 * 50, "{l:?}");
    assert_eq!(l.labeling_queries, 50);
    assert_eq!(l.active_learning_queries, out.rounds.iter().map(|r| r.probes).sum::<usize>());
    let before = out.without_active_learning.as_ref().unwrap();
    assert_eq!(before.ledger.active_learning_queries, 0);
    assert!(out.report.active_learning_rounds >= 1);
}

#[test]
fn round_with_all_probes_evading_keeps_the_surrogate() {
    let s = setup(10, 200);
    let benign = ConstantBenign(20);
    let oracle = TargetOracle::new(&benign);
    let mut ledger = QueryLedger::new(1000);
    let (_, arts) = run_whitebox(&s.target, &s.train, &s.test, &attack(0), std::slice::from_ref(&s.profile)).unwrap();
    let mut local = s.target.clone();
    let mut local_set = s.train.clone();
    let probes = s.test.x.select(Axis(0), &s.test.rows_of_class(1)[..20]);
    let out = active_learning_round(
        &mut local,
        &mut local_set,
        &oracle,
        &arts[0],
        probes.view(),
        &mut ledger,
        &ActiveLearningConfig::default(),
        0,
    )
    .unwrap();
    assert_eq!(out, RoundOutcome { probes: 20, failed: 0 });
    assert_eq!(local, s.target);
    assert_eq!(local_set, s.train);
    assert_eq!(ledger.active_learning_queries, 20);

    let mut tiny = QueryLedger::new(5);
    assert!(active_learning_round(
        &mut local,
        &mut local_set,
        &oracle,
        &arts[0],
        probes.view(),
        &mut tiny,
        &ActiveLearningConfig::default(),
        0
    )
    .is_err());
}

#[test]
fn transfer_reports() {
    let s = setup(11, 300);
    let (wb, arts) = run_whitebox(&s.target, &s.train, &s.test, &attack(2), std::slice::from_ref(&s.profile)).unwrap();
    let benign = ConstantBenign(20);
    let twin = s.target.clone();
    let rep = run_transfer(
        &arts,
        ("idsnet", &s.target),
        &[("constant", &benign), ("twin", &twin)],
        &s.test,
    )
    .unwrap();
    assert_eq!(rep.source.success_rate, wb.success_rate);
    assert_eq!(rep.targets[0].success_rate, 1.0);
    assert_eq!(rep.targets[1].success_rate, rep.source.success_rate);
    for r in &rep.targets {
        assert_eq!(r.ledger, QueryLedger::new(0));
    }
}

#[test]
fn reports_are_deterministic() {
    let s = setup(12, 300);
    let cfg = threat(ThreatMode::Blackbox, 300, 0.5, 1);
    let a = run_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(1), std::slice::from_ref(&s.profile)).unwrap();
    let b = run_blackbox(&s.target, &s.train, &s.test, &cfg, &attack(1), std::slice::from_ref(&s.profile)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn ledger_never_exceeds_budget(budget in 0usize..500, ops in proptest::collection::vec((0u8..3, 0usize..120), 0..30)) {
        let mut l = QueryLedger::new(budget);
        let mut expected = (0usize, 0usize, 0usize);
        for (kind, n) in ops {
            let kind = match kind { 0 => QueryKind::Labeling, 1 => QueryKind::ActiveLearning, _ => QueryKind::Evaluation };
            let before = l.clone();
            if l.charge(kind, n).is_ok() {
                match kind {
                    QueryKind::Labeling => expected.0 += n,
                    QueryKind::ActiveLearning => expected.1 += n,
                    QueryKind::Evaluation => expected.2 += n,
                }
            } else {
                prop_assert_eq!(&l, &before);
            }
            prop_assert!(l.budgeted() <= budget);
            prop_assert!(l.budgeted() >= before.budgeted());
        }
        prop_assert_eq!((l.labeling_queries, l.active_learning_queries, l.evaluation_queries), expected);
    }
}

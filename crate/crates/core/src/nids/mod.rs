//! Target and surrogate classifiers: the three MLP architectures, four
//! classical models, training, prediction and metrics.

pub mod classical;
mod metrics;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use classical::{ClassicalConfig, DecisionTree, Knn, KnnConfig, LinearSvm, LogisticConfig, SvmConfig, TreeConfig};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport};

use crate::error::{Error, Result};
use crate::flows::{FeatureSchema, FlowDataset, LabelSet};
use crate::nn::{argmax_rows, cross_entropy_with_grad, softmax_rows, Activation, Adam, AdamSettings, Mlp, MlpBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Alertnet,
    Deepnet,
    Idsnet,
    CustomMlp,
    DecisionTree,
    Svm,
    Knn,
    LogisticRegression,
}

impl ModelFamily {
    pub const CLASSICAL: [ModelFamily; 4] = [
        ModelFamily::DecisionTree,
        ModelFamily::Svm,
        ModelFamily::Knn,
        ModelFamily::LogisticRegression,
    ];

    pub fn is_mlp(self) -> bool {
        matches!(
            self,
            ModelFamily::Alertnet | ModelFamily::Deepnet | ModelFamily::Idsnet | ModelFamily::CustomMlp
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Alertnet => "alertnet",
            ModelFamily::Deepnet => "deepnet",
            ModelFamily::Idsnet => "idsnet",
            ModelFamily::CustomMlp => "custom-mlp",
            ModelFamily::DecisionTree => "decision-tree",
            ModelFamily::Svm => "svm",
            ModelFamily::Knn => "knn",
            ModelFamily::LogisticRegression => "logistic-regression",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ModelFamily::Alertnet,
            ModelFamily::Deepnet,
            ModelFamily::Idsnet,
            ModelFamily::CustomMlp,
            ModelFamily::DecisionTree,
            ModelFamily::Svm,
            ModelFamily::Knn,
            ModelFamily::LogisticRegression,
        ]
        .into_iter()
        .find(|f| f.name() == s)
        .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub family: ModelFamily,
    /// Input, hidden and output widths; just the input width for the
    /// non-gradient classical models.
    pub layer_widths: Vec<usize>,
    pub dropout_rate: f64,
    pub batch_norm: bool,
    pub n_classes: usize,
}

impl ClassifierSpec {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!("dropout rate {} outside [0,1)", self.dropout_rate)));
        }
        if self.n_classes < 2 {
            return Err(Error::config("a classifier needs at least two classes"));
        }
        if self.family.is_mlp() || self.family == ModelFamily::LogisticRegression {
            let w = &self.layer_widths;
            if w.len() < 2 || w.contains(&0) {
                return Err(Error::config(format!("invalid layer widths {w:?}")));
            }
            if w[0] != n_features {
                return Err(Error::LengthMismatch {
                    expected: n_features,
                    actual: w[0],
                });
            }
            if *w.last().unwrap() != self.n_classes {
                return Err(Error::LengthMismatch {
                    expected: self.n_classes,
                    actual: *w.last().unwrap(),
                });
            }
        }
        Ok(())
    }
}

fn idsnet_hidden(schema: &FeatureSchema) -> Vec<usize> {
    if schema.raw_index("protocol_type").is_some() && schema.raw_index("dst_host_srv_rerror_rate").is_some() {
        vec![64, 32]
    } else if schema.raw_index("Flow Duration").is_some() {
        vec![42, 21]
    } else {
        let n = schema.n_encoded();
        vec![n.div_ceil(2).max(2), n.div_ceil(4).max(2)]
    }
}

/// Architecture for `family` on a dataset with `schema`. `custom` gives the
/// full width list for `custom-mlp`.
pub fn build_spec(
    family: ModelFamily,
    schema: &FeatureSchema,
    n_classes: usize,
    custom: Option<&[usize]>,
) -> Result<ClassifierSpec> {
    let n = schema.n_encoded();
    let (hidden, dropout_rate, batch_norm): (Vec<usize>, f64, bool) = match family {
        ModelFamily::Alertnet => (vec![1024, 768, 512, 256, 128], 0.01, true),
        ModelFamily::Deepnet => (vec![256; 4], 0.01, false),
        ModelFamily::Idsnet => (idsnet_hidden(schema), 0.0, false),
        ModelFamily::LogisticRegression => (Vec::new(), 0.0, false),
        ModelFamily::CustomMlp => {
            let widths = custom.ok_or_else(|| Error::config("custom-mlp needs explicit widths"))?;
            let spec = ClassifierSpec {
                family,
                layer_widths: widths.to_vec(),
                dropout_rate: 0.0,
                batch_norm: false,
                n_classes,
            };
            spec.validate(n)?;
            return Ok(spec);
        }
        ModelFamily::DecisionTree | ModelFamily::Svm | ModelFamily::Knn => {
            return Ok(ClassifierSpec {
                family,
                layer_widths: vec![n],
                dropout_rate: 0.0,
                batch_norm: false,
                n_classes,
            })
        }
    };
    let mut layer_widths = vec![n];
    layer_widths.extend(hidden);
    layer_widths.push(n_classes);
    let spec = ClassifierSpec {
        family,
        layer_widths,
        dropout_rate,
        batch_norm,
        n_classes,
    };
    spec.validate(n)?;
    Ok(spec)
}

/// Minibatch Adam settings for MLP training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub l2: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

impl TrainingConfig {
    pub fn new(batch_size: usize, learning_rate: f64, epochs: usize, seed: u64) -> Self {
        Self {
            batch_size,
            learning_rate,
            epochs,
            seed,
            beta1: default_beta1(),
            beta2: default_beta2(),
            l2: 0.0,
        }
    }

    /// Batch 32, learning rate 0.01, 50 epochs.
    pub fn nslkdd(seed: u64) -> Self {
        Self::new(32, 0.01, 50, seed)
    }

    /// Batch 256, learning rate 0.001, 50 epochs.
    pub fn cicids(seed: u64) -> Self {
        Self::new(256, 0.001, 50, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::config("batch_size and learning_rate must be positive, l2 non-negative"));
        }
        Ok(())
    }
}

/// Fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Mlp(Mlp),
    DecisionTree(DecisionTree),
    Svm(LinearSvm),
    Knn(Knn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingRecord {
    Gradient(TrainingConfig),
    Classical(ClassicalConfig),
}

/// Anything that maps flows to class probabilities.
pub trait Classifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_probs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Argmax of [`Classifier::predict_probs`], ties to the lowest index.
    fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.predict_probs(x)?.view()))
    }
}

/// A classifier whose logits can be differentiated with respect to the
/// input.
pub trait Differentiable: Classifier {
    fn logits(&self, x: ArrayView2<f64>) -> Array2<f64>;

    /// Logits of `x` and the input gradient of a scalar loss, where
    /// `loss_grad` maps the logits to the loss gradient with respect to them.
    fn logits_and_input_grad(
        &self,
        x: ArrayView2<f64>,
        loss_grad: &mut dyn FnMut(ArrayView2<f64>) -> Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub model: Model,
    pub label_set: LabelSet,
    pub training: TrainingRecord,
    pub metrics_on_test: Option<MetricsReport>,
}

impl TrainedClassifier {
    fn check_width(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::LengthMismatch {
                expected: self.n_features(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        match &self.model {
            Model::Mlp(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_differentiable(&self) -> Result<&dyn Differentiable> {
        match self.model {
            Model::Mlp(_) => Ok(self),
            _ => Err(Error::NotDifferentiable(self.spec.family.to_string())),
        }
    }

    pub fn evaluate(&self, data: &FlowDataset) -> Result<MetricsReport> {
        let pred = self.predict_labels(data.x.view())?;
        compute_metrics(&data.y, &pred, &self.label_set)
    }

    /// Continue gradient training on `(x, y)` for `epochs` epochs. Classical
    /// models are refitted from scratch on the data instead.
    pub fn fine_tune(&mut self, x: ArrayView2<f64>, y: &[usize], epochs: usize, seed: u64) -> Result<()> {
        self.check_width(x)?;
        match (&mut self.model, &self.training) {
            (Model::Mlp(net), TrainingRecord::Gradient(cfg)) => {
                let cfg = TrainingConfig {
                    epochs,
                    seed,
                    ..cfg.clone()
                };
                fit_mlp(net, x, y, &cfg)?;
                Ok(())
            }
            (_, TrainingRecord::Classical(cfg)) => {
                let refit = fit_classical(self.spec.family, x, y, self.spec.n_classes, cfg)?;
                self.model = refit;
                Ok(())
            }
            _ => Err(Error::config("model and training record disagree")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Classifier for TrainedClassifier {
    fn n_features(&self) -> usize {
        match &self.model {
            Model::Mlp(m) => m.input_width(),
            Model::DecisionTree(_) | Model::Svm(_) | Model::Knn(_) => self.spec.layer_widths[0],
        }
    }

    fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    fn predict_probs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        Ok(match &self.model {
            Model::Mlp(m) => softmax_rows(m.forward(x).view()),
            Model::DecisionTree(t) => t.predict_probs(x),
            Model::Svm(s) => s.predict_probs(x),
            Model::Knn(k) => k.predict_probs(x),
        })
    }
}

impl Differentiable for TrainedClassifier {
    fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.model {
            Model::Mlp(m) => m.forward(x),
            _ => panic!("logits requested from a non-differentiable model"),
        }
    }

    fn logits_and_input_grad(
        &self,
        x: ArrayView2<f64>,
        loss_grad: &mut dyn FnMut(ArrayView2<f64>) -> Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let Model::Mlp(m) = &self.model else {
            panic!("input gradient requested from a non-differentiable model");
        };
        let (logits, cache) = m.forward_cached(x);
        let g = loss_grad(logits.view());
        let (_, input_grad) = m.backward(&cache, g.view());
        (logits, input_grad)
    }
}

fn check_training_data(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::UnknownLabel(c.to_string()));
    }
    Ok(())
}

/// Minibatch Adam on mean cross-entropy. Returns the mean loss per epoch.
pub fn fit_mlp(net: &mut Mlp, x: ArrayView2<f64>, y: &[usize], cfg: &TrainingConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_training_data(x, y, net.output_width())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamSettings::new(cfg.learning_rate, cfg.beta1, cfg.beta2));
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (out, cache) = net.forward_train(xb.view(), &mut rng);
            let (loss, _, g) = cross_entropy_with_grad(out.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("cross-entropy {loss} on a batch of {}", batch.len()),
                });
            }
            total += loss * batch.len() as f64;
            let (mut grads, _) = net.backward(&cache, g.view());
            if cfg.l2 > 0.0 {
                for (lg, layer) in grads.layers.iter_mut().zip(&net.layers) {
                    lg.weights.scaled_add(cfg.l2, &layer.weights);
                }
            }
            adam.step(net.param_slices_mut(), grads.slices());
        }
        history.push(total / y.len().max(1) as f64);
    }
    Ok(history)
}

fn build_mlp(spec: &ClassifierSpec, seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d5_0e7);
    MlpBuilder::new(&spec.layer_widths)
        .hidden_activation(Activation::Relu)
        .batch_norm(spec.batch_norm)
        .dropout(spec.dropout_rate)
        .build(&mut rng)
}

/// Train an MLP-family (or logistic-regression) classifier. Metrics on
/// `test` are attached when it is given.
pub fn train_classifier(
    spec: &ClassifierSpec,
    train: &FlowDataset,
    config: &TrainingConfig,
    test: Option<&FlowDataset>,
) -> Result<TrainedClassifier> {
    if !(spec.family.is_mlp() || spec.family == ModelFamily::LogisticRegression) {
        return Err(Error::config(format!("{} is not trained by gradient descent", spec.family)));
    }
    spec.validate(train.n_features())?;
    if spec.n_classes != train.label_set.len() {
        return Err(Error::LengthMismatch {
            expected: train.label_set.len(),
            actual: spec.n_classes,
        });
    }
    let mut net = build_mlp(spec, config.seed);
    fit_mlp(&mut net, train.x.view(), &train.y, config)?;
    let mut model = TrainedClassifier {
        spec: spec.clone(),
        model: Model::Mlp(net),
        label_set: train.label_set.clone(),
        training: TrainingRecord::Gradient(config.clone()),
        metrics_on_test: None,
    };
    if let Some(t) = test {
        model.metrics_on_test = Some(model.evaluate(t)?);
    }
    Ok(model)
}

fn fit_classical(
    family: ModelFamily,
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &ClassicalConfig,
) -> Result<Model> {
    Ok(match family {
        ModelFamily::DecisionTree => Model::DecisionTree(DecisionTree::fit(x, y, n_classes, &cfg.decision_tree)),
        ModelFamily::Svm => Model::Svm(LinearSvm::fit(x, y, n_classes, &cfg.svm, cfg.seed)),
        ModelFamily::Knn => Model::Knn(Knn::fit(x, y, n_classes, &cfg.knn)),
        ModelFamily::LogisticRegression => {
            let spec = ClassifierSpec {
                family,
                layer_widths: vec![x.ncols(), n_classes],
                dropout_rate: 0.0,
                batch_norm: false,
                n_classes,
            };
            let mut net = build_mlp(&spec, cfg.seed);
            fit_mlp(&mut net, x, y, &logistic_training(cfg))?;
            Model::Mlp(net)
        }
        other => return Err(Error::config(format!("{other} is not a classical model"))),
    })
}

fn logistic_training(cfg: &ClassicalConfig) -> TrainingConfig {
    let lr = &cfg.logistic_regression;
    TrainingConfig {
        l2: lr.l2,
        ..TrainingConfig::new(lr.batch_size, lr.learning_rate, lr.epochs, cfg.seed)
    }
}

/// Train one of the classical models on `train`.
pub fn train_classical(
    family: ModelFamily,
    train: &FlowDataset,
    config: &ClassicalConfig,
    test: Option<&FlowDataset>,
) -> Result<TrainedClassifier> {
    config.validate()?;
    check_training_data(train.x.view(), &train.y, train.label_set.len())?;
    let present = train.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::SingleClass(format!("{family} needs at least two classes")));
    }
    let n_classes = train.label_set.len();
    let model = fit_classical(family, train.x.view(), &train.y, n_classes, config)?;
    let layer_widths = match family {
        ModelFamily::LogisticRegression => vec![train.n_features(), n_classes],
        _ => vec![train.n_features()],
    };
    let mut out = TrainedClassifier {
        spec: ClassifierSpec {
            family,
            layer_widths,
            dropout_rate: 0.0,
            batch_norm: false,
            n_classes,
        },
        model,
        label_set: train.label_set.clone(),
        training: match family {
            ModelFamily::LogisticRegression => TrainingRecord::Gradient(logistic_training(config)),
            _ => TrainingRecord::Classical(config.clone()),
        },
        metrics_on_test: None,
    };
    if let Some(t) = test {
        out.metrics_on_test = Some(out.evaluate(t)?);
    }
    Ok(out)
}

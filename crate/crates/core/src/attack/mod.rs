//! Constrained adversarial flow generator: a generator conditioned on the
//! attack flow, a critic, the three-term generator loss and the training
//! loop with both constraint enforcements applied inside it.

mod losses;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use losses::{
    adversarial_loss, adversarial_loss_with_grad, critic_input_gradients, critic_loss, discriminator_log_loss,
    gradient_penalty, gradient_penalty_with_grad, l2_norms, perturbation_loss, perturbation_loss_with_grad,
    CriticLoss,
};

use crate::constraints::{enforce_batch, ConstraintProfile};
use crate::error::{Error, Result};
use crate::nids::Differentiable;
use crate::nn::{argmax_rows, log_sigmoid, sigmoid, Activation, Adam, AdamSettings, Mlp, MlpBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanVariant {
    WganGp,
    OriginalGan,
}

impl GanVariant {
    pub fn name(self) -> &'static str {
        match self {
            GanVariant::WganGp => "wgan-gp",
            GanVariant::OriginalGan => "original-gan",
        }
    }
}

impl fmt::Display for GanVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GanVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wgan-gp" => Ok(GanVariant::WganGp),
            "original-gan" => Ok(GanVariant::OriginalGan),
            other => Err(Error::config(format!("unknown gan variant `{other}`"))),
        }
    }
}

fn d_alpha() -> f64 {
    0.1
}
fn d_beta() -> f64 {
    0.2
}
fn d_epsilon() -> f64 {
    0.3
}
fn d_lambda() -> f64 {
    10.0
}
fn d_optimizer() -> AdamSettings {
    AdamSettings::new(1e-3, 0.5, 0.9)
}
fn d_epochs() -> usize {
    800
}
fn d_batch() -> usize {
    64
}
fn d_one() -> usize {
    1
}
fn d_variant() -> GanVariant {
    GanVariant::WganGp
}
fn d_threshold() -> f64 {
    1.0
}
fn d_slope() -> f64 {
    0.2
}
fn d_output_scale() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Weight of the GAN term.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    /// Weight of the perturbation hinge.
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_lambda")]
    pub lambda_gp: f64,
    /// Shared by generator and critic.
    #[serde(default = "d_optimizer")]
    pub optimizer: AdamSettings,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_one")]
    pub critic_steps: usize,
    #[serde(default = "d_variant")]
    pub gan_variant: GanVariant,
    /// Class the adversarial flows should be assigned; the dataset's benign
    /// class when absent.
    #[serde(default)]
    pub target_class: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Stop once this fraction of the attack set evades.
    #[serde(default = "d_threshold")]
    pub evasion_threshold: f64,
    /// Generator hidden widths; `[n, n/2]` when absent.
    #[serde(default)]
    pub generator_hidden: Option<Vec<usize>>,
    /// Critic hidden widths; `[n, n/2]` when absent.
    #[serde(default)]
    pub critic_hidden: Option<Vec<usize>>,
    #[serde(default = "d_slope")]
    pub leaky_slope: f64,
    /// Initial generator output weights are scaled by this, so training
    /// starts from small perturbations.
    #[serde(default = "d_output_scale")]
    pub generator_output_init: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        toml::from_str("").expect("all attack fields have defaults")
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.epsilon > 0.0 && self.lambda_gp > 0.0) {
            return Err(Error::config("alpha, beta, epsilon and lambda_gp must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.critic_steps == 0 {
            return Err(Error::config("epochs, batch_size and critic_steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.evasion_threshold) {
            return Err(Error::config("evasion_threshold must lie in [0,1]"));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::config("optimizer learning rate must be positive"));
        }
        Ok(())
    }

    fn hidden(n: usize, given: &Option<Vec<usize>>) -> Vec<usize> {
        given.clone().unwrap_or_else(|| vec![n, n.div_ceil(2)])
    }

    pub fn build_generator<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Mlp {
        let mut widths = vec![n];
        widths.extend(Self::hidden(n, &self.generator_hidden));
        widths.push(n);
        let mut g = MlpBuilder::new(&widths)
            .hidden_activation(Activation::LeakyRelu(self.leaky_slope))
            .output_activation(Activation::Tanh)
            .build(rng);
        let last = g.layers.last_mut().expect("generator has layers");
        last.weights.mapv_inplace(|w| w * self.generator_output_init);
        g
    }

    pub fn build_critic<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Mlp {
        let mut widths = vec![n];
        widths.extend(Self::hidden(n, &self.critic_hidden));
        widths.push(1);
        MlpBuilder::new(&widths)
            .hidden_activation(Activation::LeakyRelu(self.leaky_slope))
            .build(rng)
    }
}

/// Raw generator output `G(x)` masked, added to `x` and clipped; masked
/// columns are copied from `x`.
pub fn generate_adversarial(generator: &Mlp, x: ArrayView2<f64>, profile: &ConstraintProfile) -> Result<Array2<f64>> {
    if generator.input_width() != profile.width() || generator.output_width() != profile.width() {
        return Err(Error::LengthMismatch {
            expected: profile.width(),
            actual: generator.output_width(),
        });
    }
    let delta = masked(generator.forward(x), profile);
    Ok(enforce_batch(x, delta.view(), profile)?.0)
}

fn masked(mut g: Array2<f64>, profile: &ConstraintProfile) -> Array2<f64> {
    for (j, mut col) in g.axis_iter_mut(Axis(1)).enumerate() {
        if !profile.mask.is_open(j) {
            col.fill(0.0);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    /// Critic objective (descended), batch mean.
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub adversarial_loss: f64,
    pub gan_loss: f64,
    pub perturbation_loss: f64,
    /// Fraction of the attack set labelled as the target after the epoch.
    pub evasion_rate: f64,
    pub mean_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackArtifacts {
    pub generator: Mlp,
    pub critic: Mlp,
    pub config: AttackConfig,
    /// TOML form of the profile used.
    pub profile: String,
    pub target_class: usize,
    pub initial_evasion_rate: f64,
    pub trace: Vec<TraceEntry>,
}

impl AttackArtifacts {
    pub fn final_evasion_rate(&self) -> f64 {
        self.trace.last().map_or(self.initial_evasion_rate, |t| t.evasion_rate)
    }

    pub fn profile(&self) -> Result<ConstraintProfile> {
        ConstraintProfile::from_toml(&self.profile)
    }

    pub fn generate(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        generate_adversarial(&self.generator, x, &self.profile()?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One JSON object per trace entry.
    pub fn write_trace_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for t in &self.trace {
            serde_json::to_writer(&mut out, t)?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

fn evasion_rate(classifier: &dyn Differentiable, x_star: ArrayView2<f64>, target: usize) -> f64 {
    if x_star.nrows() == 0 {
        return 0.0;
    }
    let labels = argmax_rows(classifier.logits(x_star).view());
    labels.iter().filter(|&&l| l == target).count() as f64 / labels.len() as f64
}

fn non_finite(epoch: usize, what: &str, value: f64, trace: &[TraceEntry]) -> Error {
    let last = trace
        .last()
        .map(|t| serde_json::to_string(t).unwrap_or_default())
        .unwrap_or_else(|| "none".into());
    Error::NonFiniteLoss {
        epoch,
        detail: format!("{what} = {value}; last trace entry: {last}"),
    }
}

/// Train a generator against `classifier` (which is never updated) on the
/// rows of `attack_flows`.
pub fn train_nidsgan(
    config: &AttackConfig,
    attack_flows: ArrayView2<f64>,
    classifier: &dyn Differentiable,
    target: usize,
    profile: &ConstraintProfile,
) -> Result<AttackArtifacts> {
    config.validate()?;
    let n = profile.width();
    if attack_flows.nrows() == 0 {
        return Err(Error::EmptyClass(profile.attack_class.clone()));
    }
    if attack_flows.ncols() != n || classifier.n_features() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: if attack_flows.ncols() != n { attack_flows.ncols() } else { classifier.n_features() },
        });
    }
    if target >= classifier.n_classes() {
        return Err(Error::UnknownLabel(target.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generator = config.build_generator(n, &mut rng);
    let mut critic = config.build_critic(n, &mut rng);
    let mut g_opt = Adam::new(config.optimizer);
    let mut d_opt = Adam::new(config.optimizer);
    let mut trace = Vec::new();

    let initial = evasion_rate(
        classifier,
        generate_adversarial(&generator, attack_flows, profile)?.view(),
        target,
    );
    let mut artifacts = AttackArtifacts {
        generator: generator.clone(),
        critic: critic.clone(),
        config: config.clone(),
        profile: profile.to_toml()?,
        target_class: target,
        initial_evasion_rate: initial,
        trace: Vec::new(),
    };
    if initial >= config.evasion_threshold {
        return Ok(artifacts);
    }

    let mut order: Vec<usize> = (0..attack_flows.nrows()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 5];
        let mut batches = 0.0;
        for idx in order.chunks(config.batch_size) {
            let x = attack_flows.select(Axis(0), idx);
            let rows = x.nrows();

            let mut critic_obj = 0.0;
            for _ in 0..config.critic_steps {
                let x_star = generate_adversarial(&generator, x.view(), profile)?;
                let (loss, grads) = critic_step(config, &critic, x.view(), x_star.view(), &mut rng)?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(non_finite(epoch, "critic loss", loss, &trace));
                }
                critic_obj = loss;
                d_opt.step(critic.param_slices_mut(), grads.slices());
            }

            // Generator step.
            let (raw, cache) = generator.forward_cached(x.view());
            let delta = masked(raw, profile);
            let (x_star, pass) = enforce_batch(x.view(), delta.view(), profile)?;
            let (adv, adv_grad, _) = adversarial_loss_with_grad(classifier, x_star.view(), target);
            let (gan, gan_grad) = generator_gan_term(config.gan_variant, &critic, x_star.view())?;
            let (pert, pert_grad) = perturbation_loss_with_grad(delta.view(), config.epsilon);
            let total = adv + config.alpha * gan + config.beta * pert;
            if !total.is_finite() {
                return Err(non_finite(epoch, "generator loss", total, &trace));
            }
            let mut g_delta = (&adv_grad + &(gan_grad * config.alpha)) * &pass;
            g_delta.scaled_add(config.beta, &pert_grad);
            let g_raw = masked(g_delta, profile);
            let (g_grads, _) = generator.backward(&cache, g_raw.view());
            if !g_grads.is_finite() {
                return Err(non_finite(epoch, "generator gradient", f64::NAN, &trace));
            }
            g_opt.step(generator.param_slices_mut(), g_grads.slices());

            let w = rows as f64;
            for (s, v) in sums.iter_mut().zip([critic_obj, total, adv, gan, pert]) {
                *s += v * w;
            }
            batches += w;
        }
        let x_star = generate_adversarial(&generator, attack_flows, profile)?;
        let rate = evasion_rate(classifier, x_star.view(), target);
        let mean_l2 = l2_norms((&x_star - &attack_flows).view()).mean().unwrap_or(0.0);
        trace.push(TraceEntry {
            epoch: epoch + 1,
            critic_loss: sums[0] / batches,
            generator_loss: sums[1] / batches,
            adversarial_loss: sums[2] / batches,
            gan_loss: sums[3] / batches,
            perturbation_loss: sums[4] / batches,
            evasion_rate: rate,
            mean_l2,
        });
        log::debug!("epoch {} evasion {rate:.4} mean_l2 {mean_l2:.4}", epoch + 1);
        if rate >= config.evasion_threshold {
            break;
        }
    }
    artifacts.generator = generator;
    artifacts.critic = critic;
    artifacts.trace = trace;
    Ok(artifacts)
}

/// One critic update's objective and parameter gradients.
fn critic_step<R: Rng + ?Sized>(
    config: &AttackConfig,
    critic: &Mlp,
    x: ArrayView2<f64>,
    x_star: ArrayView2<f64>,
    rng: &mut R,
) -> Result<(f64, crate::nn::Gradients)> {
    let rows = x.nrows();
    let b = rows as f64;
    let (real, real_cache) = critic.forward_cached(x);
    let (fake, fake_cache) = critic.forward_cached(x_star);
    match config.gan_variant {
        GanVariant::WganGp => {
            let mut x_hat = x_star.to_owned();
            for (i, mut row) in x_hat.axis_iter_mut(Axis(0)).enumerate() {
                let sigma: f64 = rng.random();
                row.zip_mut_with(&x.row(i), |h, &xr| *h = sigma * xr + (1.0 - sigma) * *h);
            }
            let (gp, mut grads) = gradient_penalty_with_grad(critic, x_hat.view(), config.lambda_gp)?;
            let (g_real, _) = critic.backward(&real_cache, Array2::from_elem((rows, 1), -1.0 / b).view());
            let (g_fake, _) = critic.backward(&fake_cache, Array2::from_elem((rows, 1), 1.0 / b).view());
            grads.add_scaled(&g_real, 1.0);
            grads.add_scaled(&g_fake, 1.0);
            Ok((fake.sum() / b - real.sum() / b + gp, grads))
        }
        GanVariant::OriginalGan => {
            let loss = -(real.iter().map(|&z| log_sigmoid(z)).sum::<f64>()
                + fake.iter().map(|&z| log_sigmoid(-z)).sum::<f64>())
                / b;
            let (gr, gf) = losses::log_loss_logit_grads(&real, &fake);
            let (mut grads, _) = critic.backward(&real_cache, gr.view());
            let (g_fake, _) = critic.backward(&fake_cache, gf.view());
            grads.add_scaled(&g_fake, 1.0);
            Ok((loss, grads))
        }
    }
}

/// GAN term of the generator loss and its gradient with respect to `x*`:
/// `-mean D(x*)` for WGAN-GP, `-mean log sigmoid(D(x*))` for the original
/// GAN.
fn generator_gan_term(variant: GanVariant, critic: &Mlp, x_star: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let b = x_star.nrows().max(1) as f64;
    let (out, cache) = critic.forward_cached(x_star);
    let (value, grad_out) = match variant {
        GanVariant::WganGp => (-out.sum() / b, Array2::from_elem(out.raw_dim(), -1.0 / b)),
        GanVariant::OriginalGan => (
            -out.iter().map(|&z| log_sigmoid(z)).sum::<f64>() / b,
            out.mapv(|z| -(1.0 - sigmoid(z)) / b),
        ),
    };
    let (_, input_grad) = critic.backward(&cache, grad_out.view());
    Ok((value, input_grad))
}

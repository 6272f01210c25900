use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nids::Differentiable;
use crate::nn::{cross_entropy_with_grad, log_sigmoid, sigmoid, Gradients, Mlp};

/// Mean hinge `max(0, ||d||_2 - epsilon)` over the rows of `delta`.
pub fn perturbation_loss(delta: ArrayView2<f64>, epsilon: f64) -> f64 {
    perturbation_loss_with_grad(delta, epsilon).0
}

pub fn perturbation_loss_with_grad(delta: ArrayView2<f64>, epsilon: f64) -> (f64, Array2<f64>) {
    let b = delta.nrows().max(1) as f64;
    let mut grad = Array2::zeros(delta.raw_dim());
    let mut total = 0.0;
    for (i, row) in delta.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > epsilon {
            total += norm - epsilon;
            grad.row_mut(i).assign(&(&row / (norm * b)));
        }
    }
    (total / b, grad)
}

/// Mean cross-entropy of `classifier(x_star)` against `target`.
pub fn adversarial_loss(classifier: &dyn Differentiable, x_star: ArrayView2<f64>, target: usize) -> f64 {
    let logits = classifier.logits(x_star);
    let t = vec![target; x_star.nrows()];
    cross_entropy_with_grad(logits.view(), &t).0
}

/// Loss, input gradient and the logits the loss was computed from.
pub fn adversarial_loss_with_grad(
    classifier: &dyn Differentiable,
    x_star: ArrayView2<f64>,
    target: usize,
) -> (f64, Array2<f64>, Array2<f64>) {
    let t = vec![target; x_star.nrows()];
    let mut loss = 0.0;
    let (logits, grad) = classifier.logits_and_input_grad(x_star, &mut |l| {
        let (mean, _, g) = cross_entropy_with_grad(l, &t);
        loss = mean;
        g
    });
    (loss, grad, logits)
}

fn check_critic(critic: &Mlp) -> Result<()> {
    if critic.output_width() != 1 {
        return Err(Error::config("critic must have a single output"));
    }
    for l in &critic.layers {
        if l.batch_norm.is_some() || l.dropout > 0.0 || !l.activation.is_piecewise_linear() {
            return Err(Error::config(
                "gradient penalty needs a critic with piecewise-linear activations and no batch norm or dropout",
            ));
        }
    }
    Ok(())
}

/// Per-layer activation slopes `S_l` at `x`.
fn slopes(critic: &Mlp, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let (_, cache) = critic.forward_cached(x);
    critic
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let act = l.activation;
            cache.pre_activation(i).mapv(|z| act.derivative(z, act.apply(z)))
        })
        .collect()
}

/// Input gradients of a piecewise-linear critic, plus the `V_l = S_l * U_l`
/// terms reused by the penalty's parameter gradient.
fn input_grad_chain(critic: &Mlp, s: &[Array2<f64>], rows: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
    let mut u = Array2::ones((rows, 1));
    let mut v = vec![Array2::zeros((0, 0)); critic.layers.len()];
    for (l, layer) in critic.layers.iter().enumerate().rev() {
        let vl = &s[l] * &u;
        u = vl.dot(&layer.weights.t());
        v[l] = vl;
    }
    (u, v)
}

/// `dD/dx` for every row of `x`.
pub fn critic_input_gradients(critic: &Mlp, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_critic(critic)?;
    let s = slopes(critic, x);
    Ok(input_grad_chain(critic, &s, x.nrows()).0)
}

/// Mean of `lambda * (||grad_x D(x_hat)||_2 - 1)^2`.
pub fn gradient_penalty(critic: &Mlp, x_hat: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    let g = critic_input_gradients(critic, x_hat)?;
    let b = x_hat.nrows().max(1) as f64;
    Ok(g.axis_iter(Axis(0))
        .map(|r| (r.dot(&r).sqrt() - 1.0).powi(2))
        .sum::<f64>()
        * lambda
        / b)
}

/// Penalty value and its gradient with respect to the critic parameters.
/// Bias and (absent) normalization parameters get zero gradient.
pub fn gradient_penalty_with_grad(critic: &Mlp, x_hat: ArrayView2<f64>, lambda: f64) -> Result<(f64, Gradients)> {
    check_critic(critic)?;
    let rows = x_hat.nrows();
    let b = rows.max(1) as f64;
    let s = slopes(critic, x_hat);
    let (g, v) = input_grad_chain(critic, &s, rows);
    let mut value = 0.0;
    let mut r = Array2::zeros(g.raw_dim());
    for (i, row) in g.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        value += (norm - 1.0).powi(2);
        if norm > 0.0 {
            r.row_mut(i).assign(&(&row * (2.0 * lambda * (norm - 1.0) / (b * norm))));
        }
    }
    let mut grads = Gradients::zeros_like(critic);
    for (l, layer) in critic.layers.iter().enumerate() {
        grads.layers[l].weights = r.t().dot(&v[l]);
        if l + 1 < critic.layers.len() {
            r = &s[l] * &r.dot(&layer.weights);
        }
    }
    Ok((value * lambda / b, grads))
}

/// Critic loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss {
    /// `mean D(x) - mean D(x*)`
    pub wasserstein: f64,
    pub penalty: f64,
}

impl CriticLoss {
    /// `mean D(x) - mean D(x*) + penalty`.
    pub fn total(&self) -> f64 {
        self.wasserstein + self.penalty
    }

    /// The quantity the critic descends: `mean D(x*) - mean D(x) + penalty`.
    pub fn objective(&self) -> f64 {
        self.penalty - self.wasserstein
    }
}

fn mean_score(critic: &Mlp, x: ArrayView2<f64>) -> f64 {
    let out = critic.forward(x);
    out.sum() / x.nrows().max(1) as f64
}

pub fn critic_loss(
    critic: &Mlp,
    x: ArrayView2<f64>,
    x_star: ArrayView2<f64>,
    x_hat: ArrayView2<f64>,
    lambda: f64,
) -> Result<CriticLoss> {
    if x.dim() != x_star.dim() || x.dim() != x_hat.dim() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: x_star.nrows().min(x_hat.nrows()),
        });
    }
    Ok(CriticLoss {
        wasserstein: mean_score(critic, x) - mean_score(critic, x_star),
        penalty: gradient_penalty(critic, x_hat, lambda)?,
    })
}

/// Standard discriminator log-loss on logits: real rows labelled 1,
/// adversarial rows labelled 0.
pub fn discriminator_log_loss(disc: &Mlp, x: ArrayView2<f64>, x_star: ArrayView2<f64>) -> f64 {
    let real = disc.forward(x);
    let fake = disc.forward(x_star);
    let n = x.nrows().max(1) as f64;
    -(real.iter().map(|&z| log_sigmoid(z)).sum::<f64>() + fake.iter().map(|&z| log_sigmoid(-z)).sum::<f64>()) / n
}

/// Gradient of [`discriminator_log_loss`] with respect to the logits.
pub(crate) fn log_loss_logit_grads(real: &Array2<f64>, fake: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = real.nrows().max(1) as f64;
    (
        real.mapv(|z| -(1.0 - sigmoid(z)) / n),
        fake.mapv(|z| sigmoid(z) / n),
    )
}

/// Row norms.
pub fn l2_norms(delta: ArrayView2<f64>) -> Array1<f64> {
    delta.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpBuilder};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hinge_cases() {
        assert_eq!(perturbation_loss(array![[0.2, 0.0]].view(), 0.3), 0.0);
        assert!((perturbation_loss(array![[0.3, 0.4]].view(), 0.3) - 0.2).abs() < 1e-15);
        assert_eq!(perturbation_loss(array![[0.0, 0.0]].view(), 0.3), 0.0);
    }

    fn critic(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpBuilder::new(&[4, 6, 3, 1])
            .hidden_activation(Activation::LeakyRelu(0.2))
            .build(&mut rng)
    }

    #[test]
    fn penalty_parameter_gradient_matches_finite_differences() {
        let net = critic(2);
        let x = array![[0.1, 0.5, 0.9, 0.3], [0.7, 0.2, 0.4, 0.6], [0.3, 0.3, 0.8, 0.1]];
        let (_, grads) = gradient_penalty_with_grad(&net, x.view(), 10.0).unwrap();
        let h = 1e-6;
        for l in 0..net.layers.len() {
            for idx in 0..net.layers[l].weights.len() {
                let (i, j) = (idx / net.layers[l].weights.ncols(), idx % net.layers[l].weights.ncols());
                let mut p = net.clone();
                p.layers[l].weights[[i, j]] += h;
                let mut m = net.clone();
                m.layers[l].weights[[i, j]] -= h;
                let fd = (gradient_penalty(&p, x.view(), 10.0).unwrap()
                    - gradient_penalty(&m, x.view(), 10.0).unwrap())
                    / (2.0 * h);
                let an = grads.layers[l].weights[[i, j]];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "layer {l} ({i},{j}): {fd} vs {an}");
            }
        }
    }

    #[test]
    fn batch_norm_critic_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpBuilder::new(&[3, 4, 1]).batch_norm(true).build(&mut rng);
        assert!(gradient_penalty(&net, array![[0.0, 0.0, 0.0]].view(), 10.0).is_err());
    }
}

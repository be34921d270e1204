use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cross_entropy, softmax_in_place, Mlp, MlpSpec};
use crate::{Error, Result};

/// Mini-batch Adam settings. Defaults: lr 0.01, 100 epochs, batch 27 and the
/// usual Adam constants.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_epochs: 100,
            batch_size: 27,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Classification examples with inputs stored row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != dim * labels.len() {
            return Err(Error::invalid(format!(
                "{} input values do not form {} rows of width {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, inputs, labels })
    }

    pub fn push(&mut self, x: &[f64], label: usize) {
        assert_eq!(x.len(), self.dim, "sample width");
        self.inputs.extend_from_slice(x);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub mlp: Mlp,
    /// Mean loss over the whole set before the first update.
    pub initial_loss: f64,
    /// Mean per-sample loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh network on `samples` with shuffled mini-batch Adam.
///
/// Runs the full `max_epochs` budget; samples are reshuffled every epoch
/// from a generator keyed by `cfg.seed`.
pub fn train(spec: &MlpSpec, samples: &Samples, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_from(Mlp::init(spec.clone(), cfg.seed), samples, cfg)
}

/// Like [`train`] but continues from the given parameters.
pub fn train_from(mut mlp: Mlp, samples: &Samples, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let spec = mlp.spec().clone();
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if samples.dim() != spec.input_dim() {
        return Err(Error::invalid(format!(
            "samples have width {}, network expects {}",
            samples.dim(),
            spec.input_dim()
        )));
    }
    let classes = spec.classes();
    if let Some(bad) = (0..samples.len()).map(|i| samples.label(i)).find(|&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(crate::rng::mix(cfg.seed, 0x5348_5546));
    let mut adam = Adam::new(spec.num_params(), cfg);
    let mut grad = vec![0.0; spec.num_params()];
    let mut tape = mlp.new_tape();
    let mut probs = vec![0.0; classes];
    let mut order: Vec<usize> = (0..samples.len()).collect();

    let initial_loss = mean_loss(&mlp, samples)?;
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let logits = mlp.forward_tape(samples.input(i), &mut tape)?;
                probs.copy_from_slice(logits);
                softmax_in_place(&mut probs);
                let label = samples.label(i);
                total += cross_entropy(&probs, label)?;
                probs[label] -= 1.0;
                mlp.backward(&mut tape, &probs, &mut grad, None);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(mlp.params_mut(), &grad);
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    Ok(TrainOutcome {
        mlp,
        initial_loss,
        epoch_losses,
    })
}

/// Mean floored cross-entropy of `mlp` over `samples`.
pub(crate) fn mean_loss(mlp: &Mlp, samples: &Samples) -> Result<f64> {
    let mut tape = mlp.new_tape();
    let mut total = 0.0;
    for i in 0..samples.len() {
        let mut p = mlp.forward_tape(samples.input(i), &mut tape)?.to_vec();
        softmax_in_place(&mut p);
        total += cross_entropy(&p, samples.label(i))?;
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn quick(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn empty_set_is_rejected() {
        let spec = MlpSpec::linear(1, 2).unwrap();
        assert!(matches!(
            train(&spec, &Samples::new(1), &TrainConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_class_fit_saturates() {
        let spec = MlpSpec::new(vec![1, 8, 3], vec![Activation::Relu]).unwrap();
        let mut s = Samples::new(1);
        for i in 0..200 {
            s.push(&[(i as f64 / 20.0) - 5.0], 2);
        }
        let out = train(&spec, &s, &quick(80, 4)).unwrap();
        for x in [-5.0, -1.0, 0.0, 2.5, 4.9] {
            let p = out.mlp.forward(&[x]).unwrap();
            assert!(p[2] >= 0.99, "p = {p:?} at {x}");
        }
    }

    #[test]
    fn separable_set_loss_decreases() {
        let spec = MlpSpec::new(vec![2, 6, 2], vec![Activation::Sigmoid]).unwrap();
        let mut s = Samples::new(2);
        for i in 0..100 {
            let t = i as f64 / 100.0;
            s.push(&[t + 0.1, 1.0 - t], 0);
            s.push(&[-t - 0.1, t - 1.0], 1);
        }
        let out = train(&spec, &s, &quick(20, 1)).unwrap();
        let last = *out.epoch_losses.last().unwrap();
        assert!(last < out.epoch_losses[0]);
        assert!(last < out.initial_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = MlpSpec::new(vec![1, 5, 2], vec![Activation::Relu]).unwrap();
        let mut s = Samples::new(1);
        for i in 0..60 {
            s.push(&[i as f64 / 30.0 - 1.0], (i % 3 == 0) as usize);
        }
        let a = train(&spec, &s, &quick(5, 9)).unwrap();
        let b = train(&spec, &s, &quick(5, 9)).unwrap();
        assert_eq!(a.mlp.params(), b.mlp.params());
        let c = train(&spec, &s, &quick(5, 10)).unwrap();
        assert_ne!(a.mlp.params(), c.mlp.params());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut params = vec![0.3, -1.2, 4.0];
        let before = params.clone();
        let mut adam = Adam::new(3, &TrainConfig::default());
        adam.step(&mut params, &[0.0; 3]);
        assert_eq!(params, before);
    }
}

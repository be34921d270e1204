//! Dense feed-forward classifiers with a softmax head.
//!
//! Parameters live in one flat vector. Layer `i` contributes its weight
//! matrix (`out x in`, row-major) followed by its bias vector, in layer
//! order. The optimizer, the gradient check and the model files all rely on
//! this layout.

mod gradcheck;
pub(crate) mod io;
mod train;

pub use gradcheck::{gradient_check, relative_error};
pub use io::{read_mlp, write_mlp};
pub use train::{train, train_from, Adam, Samples, TrainConfig, TrainOutcome};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Probability floor applied inside losses.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Layer widths and hidden activations. The last width is the class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("an MLP needs an input and an output width"));
        }
        if layer_dims[1..].iter().any(|&d| d == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if activations.len() != layer_dims.len() - 2 {
            return Err(Error::invalid(format!(
                "{} hidden layers need {} activations, got {}",
                layer_dims.len() - 2,
                layer_dims.len() - 2,
                activations.len()
            )));
        }
        Ok(Self {
            layer_dims,
            activations,
        })
    }

    /// Softmax regression, no hidden layers.
    pub fn linear(inputs: usize, classes: usize) -> Result<Self> {
        Self::new(vec![inputs, classes], Vec::new())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers() + 1);
        let mut acc = 0;
        offsets.push(0);
        for w in self.layer_dims.windows(2) {
            acc += w[1] * (w[0] + 1);
            offsets.push(acc);
        }
        offsets
    }
}

/// Flat parameter vector laid out as described in the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams(pub Vec<f64>);

/// A network: architecture plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: MlpParams,
    offsets: Vec<usize>,
}

impl Mlp {
    pub fn from_params(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        if params.0.len() != spec.num_params() {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                spec.num_params(),
                params.0.len()
            )));
        }
        let offsets = spec.layer_offsets();
        Ok(Self {
            spec,
            params,
            offsets,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.num_params();
        Self::from_params(spec, MlpParams(vec![0.0; n])).expect("sized from spec")
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mlp = Self::zeros(spec);
        for layer in 0..mlp.spec.num_layers() {
            let fan_in = mlp.spec.layer_dims[layer].max(1);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let range = mlp.offsets[layer]..mlp.offsets[layer + 1];
            for p in &mut mlp.params.0[range] {
                *p = rng.random_range(-bound..bound);
            }
        }
        mlp
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params.0
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params.0
    }

    pub fn into_params(self) -> MlpParams {
        self.params
    }

    fn weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.spec.layer_dims[layer], self.spec.layer_dims[layer + 1]);
        let start = self.offsets[layer];
        let w = &self.params.0[start..start + n_in * n_out];
        let b = &self.params.0[start + n_in * n_out..self.offsets[layer + 1]];
        (w, b)
    }

    pub fn new_tape(&self) -> Tape {
        Tape {
            pre: self.spec.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            post: self.spec.layer_dims.iter().map(|&d| vec![0.0; d]).collect(),
            delta: self.spec.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            scratch: vec![0.0; *self.spec.layer_dims.iter().max().unwrap()],
        }
    }

    /// Forward pass recording activations; returns the logits.
    pub fn forward_tape<'t>(&self, x: &[f64], tape: &'t mut Tape) -> Result<&'t [f64]> {
        self.check_input(x)?;
        tape.post[0].copy_from_slice(x);
        let last = self.spec.num_layers() - 1;
        for layer in 0..=last {
            let (w, b) = self.weights(layer);
            let n_in = self.spec.layer_dims[layer];
            let (inputs, rest) = tape.post.split_at_mut(layer + 1);
            let input = &inputs[layer];
            let pre = &mut tape.pre[layer];
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *z = b[o] + dot(row, input);
            }
            let out = &mut rest[0];
            if layer < last {
                let act = self.spec.activations[layer];
                for (a, &z) in out.iter_mut().zip(pre.iter()) {
                    *a = act.apply(z);
                }
            } else {
                out.copy_from_slice(pre);
            }
        }
        Ok(&tape.post[last + 1])
    }

    /// Back-propagates `dlogits` through the pass recorded in `tape`.
    ///
    /// Parameter gradients are added into `grad` (same layout as the
    /// parameters). When `dx` is given it receives the input gradient.
    pub fn backward(&self, tape: &mut Tape, dlogits: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let last = self.spec.num_layers() - 1;
        tape.delta[last].copy_from_slice(dlogits);
        for layer in (0..=last).rev() {
            let n_in = self.spec.layer_dims[layer];
            let start = self.offsets[layer];
            let n_out = self.spec.layer_dims[layer + 1];
            let input = &tape.post[layer];
            {
                let delta = &tape.delta[layer];
                let (gw, gb) = grad[start..self.offsets[layer + 1]].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(d, input, &mut gw[o * n_in..(o + 1) * n_in]);
                }
            }
            if layer == 0 && dx.is_none() {
                break;
            }
            let (w, _) = self.weights(layer);
            let upstream = &mut tape.scratch[..n_in];
            upstream.fill(0.0);
            for (o, &d) in tape.delta[layer].iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * n_in..(o + 1) * n_in], upstream);
                }
            }
            if layer == 0 {
                if let Some(dx) = dx {
                    dx.copy_from_slice(upstream);
                }
                break;
            }
            let act = self.spec.activations[layer - 1];
            let (lower, _) = tape.delta.split_at_mut(layer);
            let target = &mut lower[layer - 1];
            for i in 0..n_in {
                target[i] = upstream[i] * act.derivative(tape.pre[layer - 1][i], tape.post[layer][i]);
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = self.new_tape();
        Ok(self.forward_tape(x, &mut tape)?.to_vec())
    }

    /// Class probabilities; entries are non-negative and sum to one.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Log class probabilities computed without going through `exp` / `ln`.
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        log_softmax_in_place(&mut z);
        Ok(z)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::invalid(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

/// Free-function form of [`Mlp::forward`].
pub fn forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    Mlp::from_params(spec.clone(), params.clone())?.forward(x)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax_in_place(z: &mut [f64]) {
    let lse = log_sum_exp(z);
    for v in z.iter_mut() {
        *v -= lse;
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Maps a gradient with respect to softmax outputs onto the logits:
/// `dz = p * (dp - <dp, p>)`.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64], dlogits: &mut [f64]) {
    let inner = dot(probs, dprobs);
    for ((dz, &p), &dp) in dlogits.iter_mut().zip(probs).zip(dprobs) {
        *dz = p * (dp - inner);
    }
}

/// `-ln p[label]` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs
        .get(label)
        .ok_or_else(|| Error::invalid(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

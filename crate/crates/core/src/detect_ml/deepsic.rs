//! DeepSIC: a `K x Q` grid of classifiers standing in for the soft
//! interference cancellation iterations.
//!
//! Block `(q, k)` maps `[y, p_l for l != k in ascending l]` to a
//! distribution over user `k`'s symbol. Column 0 reads uniform priors.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::{Constellation, MimoDataset};
use crate::detect_model::SoftEstimate;
use crate::nn::{
    cross_entropy, softmax_backward, softmax_in_place, train_from, Activation, Adam, Mlp, MlpSpec, Samples, Tape,
    TrainConfig,
};
use crate::rng::mix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeepSicArch {
    /// `in -> 60 (ReLU) -> m`.
    EndToEnd,
    /// `in -> 100 (sigmoid) -> 50 (ReLU) -> m`.
    Sequential,
}

impl DeepSicArch {
    pub fn block_spec(self, inputs: usize, m: usize) -> Result<MlpSpec> {
        match self {
            Self::EndToEnd => MlpSpec::new(vec![inputs, 60, m], vec![Activation::Relu]),
            Self::Sequential => {
                MlpSpec::new(vec![inputs, 100, 50, m], vec![Activation::Sigmoid, Activation::Relu])
            }
        }
    }
}

/// Whether end-to-end training back-propagates through the soft estimates
/// passed between columns. With `Stop` only the last column is trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientFlow {
    #[default]
    Through,
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepSicNet {
    constellation: Constellation,
    users: usize,
    antennas: usize,
    iterations: usize,
    /// Column-major: block `(q, k)` sits at `q * users + k`.
    blocks: Vec<Mlp>,
}

impl DeepSicNet {
    pub fn new(
        arch: DeepSicArch,
        constellation: Constellation,
        users: usize,
        antennas: usize,
        iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        let inputs = antennas + users.saturating_sub(1) * constellation.len();
        let spec = arch.block_spec(inputs, constellation.len())?;
        let blocks = (0..users * iterations)
            .map(|b| Mlp::init(spec.clone(), mix(seed, b as u64)))
            .collect();
        Self::from_blocks(constellation, users, antennas, iterations, blocks)
    }

    pub fn from_blocks(
        constellation: Constellation,
        users: usize,
        antennas: usize,
        iterations: usize,
        blocks: Vec<Mlp>,
    ) -> Result<Self> {
        if users == 0 || antennas == 0 || iterations == 0 {
            return Err(Error::invalid("DeepSIC needs K, n_r and Q all at least 1"));
        }
        if blocks.len() != users * iterations {
            return Err(Error::invalid(format!(
                "grid needs {} blocks, got {}",
                users * iterations,
                blocks.len()
            )));
        }
        let inputs = antennas + (users - 1) * constellation.len();
        for (b, mlp) in blocks.iter().enumerate() {
            if mlp.spec().input_dim() != inputs || mlp.spec().classes() != constellation.len() {
                return Err(Error::invalid(format!(
                    "block {b} maps {} -> {}, expected {inputs} -> {}",
                    mlp.spec().input_dim(),
                    mlp.spec().classes(),
                    constellation.len()
                )));
            }
            let column_head = &blocks[(b / users) * users];
            if mlp.spec() != column_head.spec() {
                return Err(Error::invalid(format!("block {b} differs in shape from its column")));
            }
        }
        Ok(Self {
            constellation,
            users,
            antennas,
            iterations,
            blocks,
        })
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn block(&self, q: usize, k: usize) -> &Mlp {
        &self.blocks[q * self.users + k]
    }

    pub fn blocks(&self) -> &[Mlp] {
        &self.blocks
    }

    pub fn input_dim(&self) -> usize {
        self.antennas + (self.users - 1) * self.constellation.len()
    }

    /// Writes block `k`'s input given the previous column's flat `K * m`
    /// probabilities.
    fn fill_input(&self, y: &[f64], k: usize, prev: &[f64], out: &mut [f64]) {
        let m = self.constellation.len();
        out[..self.antennas].copy_from_slice(y);
        let mut at = self.antennas;
        for l in (0..self.users).filter(|&l| l != k) {
            out[at..at + m].copy_from_slice(&prev[l * m..(l + 1) * m]);
            at += m;
        }
    }

    fn uniform_column(&self) -> Vec<f64> {
        let m = self.constellation.len();
        vec![1.0 / m as f64; self.users * m]
    }

    /// Runs column `q` and returns its flat `K * m` outputs.
    fn column(&self, q: usize, y: &[f64], prev: &[f64]) -> Result<Vec<f64>> {
        let m = self.constellation.len();
        let mut input = vec![0.0; self.input_dim()];
        let mut out = Vec::with_capacity(self.users * m);
        for k in 0..self.users {
            self.fill_input(y, k, prev, &mut input);
            out.extend(self.block(q, k).forward(&input)?);
        }
        Ok(out)
    }

    fn check_observation(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.antennas {
            return Err(Error::invalid(format!(
                "observation has length {}, DeepSIC expects {}",
                y.len(),
                self.antennas
            )));
        }
        Ok(())
    }

    fn check_dataset(&self, data: &MimoDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if data.users() != self.users || data.antennas() != self.antennas {
            return Err(Error::invalid(format!(
                "dataset is {}x{}, network is {}x{}",
                data.antennas(),
                data.users(),
                self.antennas,
                self.users
            )));
        }
        Ok(())
    }
}

/// Last-column soft estimates for every user.
pub fn deepsic_forward(net: &DeepSicNet, y: &[f64]) -> Result<Vec<SoftEstimate>> {
    net.check_observation(y)?;
    let mut probs = net.uniform_column();
    for q in 0..net.iterations {
        probs = net.column(q, y, &probs)?;
    }
    let m = net.constellation.len();
    probs.chunks(m).map(|p| SoftEstimate::normalized(p.to_vec())).collect()
}

pub fn deepsic_detect(net: &DeepSicNet, y: &[f64]) -> Result<Vec<usize>> {
    Ok(deepsic_forward(net, y)?.iter().map(SoftEstimate::argmax).collect())
}

/// Buffers for one forward/backward pass through the whole grid.
struct Workspace {
    tapes: Vec<Tape>,
    /// `iterations + 1` columns of flat `K * m` probabilities; column 0 is
    /// the uniform prior.
    probs: Vec<Vec<f64>>,
    input: Vec<f64>,
    dprobs: Vec<f64>,
    next_dprobs: Vec<f64>,
    dlogits: Vec<f64>,
    dx: Vec<f64>,
}

impl Workspace {
    fn new(net: &DeepSicNet) -> Self {
        let width = net.users * net.constellation.len();
        let mut probs = vec![vec![0.0; width]; net.iterations + 1];
        probs[0] = net.uniform_column();
        Self {
            tapes: net.blocks.iter().map(Mlp::new_tape).collect(),
            probs,
            input: vec![0.0; net.input_dim()],
            dprobs: vec![0.0; width],
            next_dprobs: vec![0.0; width],
            dlogits: vec![0.0; net.constellation.len()],
            dx: vec![0.0; net.input_dim()],
        }
    }
}

/// Sum of per-user cross-entropies at the last column for one sample.
/// Adds the gradient of that loss into `grads` (one vector per block).
fn accumulate(
    net: &DeepSicNet,
    ws: &mut Workspace,
    y: &[f64],
    labels: &[usize],
    grads: &mut [Vec<f64>],
    flow: GradientFlow,
) -> Result<f64> {
    let (users, m, iters) = (net.users, net.constellation.len(), net.iterations);
    for q in 0..iters {
        let (done, rest) = ws.probs.split_at_mut(q + 1);
        let (prev, next) = (&done[q], &mut rest[0]);
        for k in 0..users {
            net.fill_input(y, k, prev, &mut ws.input);
            let b = q * users + k;
            let logits = net.blocks[b].forward_tape(&ws.input, &mut ws.tapes[b])?;
            let out = &mut next[k * m..(k + 1) * m];
            out.copy_from_slice(logits);
            softmax_in_place(out);
        }
    }

    let last = &ws.probs[iters];
    let mut loss = 0.0;
    for (k, &label) in labels.iter().enumerate() {
        loss += cross_entropy(&last[k * m..(k + 1) * m], label)?;
    }

    for q in (0..iters).rev() {
        let through = q > 0 && flow == GradientFlow::Through;
        if q + 1 < iters && flow == GradientFlow::Stop {
            break;
        }
        ws.next_dprobs.fill(0.0);
        for k in 0..users {
            let p = &ws.probs[q + 1][k * m..(k + 1) * m];
            if q + 1 == iters {
                ws.dlogits.copy_from_slice(p);
                ws.dlogits[labels[k]] -= 1.0;
            } else {
                softmax_backward(p, &ws.dprobs[k * m..(k + 1) * m], &mut ws.dlogits);
            }
            let b = q * users + k;
            if through {
                net.blocks[b].backward(&mut ws.tapes[b], &ws.dlogits, &mut grads[b], Some(&mut ws.dx));
                let mut at = net.antennas;
                for l in (0..users).filter(|&l| l != k) {
                    for j in 0..m {
                        ws.next_dprobs[l * m + j] += ws.dx[at + j];
                    }
                    at += m;
                }
            } else {
                net.blocks[b].backward(&mut ws.tapes[b], &ws.dlogits, &mut grads[b], None);
            }
        }
        std::mem::swap(&mut ws.dprobs, &mut ws.next_dprobs);
    }
    Ok(loss)
}

fn zero_grads(net: &DeepSicNet) -> Vec<Vec<f64>> {
    net.blocks.iter().map(|b| vec![0.0; b.params().len()]).collect()
}

/// `sum_k -ln p_k(s_k)` at the last column.
pub fn deepsic_sum_loss(net: &DeepSicNet, y: &[f64], labels: &[usize]) -> Result<f64> {
    deepsic_gradient(net, y, labels, GradientFlow::Through).map(|(loss, _)| loss)
}

/// Sum loss for one sample and its gradient with respect to every block.
pub fn deepsic_gradient(
    net: &DeepSicNet,
    y: &[f64],
    labels: &[usize],
    flow: GradientFlow,
) -> Result<(f64, Vec<Vec<f64>>)> {
    net.check_observation(y)?;
    if labels.len() != net.users || labels.iter().any(|&s| s >= net.constellation.len()) {
        return Err(Error::invalid("need one in-range label per user"));
    }
    let mut grads = zero_grads(net);
    let mut ws = Workspace::new(net);
    let loss = accumulate(net, &mut ws, y, labels, &mut grads, flow)?;
    Ok((loss, grads))
}

#[derive(Clone, Debug)]
pub struct DeepSicFit {
    pub net: DeepSicNet,
    /// Mean sum loss over the data before training.
    pub initial_loss: f64,
    /// Mean sum loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn deepsic_train_e2e(net: &DeepSicNet, data: &MimoDataset, cfg: &TrainConfig) -> Result<DeepSicFit> {
    deepsic_train_e2e_with(net, data, cfg, GradientFlow::Through)
}

/// Joint mini-batch Adam on the summed last-column cross-entropy.
pub fn deepsic_train_e2e_with(
    net: &DeepSicNet,
    data: &MimoDataset,
    cfg: &TrainConfig,
    flow: GradientFlow,
) -> Result<DeepSicFit> {
    cfg.validate()?;
    net.check_dataset(data)?;
    let mut net = net.clone();
    let mut ws = Workspace::new(&net);
    let mut grads = zero_grads(&net);
    let mut adams: Vec<Adam> = net.blocks.iter().map(|b| Adam::new(b.params().len(), cfg)).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x4453_4943));
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut initial = 0.0;
    for i in 0..data.len() {
        initial += accumulate(&net, &mut ws, data.observation(i), data.labels(i), &mut grads, flow)?;
    }
    let initial_loss = initial / data.len() as f64;

    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            for &i in batch {
                total += accumulate(&net, &mut ws, data.observation(i), data.labels(i), &mut grads, flow)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for ((block, grad), adam) in net.blocks.iter_mut().zip(&mut grads).zip(&mut adams) {
                grad.iter_mut().for_each(|g| *g *= scale);
                adam.step(block.params_mut(), grad);
            }
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok(DeepSicFit {
        net,
        initial_loss,
        epoch_losses,
    })
}

/// Column-by-column training. Each block of column `q` is fitted on its own
/// to the `n` pairs `(y_i, column q-1 outputs for sample i) -> s_ik`; the
/// trained column then produces the inputs of the next one. Earlier columns
/// are never revisited.
pub fn deepsic_train_seq(net: &DeepSicNet, data: &MimoDataset, cfg: &TrainConfig) -> Result<DeepSicNet> {
    cfg.validate()?;
    net.check_dataset(data)?;
    let mut net = net.clone();
    let (users, n) = (net.users, data.len());
    let uniform = net.uniform_column();
    let mut prev: Vec<Vec<f64>> = vec![uniform; n];
    for q in 0..net.iterations {
        let trained = (0..users)
            .into_par_iter()
            .map(|k| {
                let samples = column_samples(&net, data, &prev, k)?;
                let seed = mix(cfg.seed, (q * users + k) as u64);
                Ok(train_from(net.block(q, k).clone(), &samples, &cfg.with_seed(seed))?.mlp)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, mlp) in trained.into_iter().enumerate() {
            net.blocks[q * users + k] = mlp;
        }
        prev = (0..n)
            .map(|i| net.column(q, data.observation(i), &prev[i]))
            .collect::<Result<_>>()?;
    }
    Ok(net)
}

fn column_samples(net: &DeepSicNet, data: &MimoDataset, prev: &[Vec<f64>], k: usize) -> Result<Samples> {
    let mut samples = Samples::new(net.input_dim());
    let mut input = vec![0.0; net.input_dim()];
    for (i, p) in prev.iter().enumerate() {
        net.fill_input(data.observation(i), k, p, &mut input);
        samples.push(&input, data.labels(i)[k]);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{generate_mimo_dataset, ChannelKind, MimoChannel};
    use crate::nn::{relative_error, MlpParams};
    use crate::rng::RngStream;
    use nalgebra::DMatrix;

    fn tiny(seed: u64) -> DeepSicNet {
        let c = Constellation::bpsk();
        let spec = MlpSpec::new(vec![2 + 2, 5, 2], vec![Activation::Sigmoid]).unwrap();
        let blocks = (0..4).map(|b| Mlp::init(spec.clone(), seed * 10 + b)).collect();
        DeepSicNet::from_blocks(c, 2, 2, 2, blocks).unwrap()
    }

    #[test]
    fn shapes() {
        let net = DeepSicNet::new(DeepSicArch::EndToEnd, Constellation::bpsk(), 4, 4, 5, 0).unwrap();
        assert_eq!(net.blocks().len(), 20);
        assert_eq!(net.input_dim(), 4 + 3 * 2);
        assert_eq!(net.block(0, 0).spec().layer_dims(), &[10, 60, 2]);
        let seq = DeepSicNet::new(DeepSicArch::Sequential, Constellation::bpsk(), 1, 3, 2, 0).unwrap();
        assert_eq!(seq.block(1, 0).spec().layer_dims(), &[3, 100, 50, 2]);
        assert!(deepsic_forward(&net, &[0.0; 3]).is_err());
    }

    #[test]
    fn input_layout() {
        let c = Constellation::new(vec![0.0, 1.0, 2.0]).unwrap();
        let net = DeepSicNet::new(DeepSicArch::EndToEnd, c, 3, 2, 1, 0).unwrap();
        let prev = [0.1, 0.2, 0.7, 0.3, 0.3, 0.4, 0.5, 0.25, 0.25];
        let mut out = vec![0.0; net.input_dim()];
        net.fill_input(&[9.0, 8.0], 1, &prev, &mut out);
        assert_eq!(out, vec![9.0, 8.0, 0.1, 0.2, 0.7, 0.5, 0.25, 0.25]);
        let uniform = net.uniform_column();
        assert!(uniform.iter().all(|&p| p == 1.0 / 3.0));
    }

    #[test]
    fn outputs_are_soft_estimates() {
        let net = DeepSicNet::new(DeepSicArch::Sequential, Constellation::bpsk(), 3, 3, 3, 4).unwrap();
        let out = deepsic_forward(&net, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out.len(), 3);
        for p in out {
            assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_output_decides_index_zero() {
        let spec = DeepSicArch::EndToEnd.block_spec(2, 2).unwrap();
        let blocks = vec![Mlp::zeros(spec)];
        let net = DeepSicNet::from_blocks(Constellation::bpsk(), 1, 2, 1, blocks).unwrap();
        assert_eq!(deepsic_detect(&net, &[5.0, -5.0]).unwrap(), vec![0]);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        // Final-column bias pushes all mass onto symbol 1.
        let spec = MlpSpec::linear(2 + 2, 2).unwrap();
        let mut last = vec![0.0; spec.num_params()];
        let n = last.len();
        last[n - 1] = 800.0;
        let blocks = vec![
            Mlp::zeros(spec.clone()),
            Mlp::zeros(spec.clone()),
            Mlp::from_params(spec.clone(), MlpParams(last.clone())).unwrap(),
            Mlp::from_params(spec, MlpParams(last)).unwrap(),
        ];
        let net = DeepSicNet::from_blocks(Constellation::bpsk(), 2, 2, 2, blocks).unwrap();
        assert_eq!(deepsic_sum_loss(&net, &[0.1, 0.2], &[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let step = 1e-5;
        for seed in 0..5 {
            let net = tiny(seed);
            let y = [0.7 - seed as f64 * 0.3, -0.4];
            let labels = [(seed % 2) as usize, 1];
            let (_, grads) = deepsic_gradient(&net, &y, &labels, GradientFlow::Through).unwrap();
            let mut worst: f64 = 0.0;
            for b in 0..net.blocks().len() {
                for p in 0..net.blocks()[b].params().len() {
                    let mut plus = net.clone();
                    plus.blocks[b].params_mut()[p] += step;
                    let mut minus = net.clone();
                    minus.blocks[b].params_mut()[p] -= step;
                    let numeric = (deepsic_sum_loss(&plus, &y, &labels).unwrap()
                        - deepsic_sum_loss(&minus, &y, &labels).unwrap())
                        / (2.0 * step);
                    worst = worst.max(relative_error(grads[b][p], numeric));
                }
            }
            assert!(worst <= 1e-5, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn stop_gradient_trains_only_the_last_column() {
        let net = tiny(1);
        let (_, grads) = deepsic_gradient(&net, &[0.2, 0.1], &[0, 1], GradientFlow::Stop).unwrap();
        assert!(grads[0].iter().chain(&grads[1]).all(|&g| g == 0.0));
        assert!(grads[2].iter().chain(&grads[3]).any(|&g| g != 0.0));
    }

    fn identity_data(n: usize, seed: u64) -> MimoDataset {
        let ch = MimoChannel::new(ChannelKind::Awgn, DMatrix::identity(2, 2), 0.5).unwrap();
        generate_mimo_dataset(&ch, &Constellation::bpsk(), n, &mut RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn end_to_end_training_reduces_loss() {
        let data = identity_data(5000, 3);
        let net = DeepSicNet::new(DeepSicArch::EndToEnd, Constellation::bpsk(), 2, 2, 2, 1).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let fit = deepsic_train_e2e(&net, &data, &cfg).unwrap();
        assert!(fit.epoch_losses.last().unwrap() < &fit.initial_loss, "{fit:?}");
        let again = deepsic_train_e2e(&net, &data, &cfg).unwrap();
        assert_eq!(again.net, fit.net);
    }

    #[test]
    fn sequential_training_on_a_decoupled_channel_is_near_scalar_map() {
        let data = identity_data(2000, 5);
        let test = identity_data(10_000, 6);
        let net = DeepSicNet::new(DeepSicArch::Sequential, Constellation::bpsk(), 2, 2, 2, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default()
        };
        let trained = deepsic_train_seq(&net, &data, &cfg).unwrap();
        let (mut net_err, mut map_err) = (0usize, 0usize);
        for i in 0..test.len() {
            let y = test.observation(i);
            let s = test.labels(i);
            let d = deepsic_detect(&trained, y).unwrap();
            for k in 0..2 {
                net_err += usize::from(d[k] != s[k]);
                map_err += usize::from(usize::from(y[k] > 0.0) != s[k]);
            }
        }
        let n = 2.0 * test.len() as f64;
        let (a, b) = (net_err as f64 / n, map_err as f64 / n);
        let se = (a * (1.0 - a) / n + b * (1.0 - b) / n).sqrt();
        assert!((a - b).abs() <= 2.0 * se, "DeepSIC {a} vs MAP {b}, se {se}");
    }

    #[test]
    fn sequential_column_zero_sees_uniform_priors() {
        let data = identity_data(50, 8);
        let net = DeepSicNet::new(DeepSicArch::Sequential, Constellation::bpsk(), 2, 2, 1, 0).unwrap();
        let prev = vec![net.uniform_column(); data.len()];
        let samples = column_samples(&net, &data, &prev, 0).unwrap();
        assert_eq!(samples.len(), data.len());
        for i in 0..samples.len() {
            assert_eq!(&samples.input(i)[2..], &[0.5, 0.5]);
            assert_eq!(&samples.input(i)[..2], data.observation(i));
        }
    }
}

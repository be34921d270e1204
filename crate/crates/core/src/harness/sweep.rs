//! Monte-Carlo SER sweeps.
//!
//! Every (channel realization, SNR point) pair is an independent task with
//! its own random streams, derived from the master seed by the path
//! `[realization, snr index, purpose]`. Training, test and CSI-error draws
//! use different purposes, so training and test data never share samples.
//! Tasks run in parallel and are reduced in (realization, SNR) order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{ChannelFamily, CsiTraining, Detector, ExperimentConfig, MimoMatrix, SicModel};
use super::{companion_paths, count_errors, plot_script, SerCurve, SerRow};
use crate::channels::{
    generate_dataset, generate_dataset_with_taps, generate_mimo_dataset, generate_mimo_dataset_with_gains,
    make_decay_vector, perturb_csi_finite, perturb_csi_mimo, spatial_decay_matrix, ChannelKind, Constellation,
    FiniteMemoryChannel, FiniteMemoryDataset, MimoChannel, MimoDataset,
};
use crate::detect_ml::{
    bcjrnet_detect, deepsic_detect, deepsic_train_e2e, deepsic_train_seq, train_likelihood_model, viterbinet_detect,
    DeepSicArch, DeepSicNet, LikelihoodModel, Model,
};
use crate::detect_model::{
    awgn_log_score, bcjr, exact_cost, exact_function_node, hard_decisions, iterative_sic, map_mimo_brute,
    poisson_log_score, viterbi, LinearGaussianModel,
};
use crate::rng::RngStream;
use crate::Result;

const TRAIN: u64 = 1;
const TEST: u64 = 2;
const CSI: u64 = 3;
const INIT: u64 = 4;

/// Sizes of the test blocks making up `n_test` symbols: full blocks of
/// `block_len`, with a remainder too short for the trellis (at most `memory`
/// symbols) folded into the last block.
pub fn finite_memory_blocks(n_test: usize, block_len: usize, memory: usize) -> Vec<usize> {
    let mut blocks = vec![block_len; n_test / block_len];
    let rest = n_test % block_len;
    if rest > 0 {
        match blocks.last_mut() {
            Some(last) if rest <= memory => *last += rest,
            _ => blocks.push(rest),
        }
    }
    blocks
}

/// Random streams and parameters of one (realization, SNR) task.
struct Point<'a> {
    cfg: &'a ExperimentConfig,
    realization: usize,
    snr_db: f64,
    root: RngStream,
}

impl<'a> Point<'a> {
    fn new(cfg: &'a ExperimentConfig, realization: usize, snr_index: usize) -> Self {
        Self {
            cfg,
            realization,
            snr_db: cfg.snr_db[snr_index],
            root: RngStream::new(cfg.seed, 0).derive(&[realization as u64, snr_index as u64]),
        }
    }

    fn stream(&self, purpose: u64) -> RngStream {
        self.root.derive(&[purpose])
    }

    fn seed(&self, purpose: u64) -> u64 {
        self.stream(purpose).stream_id()
    }

    fn kind(&self) -> ChannelKind {
        match self.cfg.channel {
            ChannelFamily::IsiAwgn | ChannelFamily::MimoAwgn => ChannelKind::Awgn,
            ChannelFamily::IsiPoisson | ChannelFamily::MimoPoisson => ChannelKind::Poisson,
        }
    }

    fn csi_error(&self) -> bool {
        self.cfg.sigma_e2 > 0.0
    }

    /// Poisson intensities cannot be negative, so perturbed Poisson gains
    /// are clipped at zero.
    fn clip(&self, v: f64) -> f64 {
        match self.kind() {
            ChannelKind::Poisson => v.max(0.0),
            ChannelKind::Awgn => v,
        }
    }
}

// Finite-memory channels.

impl Point<'_> {
    fn finite_channel(&self) -> Result<FiniteMemoryChannel> {
        let gamma = self.cfg.gamma_grid()[self.realization];
        let taps = make_decay_vector(gamma, self.cfg.memory)?;
        FiniteMemoryChannel::new(self.kind(), taps, 10f64.powf(self.snr_db / 10.0))
    }

    fn perturbed_taps(&self, ch: &FiniteMemoryChannel, rng: &mut RngStream) -> Result<Vec<f64>> {
        let taps = perturb_csi_finite(ch.taps(), self.cfg.sigma_e2, rng)?;
        Ok(taps.into_iter().map(|t| self.clip(t)).collect())
    }

    /// The channel the model-based detectors believe in.
    fn finite_detector_channel(&self, ch: &FiniteMemoryChannel) -> Result<FiniteMemoryChannel> {
        if !self.csi_error() {
            return Ok(ch.clone());
        }
        ch.with_taps(self.perturbed_taps(ch, &mut self.stream(CSI))?)
    }

    fn finite_training_data(&self, ch: &FiniteMemoryChannel, believed: &FiniteMemoryChannel) -> Result<FiniteMemoryDataset> {
        let c = ch.kind().default_constellation();
        let mut rng = self.stream(TRAIN);
        let n = self.cfg.n_train;
        match (self.csi_error(), self.cfg.csi_training) {
            (false, _) => generate_dataset(ch, &c, n, &mut rng),
            (true, CsiTraining::Fixed) => generate_dataset(believed, &c, n, &mut rng),
            (true, CsiTraining::PerSample) => {
                generate_dataset_with_taps(ch, &c, n, &mut rng, |ch, rng| self.perturbed_taps(ch, rng))
            }
        }
    }

    fn likelihood_model(&self, ch: &FiniteMemoryChannel, believed: &FiniteMemoryChannel) -> Result<LikelihoodModel> {
        let data = self.finite_training_data(ch, believed)?;
        let c = ch.kind().default_constellation();
        train_likelihood_model(&data, &c, &self.cfg.train_config(self.seed(INIT)))
    }

    fn run_finite(&self) -> Result<Vec<(u64, u64)>> {
        let cfg = self.cfg;
        let ch = self.finite_channel()?;
        let believed = self.finite_detector_channel(&ch)?;
        let c = ch.kind().default_constellation();
        let model = if cfg.detectors.iter().any(|d| d.is_learned()) {
            Some(self.likelihood_model(&ch, &believed)?)
        } else {
            None
        };
        let cost = exact_cost(&believed)?;
        let node = exact_function_node(&believed)?;
        let trellis = cost.trellis();

        let mut tally = vec![(0u64, 0u64); cfg.detectors.len()];
        let mut rng = self.stream(TEST);
        for len in finite_memory_blocks(cfg.n_test, cfg.block_len, cfg.memory) {
            let block = generate_dataset(&ch, &c, len, &mut rng)?;
            let (y, truth) = (block.observations(), block.labels());
            for (d, slot) in cfg.detectors.iter().zip(&mut tally) {
                let decided = match d {
                    Detector::Viterbi => viterbi(y, &cost, trellis, cfg.viterbi_mode)?,
                    Detector::Bcjr => hard_decisions(&bcjr(y, &node)?),
                    Detector::ViterbiNet => viterbinet_detect(model.as_ref().unwrap(), y, cfg.viterbi_mode)?,
                    Detector::BcjrNet => bcjrnet_detect(model.as_ref().unwrap(), y)?,
                    _ => unreachable!("validated detector list"),
                };
                slot.0 += count_errors(&decided, truth);
                slot.1 += truth.len() as u64;
            }
        }
        Ok(tally)
    }
}

// MIMO channels.

impl Point<'_> {
    fn mimo_channel(&self) -> Result<MimoChannel> {
        let (n_r, k) = (self.cfg.antennas, self.cfg.users);
        let gains = match self.cfg.mimo_matrix {
            MimoMatrix::Decay => spatial_decay_matrix(n_r, k),
            MimoMatrix::Identity => DMatrix::identity(n_r, k),
        };
        MimoChannel::new(self.kind(), gains, 10f64.powf(-self.snr_db / 10.0))
    }

    fn perturbed_gains(&self, ch: &MimoChannel, rng: &mut RngStream) -> Result<DMatrix<f64>> {
        Ok(perturb_csi_mimo(ch.gains(), self.cfg.sigma_e2, rng)?.map(|v| self.clip(v)))
    }

    fn mimo_detector_channel(&self, ch: &MimoChannel) -> Result<MimoChannel> {
        if !self.csi_error() {
            return Ok(ch.clone());
        }
        ch.with_gains(self.perturbed_gains(ch, &mut self.stream(CSI))?)
    }

    fn mimo_training_data(&self, ch: &MimoChannel, believed: &MimoChannel) -> Result<MimoDataset> {
        let c = ch.kind().default_constellation();
        let mut rng = self.stream(TRAIN);
        let n = self.cfg.n_train;
        match (self.csi_error(), self.cfg.csi_training) {
            (false, _) => generate_mimo_dataset(ch, &c, n, &mut rng),
            (true, CsiTraining::Fixed) => generate_mimo_dataset(believed, &c, n, &mut rng),
            (true, CsiTraining::PerSample) => {
                generate_mimo_dataset_with_gains(ch, &c, n, &mut rng, |ch, rng| self.perturbed_gains(ch, rng))
            }
        }
    }

    fn deepsic(&self, arch: DeepSicArch, data: &MimoDataset, c: &Constellation) -> Result<DeepSicNet> {
        let cfg = self.cfg;
        let init = DeepSicNet::new(arch, c.clone(), cfg.users, cfg.antennas, cfg.q, self.seed(INIT))?;
        let train = cfg.train_config(self.seed(INIT) ^ arch as u64);
        match arch {
            DeepSicArch::EndToEnd => Ok(deepsic_train_e2e(&init, data, &train)?.net),
            DeepSicArch::Sequential => deepsic_train_seq(&init, data, &train),
        }
    }

    fn run_mimo(&self) -> Result<Vec<(u64, u64)>> {
        let cfg = self.cfg;
        let ch = self.mimo_channel()?;
        let believed = self.mimo_detector_channel(&ch)?;
        let c = ch.kind().default_constellation();
        let training = if cfg.detectors.iter().any(|d| d.is_learned()) {
            Some(self.mimo_training_data(&ch, &believed)?)
        } else {
            None
        };
        let mut nets = Vec::new();
        for d in &cfg.detectors {
            let arch = match d {
                Detector::DeepSicE2e => DeepSicArch::EndToEnd,
                Detector::DeepSicSeq => DeepSicArch::Sequential,
                _ => continue,
            };
            nets.push((*d, self.deepsic(arch, training.as_ref().unwrap(), &c)?));
        }
        let linear = match cfg.sic_model {
            SicModel::Nominal => LinearGaussianModel::from_channel(&believed)?,
            SicModel::MomentMatched => LinearGaussianModel::moment_matched(&believed, &c)?,
        };
        let score: Box<dyn Fn(&[usize], &[f64]) -> f64 + '_> = match believed.kind() {
            ChannelKind::Awgn => Box::new(awgn_log_score(&believed, &c)),
            ChannelKind::Poisson => Box::new(poisson_log_score(&believed, &c)),
        };

        let test = generate_mimo_dataset(&ch, &c, cfg.n_test, &mut self.stream(TEST))?;
        let mut tally = vec![(0u64, 0u64); cfg.detectors.len()];
        for i in 0..test.len() {
            let (y, truth) = (test.observation(i), test.labels(i));
            for (d, slot) in cfg.detectors.iter().zip(&mut tally) {
                let decided = match d {
                    Detector::Map => map_mimo_brute(y, &score, cfg.users, c.len())?,
                    Detector::Sic => iterative_sic(y, &linear, &c, cfg.q)?,
                    Detector::DeepSicE2e | Detector::DeepSicSeq => {
                        let net = &nets.iter().find(|(n, _)| n == d).unwrap().1;
                        deepsic_detect(net, y)?
                    }
                    _ => unreachable!("validated detector list"),
                };
                slot.0 += count_errors(&decided, truth);
                slot.1 += truth.len() as u64;
            }
        }
        Ok(tally)
    }
}

/// Runs every detector at every (realization, SNR) point and aggregates the
/// error counts over realizations. Rows are ordered by detector, then SNR.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SerCurve> {
    cfg.validate()?;
    let n_snr = cfg.snr_db.len();
    let tasks: Vec<(usize, usize)> = (0..cfg.n_channels)
        .flat_map(|r| (0..n_snr).map(move |j| (r, j)))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(r, j)| {
            let point = Point::new(cfg, r, j);
            if cfg.channel.is_mimo() {
                point.run_mimo()
            } else {
                point.run_finite()
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut totals = vec![vec![(0u64, 0u64); n_snr]; cfg.detectors.len()];
    for (&(_, j), tally) in tasks.iter().zip(&results) {
        for (d, &(errors, symbols)) in tally.iter().enumerate() {
            totals[d][j].0 += errors;
            totals[d][j].1 += symbols;
        }
    }
    let mut rows = Vec::new();
    for (d, det) in cfg.detectors.iter().enumerate() {
        for (j, &snr_db) in cfg.snr_db.iter().enumerate() {
            rows.push(SerRow {
                detector: det.name().to_string(),
                snr_db,
                n_symbols: totals[d][j].1,
                n_errors: totals[d][j].0,
                seed: cfg.seed,
            });
        }
    }
    Ok(SerCurve { rows })
}

/// Trains the config's learned detector at its first realization and first
/// SNR point, with the same streams the sweep uses there.
///
/// Finite-memory configs yield the ViterbiNet/BCJRNet likelihood model.
/// MIMO configs yield the first DeepSIC variant in `detectors`, defaulting
/// to end-to-end training.
pub fn train_model(cfg: &ExperimentConfig) -> Result<Model> {
    cfg.validate()?;
    if cfg.n_train == 0 {
        return Err(crate::Error::invalid("n_train: must be at least 1 to train a model"));
    }
    let point = Point::new(cfg, 0, 0);
    if cfg.channel.is_mimo() {
        let ch = point.mimo_channel()?;
        let believed = point.mimo_detector_channel(&ch)?;
        let arch = match cfg.detectors.iter().find(|d| d.is_learned()) {
            Some(Detector::DeepSicSeq) => DeepSicArch::Sequential,
            _ => DeepSicArch::EndToEnd,
        };
        let data = point.mimo_training_data(&ch, &believed)?;
        Ok(Model::DeepSic(point.deepsic(arch, &data, &ch.kind().default_constellation())?))
    } else {
        let ch = point.finite_channel()?;
        let believed = point.finite_detector_channel(&ch)?;
        Ok(Model::Likelihood(point.likelihood_model(&ch, &believed)?))
    }
}

/// Writes the CSV plus its `.meta` and `.gp` companions.
pub fn write_outputs(cfg: &ExperimentConfig, curve: &SerCurve, csv: &Path) -> Result<()> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(csv, curve.to_csv())?;
    let (meta, gp) = companion_paths(csv);
    let mut text = String::from("# Configuration that produced the CSV next to this file.\n");
    text.push_str(&cfg.to_text());
    if !cfg.channel.is_mimo() {
        let blocks = finite_memory_blocks(cfg.n_test, cfg.block_len, cfg.memory);
        text.push_str(&format!(
            "# {} test blocks per point (sizes {:?}); every symbol of every block is counted.\n",
            blocks.len(),
            blocks
        ));
        text.push_str("# Each block starts from its own uniformly drawn warm-up prefix.\n");
    } else {
        text.push_str(&format!(
            "# n_symbols counts {} user decisions per channel use.\n",
            cfg.users
        ));
    }
    fs::write(meta, text)?;
    fs::write(gp, plot_script(csv, curve))?;
    Ok(())
}

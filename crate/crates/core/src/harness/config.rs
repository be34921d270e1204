//! Experiment configuration: flat `key = value` text with `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::detect_model::ViterbiMode;
use crate::nn::TrainConfig;
use crate::{Error, Result};

/// Overrides `seed` when set.
pub const SEED_ENV: &str = "NEURODETECT_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelFamily {
    IsiAwgn,
    IsiPoisson,
    MimoAwgn,
    MimoPoisson,
}

impl ChannelFamily {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "isi-awgn" => Self::IsiAwgn,
            "isi-poisson" => Self::IsiPoisson,
            "mimo-awgn" => Self::MimoAwgn,
            "mimo-poisson" => Self::MimoPoisson,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::IsiAwgn => "isi-awgn",
            Self::IsiPoisson => "isi-poisson",
            Self::MimoAwgn => "mimo-awgn",
            Self::MimoPoisson => "mimo-poisson",
        }
    }

    pub fn is_mimo(self) -> bool {
        matches!(self, Self::MimoAwgn | Self::MimoPoisson)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detector {
    Viterbi,
    Bcjr,
    ViterbiNet,
    BcjrNet,
    Map,
    Sic,
    DeepSicE2e,
    DeepSicSeq,
}

impl Detector {
    pub const ALL: [Detector; 8] = [
        Self::Viterbi,
        Self::Bcjr,
        Self::ViterbiNet,
        Self::BcjrNet,
        Self::Map,
        Self::Sic,
        Self::DeepSicE2e,
        Self::DeepSicSeq,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Viterbi => "viterbi",
            Self::Bcjr => "bcjr",
            Self::ViterbiNet => "viterbinet",
            Self::BcjrNet => "bcjrnet",
            Self::Map => "map",
            Self::Sic => "sic",
            Self::DeepSicE2e => "deepsic-e2e",
            Self::DeepSicSeq => "deepsic-seq",
        }
    }

    /// Whether the detector works on finite-memory (as opposed to MIMO)
    /// channels.
    pub fn is_trellis(self) -> bool {
        matches!(self, Self::Viterbi | Self::Bcjr | Self::ViterbiNet | Self::BcjrNet)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::ViterbiNet | Self::BcjrNet | Self::DeepSicE2e | Self::DeepSicSeq)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MimoMatrix {
    /// `H[i][k] = exp(-|i - k|)`.
    Decay,
    Identity,
}

/// How training data is generated under CSI uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiTraining {
    /// Every training sample sees its own perturbed channel.
    PerSample,
    /// All training samples share the perturbed channel handed to the
    /// model-based detectors.
    Fixed,
}

/// The linear Gaussian model SIC assumes on a MIMO channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SicModel {
    /// The channel's own `H` and `sigma_w^2`.
    Nominal,
    /// Poisson channels replaced by their first two moments.
    MomentMatched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub channel: ChannelFamily,
    pub memory: usize,
    pub users: usize,
    pub antennas: usize,
    pub mimo_matrix: MimoMatrix,
    pub detectors: Vec<Detector>,
    pub snr_db: Vec<f64>,
    pub n_train: usize,
    /// Test symbols (finite memory) or channel uses (MIMO) per channel
    /// realization and SNR point.
    pub n_test: usize,
    /// Number of channel realizations. Finite-memory channels spread them
    /// over an equally spaced decay grid.
    pub n_channels: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// CSI error variance; 0 means perfect CSI.
    pub sigma_e2: f64,
    pub csi_training: CsiTraining,
    pub q: usize,
    pub sic_model: SicModel,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub block_len: usize,
    pub viterbi_mode: ViterbiMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelFamily::IsiAwgn,
            memory: 4,
            users: 6,
            antennas: 6,
            mimo_matrix: MimoMatrix::Decay,
            detectors: vec![Detector::Viterbi, Detector::ViterbiNet],
            snr_db: vec![0.0],
            n_train: 5000,
            n_test: 25_000,
            n_channels: 20,
            gamma_min: 0.1,
            gamma_max: 2.0,
            sigma_e2: 0.0,
            csi_training: CsiTraining::PerSample,
            q: 5,
            sic_model: SicModel::Nominal,
            seed: 0,
            output: None,
            block_len: 1000,
            viterbi_mode: ViterbiMode::Traceback,
            epochs: 100,
            batch_size: 27,
            learning_rate: 0.01,
        }
    }
}

fn field_error(key: &str, message: impl fmt::Display) -> Error {
    Error::InvalidArgument(format!("{key}: {message}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| field_error(key, format!("cannot parse {value:?}")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split([',', ' ', '\t']).map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: n + 1,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(field_error(key, "set more than once"));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `NEURODETECT_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = parse_num(SEED_ENV, seed.trim())?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "channel" => {
                self.channel = ChannelFamily::parse(value).ok_or_else(|| field_error(key, format!("unknown family {value:?}")))?
            }
            "memory" => self.memory = parse_num(key, value)?,
            "users" => self.users = parse_num(key, value)?,
            "antennas" => self.antennas = parse_num(key, value)?,
            "mimo_matrix" => {
                self.mimo_matrix = match value {
                    "decay" => MimoMatrix::Decay,
                    "identity" => MimoMatrix::Identity,
                    _ => return Err(field_error(key, format!("unknown matrix {value:?}"))),
                }
            }
            "detectors" => {
                self.detectors = list(value)
                    .map(|d| Detector::parse(d).ok_or_else(|| field_error(key, format!("unknown detector {d:?}"))))
                    .collect::<Result<_>>()?
            }
            "snr_db" => self.snr_db = list(value).map(|v| parse_num(key, v)).collect::<Result<_>>()?,
            "n_train" => self.n_train = parse_num(key, value)?,
            "n_test" => self.n_test = parse_num(key, value)?,
            "n_channels" => self.n_channels = parse_num(key, value)?,
            "gamma_min" => self.gamma_min = parse_num(key, value)?,
            "gamma_max" => self.gamma_max = parse_num(key, value)?,
            "sigma_e2" => self.sigma_e2 = parse_num(key, value)?,
            "csi_training" => {
                self.csi_training = match value {
                    "per-sample" => CsiTraining::PerSample,
                    "fixed" => CsiTraining::Fixed,
                    _ => return Err(field_error(key, format!("expected per-sample or fixed, got {value:?}"))),
                }
            }
            "q" => self.q = parse_num(key, value)?,
            "sic_model" => {
                self.sic_model = match value {
                    "nominal" => SicModel::Nominal,
                    "moment-matched" => SicModel::MomentMatched,
                    _ => return Err(field_error(key, format!("expected nominal or moment-matched, got {value:?}"))),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "block_len" => self.block_len = parse_num(key, value)?,
            "viterbi_mode" => {
                self.viterbi_mode = match value {
                    "traceback" => ViterbiMode::Traceback,
                    "sequential" => ViterbiMode::Sequential,
                    _ => return Err(field_error(key, format!("expected traceback or sequential, got {value:?}"))),
                }
            }
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            _ => return Err(field_error(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(field_error("snr_db", "grid is empty"));
        }
        if let Some(bad) = self.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(field_error("snr_db", format!("{bad} is not finite")));
        }
        if self.n_test == 0 {
            return Err(field_error("n_test", "must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(field_error("detectors", "list is empty"));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(field_error("detectors", format!("{d} listed twice")));
            }
            if d.is_trellis() == self.channel.is_mimo() {
                return Err(field_error("detectors", format!("{d} does not run on {}", self.channel.name())));
            }
        }
        if self.detectors.iter().any(|d| d.is_learned()) && self.n_train == 0 {
            return Err(field_error("n_train", "learned detectors need training data"));
        }
        if self.n_channels == 0 {
            return Err(field_error("n_channels", "must be at least 1"));
        }
        if !(self.sigma_e2 >= 0.0) || !self.sigma_e2.is_finite() {
            return Err(field_error("sigma_e2", "must be finite and >= 0"));
        }
        if self.channel.is_mimo() {
            if self.users == 0 {
                return Err(field_error("users", "must be at least 1"));
            }
            if self.antennas == 0 {
                return Err(field_error("antennas", "must be at least 1"));
            }
            if self.q == 0 {
                return Err(field_error("q", "must be at least 1"));
            }
        } else {
            if self.memory == 0 {
                return Err(field_error("memory", "must be at least 1"));
            }
            if self.n_test <= self.memory {
                return Err(field_error("n_test", "must exceed the channel memory"));
            }
            if self.block_len <= self.memory {
                return Err(field_error("block_len", "must exceed the channel memory"));
            }
            if !(self.gamma_min >= 0.0) || !(self.gamma_max >= self.gamma_min) || !self.gamma_max.is_finite() {
                return Err(field_error("gamma_max", "need 0 <= gamma_min <= gamma_max"));
            }
        }
        if self.epochs == 0 {
            return Err(field_error("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(field_error("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(field_error("batch_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Renders the config in the format [`ExperimentConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let list = |v: Vec<String>| v.join(", ");
        let mut lines = vec![
            format!("channel = {}", self.channel.name()),
            format!("memory = {}", self.memory),
            format!("users = {}", self.users),
            format!("antennas = {}", self.antennas),
            format!(
                "mimo_matrix = {}",
                match self.mimo_matrix {
                    MimoMatrix::Decay => "decay",
                    MimoMatrix::Identity => "identity",
                }
            ),
            format!("detectors = {}", list(self.detectors.iter().map(|d| d.name().to_string()).collect())),
            format!("snr_db = {}", list(self.snr_db.iter().map(|v| format!("{v:?}")).collect())),
            format!("n_train = {}", self.n_train),
            format!("n_test = {}", self.n_test),
            format!("n_channels = {}", self.n_channels),
            format!("gamma_min = {:?}", self.gamma_min),
            format!("gamma_max = {:?}", self.gamma_max),
            format!("sigma_e2 = {:?}", self.sigma_e2),
            format!(
                "csi_training = {}",
                match self.csi_training {
                    CsiTraining::PerSample => "per-sample",
                    CsiTraining::Fixed => "fixed",
                }
            ),
            format!("q = {}", self.q),
            format!(
                "sic_model = {}",
                match self.sic_model {
                    SicModel::Nominal => "nominal",
                    SicModel::MomentMatched => "moment-matched",
                }
            ),
            format!("seed = {}", self.seed),
            format!("block_len = {}", self.block_len),
            format!(
                "viterbi_mode = {}",
                match self.viterbi_mode {
                    ViterbiMode::Traceback => "traceback",
                    ViterbiMode::Sequential => "sequential",
                }
            ),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("learning_rate = {:?}", self.learning_rate),
        ];
        if let Some(out) = &self.output {
            lines.push(format!("output = {}", out.display()));
        }
        lines.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Equally spaced decay exponents, inclusive of both ends.
    pub fn gamma_grid(&self) -> Vec<f64> {
        let n = self.n_channels;
        if n == 1 {
            return vec![self.gamma_min];
        }
        (0..n)
            .map(|i| self.gamma_min + (self.gamma_max - self.gamma_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }

    /// The budget the paper's protocol uses: 50000 test symbols per point.
    pub fn paper_scale(mut self) -> Self {
        self.n_test = 50_000;
        self
    }
}

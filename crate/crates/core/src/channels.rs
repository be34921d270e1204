//! Channel simulators, dataset generation and CSI perturbation.
//!
//! Windows are ordered current symbol first: `window[0]` is `s[i]`,
//! `window[tau]` is `s[i - tau]`. The tap vector uses the same order, so the
//! noiseless output is a plain dot product. Every module in the crate shares
//! this convention.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::rng::RngStream;
use crate::{Error, Result};

/// Ordered real symbol alphabet. Index `j` is the label of `points[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<f64>,
}

impl Constellation {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("constellation needs at least two points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("constellation points must be finite"));
        }
        for (i, a) in points.iter().enumerate() {
            if points[i + 1..].iter().any(|b| b == a) {
                return Err(Error::invalid(format!("duplicate constellation point {a}")));
            }
        }
        Ok(Self { points })
    }

    /// `{-1, +1}`.
    pub fn bpsk() -> Self {
        Self {
            points: vec![-1.0, 1.0],
        }
    }

    /// On-off keying, `{0, 1}`.
    pub fn ook() -> Self {
        Self {
            points: vec![0.0, 1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    pub fn values(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&j| self.points[j]).collect()
    }

    /// Mean of the uniform distribution over the points.
    pub fn mean(&self) -> f64 {
        self.points.iter().sum::<f64>() / self.points.len() as f64
    }

    pub fn random_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.points.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Awgn,
    Poisson,
}

impl ChannelKind {
    /// BPSK for Gaussian noise, OOK for the photon-counting channel.
    pub fn default_constellation(self) -> Constellation {
        match self {
            ChannelKind::Awgn => Constellation::bpsk(),
            ChannelKind::Poisson => Constellation::ook(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Poisson => "poisson",
        }
    }
}

/// Taps `exp(-gamma * tau)` for `tau = 0..l`.
pub fn make_decay_vector(gamma: f64, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::invalid("memory length must be at least 1"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("decay rate must be finite and >= 0, got {gamma}")));
    }
    Ok((0..l).map(|tau| (-gamma * tau as f64).exp()).collect())
}

/// Noiseless ISI output `sqrt(rho) * sum_tau h[tau] * window[tau]`.
pub fn isi_mean(window: &[f64], h: &[f64], rho: f64) -> Result<f64> {
    if window.len() != h.len() {
        return Err(Error::invalid(format!(
            "window length {} does not match {} taps",
            window.len(),
            h.len()
        )));
    }
    let dot: f64 = window.iter().zip(h).map(|(s, t)| s * t).sum();
    Ok(rho.sqrt() * dot)
}

/// Stationary causal channel with memory `taps.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMemoryChannel {
    kind: ChannelKind,
    taps: Vec<f64>,
    snr: f64,
}

impl FiniteMemoryChannel {
    pub fn new(kind: ChannelKind, taps: Vec<f64>, snr: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("channel needs at least one tap"));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::invalid(format!("snr must be positive and finite, got {snr}")));
        }
        Ok(Self { kind, taps, snr })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Linear-scale SNR `rho`.
    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn memory(&self) -> usize {
        self.taps.len()
    }

    /// Same channel with different taps.
    pub fn with_taps(&self, taps: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, taps, self.snr)
    }

    pub fn isi_mean(&self, window: &[f64]) -> Result<f64> {
        isi_mean(window, &self.taps, self.snr)
    }

    /// Poisson rate `isi_mean + 1`.
    pub fn poisson_rate(&self, window: &[f64]) -> Result<f64> {
        let rate = self.isi_mean(window)? + 1.0;
        if !(rate > 0.0) {
            return Err(Error::invalid(format!("poisson rate must be positive, got {rate}")));
        }
        Ok(rate)
    }

    /// AWGN output with an explicit standard-normal draw.
    pub fn awgn_output(&self, window: &[f64], noise: f64) -> Result<f64> {
        Ok(self.isi_mean(window)? + noise)
    }

    pub fn emit<R: Rng + ?Sized>(&self, window: &[f64], rng: &mut R) -> Result<f64> {
        match self.kind {
            ChannelKind::Awgn => {
                let noise: f64 = StandardNormal.sample(rng);
                self.awgn_output(window, noise)
            }
            ChannelKind::Poisson => sample_poisson(self.poisson_rate(window)?, rng),
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Poisson::new(rate)
        .map_err(|e| Error::invalid(format!("poisson rate {rate}: {e}")))?;
    Ok(dist.sample(rng))
}

/// Memoryless multi-user channel `y = H s + w` or its Poisson analogue.
#[derive(Clone, Debug, PartialEq)]
pub struct MimoChannel {
    kind: ChannelKind,
    gains: DMatrix<f64>,
    noise_var: f64,
}

impl MimoChannel {
    pub fn new(kind: ChannelKind, gains: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if gains.nrows() == 0 || gains.ncols() == 0 {
            return Err(Error::invalid("channel matrix must be non-empty"));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be positive and finite, got {noise_var}"
            )));
        }
        Ok(Self {
            kind,
            gains,
            noise_var,
        })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn gains(&self) -> &DMatrix<f64> {
        &self.gains
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn users(&self) -> usize {
        self.gains.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.gains.nrows()
    }

    pub fn with_gains(&self, gains: DMatrix<f64>) -> Result<Self> {
        Self::new(self.kind, gains, self.noise_var)
    }

    /// `H s`.
    pub fn noiseless(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.users() {
            return Err(Error::invalid(format!(
                "symbol vector has length {}, channel has {} users",
                s.len(),
                self.users()
            )));
        }
        Ok((0..self.antennas())
            .map(|i| (0..self.users()).map(|k| self.gains[(i, k)] * s[k]).sum())
            .collect())
    }

    /// Per-antenna Poisson rates `(H s)_j / sigma_w + 1`.
    pub fn poisson_rates(&self, s: &[f64]) -> Result<Vec<f64>> {
        let scale = self.noise_var.sqrt().recip();
        let rates: Vec<f64> = self.noiseless(s)?.iter().map(|v| v * scale + 1.0).collect();
        if let Some(bad) = rates.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::invalid(format!("poisson rate must be positive, got {bad}")));
        }
        Ok(rates)
    }

    pub fn emit<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self.kind {
            ChannelKind::Awgn => {
                let sigma = self.noise_var.sqrt();
                let mut y = self.noiseless(s)?;
                for v in &mut y {
                    let n: f64 = StandardNormal.sample(rng);
                    *v += sigma * n;
                }
                Ok(y)
            }
            ChannelKind::Poisson => self
                .poisson_rates(s)?
                .into_iter()
                .map(|rate| sample_poisson(rate, rng))
                .collect(),
        }
    }
}

/// `H[i][k] = exp(-|i - k|)`.
pub fn spatial_decay_matrix(antennas: usize, users: usize) -> DMatrix<f64> {
    DMatrix::from_fn(antennas, users, |i, k| (-(i.abs_diff(k) as f64)).exp())
}

/// Adds i.i.d. `N(0, sigma_e2)` to every tap.
pub fn perturb_csi_finite<R: Rng + ?Sized>(h: &[f64], sigma_e2: f64, rng: &mut R) -> Result<Vec<f64>> {
    let dist = gaussian(sigma_e2)?;
    Ok(h.iter().map(|t| t + dist.sample(rng)).collect())
}

/// Adds `N(0, sigma_e2 * |H[i][k]|)` to entry `(i, k)`; zero entries stay zero.
pub fn perturb_csi_mimo<R: Rng + ?Sized>(
    gains: &DMatrix<f64>,
    sigma_e2: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    gaussian(sigma_e2)?;
    let mut out = gains.clone();
    for v in out.iter_mut() {
        let std = (sigma_e2 * v.abs()).sqrt();
        let n: f64 = StandardNormal.sample(rng);
        *v += std * n;
    }
    Ok(out)
}

fn gaussian(variance: f64) -> Result<Normal<f64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::invalid(format!(
            "error variance must be finite and >= 0, got {variance}"
        )));
    }
    Normal::new(0.0, variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))
}

/// Labeled transmissions over a finite-memory channel.
///
/// `symbols` holds the `l - 1` warm-up symbols followed by the `n` labeled
/// ones, oldest first. Pair `i` pairs `observations[i]` with the window
/// ending at `symbols[i + l - 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMemoryDataset {
    memory: usize,
    symbols: Vec<usize>,
    observations: Vec<f64>,
}

impl FiniteMemoryDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Transmitted symbol indices aligned with the observations.
    pub fn labels(&self) -> &[usize] {
        self.symbols.get(self.memory - 1..).unwrap_or(&[])
    }

    /// Window of pair `i`, current symbol first.
    pub fn window(&self, i: usize) -> impl DoubleEndedIterator<Item = usize> + '_ {
        let end = i + self.memory;
        self.symbols[i..end].iter().rev().copied()
    }

    /// State index of pair `i`: `sum_tau idx(window[tau]) * m^tau`.
    pub fn state(&self, i: usize, m: usize) -> usize {
        self.window(i).rev().fold(0, |acc, j| acc * m + j)
    }
}

/// Draws `n` i.i.d. uniform symbols (plus a uniform warm-up prefix) and
/// pushes them through the channel.
pub fn generate_dataset(
    channel: &FiniteMemoryChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
) -> Result<FiniteMemoryDataset> {
    generate_with(channel, constellation, n, rng, |_, _| Ok(None))
}

/// Like [`generate_dataset`], but every observation is emitted through the
/// channel with freshly perturbed taps.
pub fn generate_dataset_perturbed(
    channel: &FiniteMemoryChannel,
    constellation: &Constellation,
    n: usize,
    sigma_e2: f64,
    rng: &mut RngStream,
) -> Result<FiniteMemoryDataset> {
    generate_dataset_with_taps(channel, constellation, n, rng, |ch, rng| {
        perturb_csi_finite(ch.taps(), sigma_e2, rng)
    })
}

/// Like [`generate_dataset`], but every observation is emitted with the taps
/// returned by `taps` for that sample.
pub fn generate_dataset_with_taps<F>(
    channel: &FiniteMemoryChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
    mut taps: F,
) -> Result<FiniteMemoryDataset>
where
    F: FnMut(&FiniteMemoryChannel, &mut RngStream) -> Result<Vec<f64>>,
{
    generate_with(channel, constellation, n, rng, |ch, rng| Ok(Some(ch.with_taps(taps(ch, rng)?)?)))
}

fn generate_with<F>(
    channel: &FiniteMemoryChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
    mut per_sample: F,
) -> Result<FiniteMemoryDataset>
where
    F: FnMut(&FiniteMemoryChannel, &mut RngStream) -> Result<Option<FiniteMemoryChannel>>,
{
    let l = channel.memory();
    if n == 0 {
        return Ok(FiniteMemoryDataset {
            memory: l,
            symbols: Vec::new(),
            observations: Vec::new(),
        });
    }
    let symbols: Vec<usize> = (0..n + l - 1).map(|_| constellation.random_index(rng)).collect();
    let mut observations = Vec::with_capacity(n);
    let mut window = vec![0.0; l];
    for i in 0..n {
        for (tau, w) in window.iter_mut().enumerate() {
            *w = constellation.point(symbols[i + l - 1 - tau]);
        }
        let y = match per_sample(channel, rng)? {
            Some(ch) => ch.emit(&window, rng)?,
            None => channel.emit(&window, rng)?,
        };
        observations.push(y);
    }
    Ok(FiniteMemoryDataset {
        memory: l,
        symbols,
        observations,
    })
}

/// Labeled transmissions over a MIMO channel, row-major per channel use.
#[derive(Clone, Debug, PartialEq)]
pub struct MimoDataset {
    users: usize,
    antennas: usize,
    symbols: Vec<usize>,
    observations: Vec<f64>,
}

impl MimoDataset {
    pub fn from_parts(
        users: usize,
        antennas: usize,
        symbols: Vec<usize>,
        observations: Vec<f64>,
    ) -> Result<Self> {
        if users == 0 || antennas == 0 {
            return Err(Error::invalid("dataset needs at least one user and one antenna"));
        }
        if symbols.len() % users != 0
            || observations.len() % antennas != 0
            || symbols.len() / users != observations.len() / antennas
        {
            return Err(Error::invalid("symbol and observation counts disagree"));
        }
        Ok(Self {
            users,
            antennas,
            symbols,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len() / self.antennas
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        &self.symbols[i * self.users..(i + 1) * self.users]
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.antennas..(i + 1) * self.antennas]
    }
}

pub fn generate_mimo_dataset(
    channel: &MimoChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
) -> Result<MimoDataset> {
    generate_mimo_with(channel, constellation, n, rng, |_, _| Ok(None))
}

/// Every channel use sees an independently perturbed gain matrix.
pub fn generate_mimo_dataset_perturbed(
    channel: &MimoChannel,
    constellation: &Constellation,
    n: usize,
    sigma_e2: f64,
    rng: &mut RngStream,
) -> Result<MimoDataset> {
    generate_mimo_dataset_with_gains(channel, constellation, n, rng, |ch, rng| {
        perturb_csi_mimo(ch.gains(), sigma_e2, rng)
    })
}

/// Every channel use is emitted with the gain matrix returned by `gains`.
pub fn generate_mimo_dataset_with_gains<F>(
    channel: &MimoChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
    mut gains: F,
) -> Result<MimoDataset>
where
    F: FnMut(&MimoChannel, &mut RngStream) -> Result<DMatrix<f64>>,
{
    generate_mimo_with(channel, constellation, n, rng, |ch, rng| Ok(Some(ch.with_gains(gains(ch, rng)?)?)))
}

fn generate_mimo_with<F>(
    channel: &MimoChannel,
    constellation: &Constellation,
    n: usize,
    rng: &mut RngStream,
    mut per_sample: F,
) -> Result<MimoDataset>
where
    F: FnMut(&MimoChannel, &mut RngStream) -> Result<Option<MimoChannel>>,
{
    let k = channel.users();
    let mut symbols = Vec::with_capacity(n * k);
    let mut observations = Vec::with_capacity(n * channel.antennas());
    for _ in 0..n {
        let labels: Vec<usize> = (0..k).map(|_| constellation.random_index(rng)).collect();
        let s = constellation.values(&labels);
        let y = match per_sample(channel, rng)? {
            Some(ch) => ch.emit(&s, rng)?,
            None => channel.emit(&s, rng)?,
        };
        symbols.extend(labels);
        observations.extend(y);
    }
    MimoDataset::from_parts(k, channel.antennas(), symbols, observations)
}

use nalgebra::{DMatrix, DVector};

use super::{argmax, SoftEstimate};
use crate::channels::{ChannelKind, Constellation, MimoChannel};
use crate::nn::log_softmax_in_place;
use crate::{Error, Result};

/// Largest number of candidate vectors the exhaustive MAP search will visit.
pub const MAP_CANDIDATE_LIMIT: u128 = 1 << 20;

/// Exhaustive MAP over all `m^K` symbol index vectors.
///
/// `log_score(s, y)` is any unnormalized log-posterior. Candidates are
/// enumerated with user 0 as the least significant digit and only a strictly
/// larger score replaces the incumbent, so ties go to the smallest encoded
/// candidate. NaN scores never win.
pub fn map_mimo_brute<F>(y: &[f64], log_score: F, users: usize, m: usize) -> Result<Vec<usize>>
where
    F: Fn(&[usize], &[f64]) -> f64,
{
    if users == 0 || m < 2 {
        return Err(Error::invalid("MAP search needs K >= 1 users and m >= 2 symbols"));
    }
    let candidates = (m as u128).checked_pow(users as u32).unwrap_or(u128::MAX);
    if candidates > MAP_CANDIDATE_LIMIT {
        return Err(Error::InstanceTooLarge {
            candidates,
            limit: MAP_CANDIDATE_LIMIT,
        });
    }
    let mut s = vec![0usize; users];
    let mut best = s.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut first = true;
    for _ in 0..candidates as usize {
        let score = log_score(&s, y);
        if first || score > best_score {
            if !score.is_nan() {
                best_score = score;
                best.copy_from_slice(&s);
                first = false;
            }
        }
        // Odometer increment, user 0 fastest.
        for digit in s.iter_mut() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(best)
}

/// `-|y - H s|^2 / (2 sigma_w^2)`.
pub fn awgn_log_score<'a>(
    channel: &'a MimoChannel,
    constellation: &'a Constellation,
) -> impl Fn(&[usize], &[f64]) -> f64 + 'a {
    let h = channel.gains();
    let scale = -0.5 / channel.noise_var();
    move |s, y| {
        let mut dist = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let mean: f64 = s.iter().enumerate().map(|(k, &d)| h[(i, k)] * constellation.point(d)).sum();
            dist += (yi - mean) * (yi - mean);
        }
        scale * dist
    }
}

/// `sum_j y_j ln(lambda_j) - lambda_j`, dropping the `ln y_j!` constant.
pub fn poisson_log_score<'a>(
    channel: &'a MimoChannel,
    constellation: &'a Constellation,
) -> impl Fn(&[usize], &[f64]) -> f64 + 'a {
    let h = channel.gains();
    let inv_sigma = channel.noise_var().sqrt().recip();
    move |s, y| {
        let mut total = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let mean: f64 = s.iter().enumerate().map(|(k, &d)| h[(i, k)] * constellation.point(d)).sum();
            let rate = mean * inv_sigma + 1.0;
            if !(rate > 0.0) {
                return f64::NEG_INFINITY;
            }
            total += yi * rate.ln() - rate;
        }
        total
    }
}

/// The linear Gaussian model `y - offset = H s + w`, `w ~ N(0, noise_var I)`,
/// that soft interference cancellation assumes.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    pub gains: DMatrix<f64>,
    pub offset: Vec<f64>,
    pub noise_var: f64,
}

impl LinearGaussianModel {
    pub fn new(gains: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::invalid(format!("noise variance must be finite and >= 0, got {noise_var}")));
        }
        let offset = vec![0.0; gains.nrows()];
        Ok(Self {
            gains,
            offset,
            noise_var,
        })
    }

    /// The channel's own `H` and `sigma_w^2`, whatever its kind. On a
    /// Poisson channel this is the mismatched model SIC is usually run with.
    pub fn from_channel(channel: &MimoChannel) -> Result<Self> {
        Self::new(channel.gains().clone(), channel.noise_var())
    }

    /// Like [`from_channel`](Self::from_channel) for AWGN. A Poisson channel
    /// is replaced by its first two moments: the offset is the dark rate 1,
    /// gains are scaled by `1/sigma_w`, and the noise variance is the rate
    /// averaged over antennas at the mean transmitted symbol.
    pub fn moment_matched(channel: &MimoChannel, constellation: &Constellation) -> Result<Self> {
        match channel.kind() {
            ChannelKind::Awgn => Self::from_channel(channel),
            ChannelKind::Poisson => {
                let gains = channel.gains() / channel.noise_var().sqrt();
                let mean_s = vec![constellation.mean(); channel.users()];
                let rates = channel.poisson_rates(&mean_s)?;
                let noise_var = rates.iter().sum::<f64>() / rates.len() as f64;
                Ok(Self {
                    gains,
                    offset: vec![1.0; channel.antennas()],
                    noise_var,
                })
            }
        }
    }

    pub fn users(&self) -> usize {
        self.gains.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.gains.nrows()
    }
}

/// One interference-cancellation pass. Every user is updated from the same
/// `priors`.
pub fn sic_iterate(
    y: &[f64],
    model: &LinearGaussianModel,
    constellation: &Constellation,
    priors: &[SoftEstimate],
) -> Result<Vec<SoftEstimate>> {
    let (n_r, users, m) = (model.antennas(), model.users(), constellation.len());
    if y.len() != n_r {
        return Err(Error::invalid(format!("observation has length {}, model has {n_r} antennas", y.len())));
    }
    if priors.len() != users || priors.iter().any(|p| p.probs().len() != m) {
        return Err(Error::invalid(format!("need {users} priors over {m} symbols")));
    }
    let moments: Vec<(f64, f64)> = priors.iter().map(|p| p.mean_and_variance(constellation.points())).collect();
    let centered = DVector::from_iterator(n_r, y.iter().zip(&model.offset).map(|(a, b)| a - b));
    let full = &model.gains * DVector::from_iterator(users, moments.iter().map(|mv| mv.0));

    let mut out = Vec::with_capacity(users);
    let mut scores = vec![0.0; m];
    for k in 0..users {
        let hk = model.gains.column(k);
        let z = &centered - (&full - hk * moments[k].0);
        let mut cov = DMatrix::from_diagonal_element(n_r, n_r, model.noise_var);
        for (l, &(_, var)) in moments.iter().enumerate() {
            if l != k && var > 0.0 {
                let hl = model.gains.column(l);
                cov.ger(var, &hl, &hl, 1.0);
            }
        }
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let trace = cov.trace();
                let ridge = if trace > 0.0 { 1e-10 * trace } else { 1e-10 };
                for i in 0..n_r {
                    cov[(i, i)] += ridge;
                }
                cov.cholesky()
                    .ok_or_else(|| Error::invalid("interference covariance is not positive definite"))?
            }
        };
        for (j, score) in scores.iter_mut().enumerate() {
            let d = &z - hk * constellation.point(j);
            let solved = chol.solve(&d);
            *score = -0.5 * d.dot(&solved);
        }
        log_softmax_in_place(&mut scores);
        let probs = scores.iter().map(|v| v.exp()).collect();
        out.push(SoftEstimate::normalized(probs)?);
    }
    Ok(out)
}

/// Runs `q` passes from uniform priors and returns the soft outputs.
pub fn sic_soft(
    y: &[f64],
    model: &LinearGaussianModel,
    constellation: &Constellation,
    q: usize,
) -> Result<Vec<SoftEstimate>> {
    if q == 0 {
        return Err(Error::invalid("SIC needs at least one iteration"));
    }
    let mut priors = vec![SoftEstimate::uniform(constellation.len()); model.users()];
    for _ in 0..q {
        priors = sic_iterate(y, model, constellation, &priors)?;
    }
    Ok(priors)
}

/// Iterative soft interference cancellation with per-user hard decisions.
pub fn iterative_sic(
    y: &[f64],
    model: &LinearGaussianModel,
    constellation: &Constellation,
    q: usize,
) -> Result<Vec<usize>> {
    Ok(sic_soft(y, model, constellation, q)?.iter().map(|p| argmax(p.probs())).collect())
}

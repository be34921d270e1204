//! One-dimensional Gaussian mixtures fitted by expectation-maximization.
//!
//! Used as the marginal density estimate of a scalar channel output. The
//! fit starts from a deterministic initialization (k-quantile means, uniform
//! weights, global sample variance), so it needs no seed.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Lower bound on every component variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::invalid("mixture needs matching, non-empty parameter vectors"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be a probability vector"));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mixture means must be finite and variances positive"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        let mut terms = [0.0; 64];
        if self.components() <= terms.len() {
            let terms = &mut terms[..self.components()];
            self.component_log_terms(y, terms);
            crate::nn::log_sum_exp(terms)
        } else {
            let mut terms = vec![0.0; self.components()];
            self.component_log_terms(y, &mut terms);
            crate::nn::log_sum_exp(&terms)
        }
    }

    /// `ln w_j + ln N(y; mu_j, var_j)` for every component.
    fn component_log_terms(&self, y: f64, out: &mut [f64]) {
        for j in 0..self.components() {
            out[j] = self.weights[j].ln() + ln_normal(y, self.means[j], self.variances[j]);
        }
    }
}

/// Free-function form of [`Gmm::pdf`].
pub fn gmm_pdf(g: &Gmm, y: f64) -> f64 {
    g.pdf(y)
}

#[inline]
pub fn ln_normal(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iters: usize,
    /// Stop once an iteration gains less total log-likelihood than this.
    pub tol: f64,
}

impl GmmConfig {
    pub fn with_components(components: usize) -> Self {
        Self {
            components,
            max_iters: 200,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub gmm: Gmm,
    /// Total log-likelihood of the samples before each M-step and after the
    /// last one.
    pub log_likelihoods: Vec<f64>,
}

pub fn fit_gmm(samples: &[f64], cfg: &GmmConfig) -> Result<GmmFit> {
    let k = cfg.components;
    if k == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if samples.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot fit {k} components",
            samples.len()
        )));
    }
    if samples.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let n = samples.len();
    let mut gmm = initial_mixture(samples, k);
    let mut resp = vec![0.0; n * k];
    let mut log_likelihoods = Vec::new();

    let mut ll = e_step(&gmm, samples, &mut resp);
    log_likelihoods.push(ll);
    for _ in 0..cfg.max_iters {
        m_step(&mut gmm, samples, &resp);
        let next = e_step(&gmm, samples, &mut resp);
        log_likelihoods.push(next);
        let gain = next - ll;
        ll = next;
        if gain < cfg.tol {
            break;
        }
    }
    Ok(GmmFit { gmm, log_likelihoods })
}

fn initial_mixture(samples: &[f64], k: usize) -> Gmm {
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let means = (0..k)
        .map(|j| {
            let idx = (((j as f64 + 0.5) * n as f64 / k as f64) as usize).min(n - 1);
            sorted[idx]
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    Gmm {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![var.max(VARIANCE_FLOOR); k],
    }
}

/// Fills responsibilities and returns the total log-likelihood.
fn e_step(gmm: &Gmm, samples: &[f64], resp: &mut [f64]) -> f64 {
    let k = gmm.components();
    let mut total = 0.0;
    for (i, &y) in samples.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        gmm.component_log_terms(y, row);
        let lse = crate::nn::log_sum_exp(row);
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(gmm: &mut Gmm, samples: &[f64], resp: &[f64]) {
    let k = gmm.components();
    let n = samples.len() as f64;
    for j in 0..k {
        let mut mass = 0.0;
        let mut first = 0.0;
        for (i, &y) in samples.iter().enumerate() {
            let r = resp[i * k + j];
            mass += r;
            first += r * y;
        }
        gmm.weights[j] = mass / n;
        if mass <= 0.0 {
            continue;
        }
        let mean = first / mass;
        let second: f64 = samples
            .iter()
            .enumerate()
            .map(|(i, &y)| resp[i * k + j] * (y - mean).powi(2))
            .sum();
        gmm.means[j] = mean;
        gmm.variances[j] = (second / mass).max(VARIANCE_FLOOR);
    }
    let total: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= total);
}

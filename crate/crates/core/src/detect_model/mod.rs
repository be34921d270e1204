//! Channel-model-based detectors.
//!
//! Finite-memory detectors work on a [`Trellis`] of `m^l` states and consume
//! per-observation costs ([`StateCost`]) or factor-graph function nodes
//! ([`FunctionNode`]). Neither trait cares where the numbers come from, which
//! is what lets the learned detectors reuse these algorithms unchanged.

mod bcjr;
mod exact;
mod mimo;
mod trellis;
mod viterbi;

pub use bcjr::{bcjr, bcjr_with, hard_decisions};
pub use exact::{exact_cost, exact_function_node, CostNode, ExactCost};
pub use mimo::{
    awgn_log_score, iterative_sic, map_mimo_brute, sic_soft, poisson_log_score, sic_iterate, LinearGaussianModel,
    MAP_CANDIDATE_LIMIT,
};
pub use trellis::Trellis;
pub use viterbi::{viterbi, viterbi_costs, ViterbiMode};

use crate::{Error, Result};

/// Negative log-likelihood `c(y, s)` of an observation under each state.
///
/// Implementations must not depend on the time index.
pub trait StateCost {
    fn num_states(&self) -> usize;

    fn cost(&self, y: f64, state: usize) -> f64;

    /// Costs of all states for one observation.
    fn fill(&self, y: f64, out: &mut [f64]) {
        for (s, c) in out.iter_mut().enumerate() {
            *c = self.cost(y, s);
        }
    }
}

/// Factor-graph function node `f(y, s_i, s_{i-1})`.
pub trait FunctionNode {
    fn trellis(&self) -> Trellis;

    fn value(&self, y: f64, state: usize, prev: usize) -> f64;

    /// Fills `out[state * S + prev]` with the node values up to one positive
    /// factor shared by the whole table. BCJR posteriors do not see such a
    /// factor, and implementations use it to keep the table away from
    /// underflow.
    fn fill_scaled(&self, y: f64, out: &mut [f64]) {
        let n = self.trellis().num_states();
        for s in 0..n {
            for p in 0..n {
                out[s * n + p] = self.value(y, s, p);
            }
        }
    }
}

/// Tolerance on the probability-vector sum.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Per-symbol probability vector over the constellation.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftEstimate(Vec<f64>);

impl SoftEstimate {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("soft estimate must be non-empty"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid(format!("soft estimate has a negative or NaN entry: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("soft estimate sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Scales non-negative weights onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::invalid(format!("cannot normalize weights summing to {sum}")));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// `(sum_j a_j p_j, sum_j (a_j - e)^2 p_j)` for constellation points `a`.
    pub fn mean_and_variance(&self, points: &[f64]) -> (f64, f64) {
        let e: f64 = points.iter().zip(&self.0).map(|(a, p)| a * p).sum();
        let v: f64 = points.iter().zip(&self.0).map(|(a, p)| (a - e).powi(2) * p).sum();
        (e, v)
    }
}

/// Lowest index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Lowest index of the minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

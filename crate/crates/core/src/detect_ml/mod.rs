//! Data-driven detectors.
//!
//! ViterbiNet and BCJRNet run the usual trellis recursions on costs derived
//! from a learned state posterior `p(s|y)` and a learned marginal `p(y)`:
//! with equiprobable states, `p(y|s) = m^l p(s|y) p(y)`. DeepSIC replaces
//! every soft interference cancellation step with a small classifier.

mod deepsic;
mod io;

pub use deepsic::{
    deepsic_detect, deepsic_forward, deepsic_gradient, deepsic_sum_loss, deepsic_train_e2e,
    deepsic_train_e2e_with, deepsic_train_seq, DeepSicArch, DeepSicFit, DeepSicNet, GradientFlow,
};
pub use io::{read_deepsic, read_likelihood_model, read_model, write_deepsic, write_likelihood_model, Model};

use crate::channels::{Constellation, FiniteMemoryChannel, FiniteMemoryDataset};
use crate::density::{fit_gmm, Gmm, GmmConfig};
use crate::detect_model::{
    bcjr, exact_cost, hard_decisions, viterbi, CostNode, ExactCost, SoftEstimate, StateCost, Trellis, ViterbiMode,
};
use crate::nn::{log_sum_exp, train, Activation, Mlp, MlpSpec, Samples, TrainConfig};
use crate::{Error, Result};

/// Smallest log-value a learned cost will use, `ln(f64::MIN_POSITIVE)`.
pub const LN_FLOOR: f64 = -708.3964185322641;

/// Log state posterior `ln p(s | y)` for every state.
pub trait StatePosterior {
    fn num_states(&self) -> usize;
    fn log_posterior(&self, y: f64, out: &mut [f64]);
}

/// Log density `ln p(y)` of the channel output.
pub trait MarginalDensity {
    fn ln_pdf(&self, y: f64) -> f64;
}

impl StatePosterior for Mlp {
    fn num_states(&self) -> usize {
        self.spec().classes()
    }

    fn log_posterior(&self, y: f64, out: &mut [f64]) {
        let lp = self.log_probs(&[y]).expect("classifier takes one input");
        out.copy_from_slice(&lp);
    }
}

impl MarginalDensity for Gmm {
    fn ln_pdf(&self, y: f64) -> f64 {
        Gmm::ln_pdf(self, y)
    }
}

/// Posterior and marginal pair together with the trellis they live on.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodModel<P = Mlp, D = Gmm> {
    trellis: Trellis,
    constellation: Constellation,
    posterior: P,
    marginal: D,
}

impl<P: StatePosterior, D: MarginalDensity> LikelihoodModel<P, D> {
    pub fn new(constellation: Constellation, memory: usize, posterior: P, marginal: D) -> Result<Self> {
        let trellis = Trellis::new(constellation.len(), memory)?;
        if posterior.num_states() != trellis.num_states() {
            return Err(Error::invalid(format!(
                "posterior covers {} states, trellis has {}",
                posterior.num_states(),
                trellis.num_states()
            )));
        }
        Ok(Self {
            trellis,
            constellation,
            posterior,
            marginal,
        })
    }

    pub fn trellis(&self) -> Trellis {
        self.trellis
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn posterior(&self) -> &P {
        &self.posterior
    }

    pub fn marginal(&self) -> &D {
        &self.marginal
    }
}

/// The classifier used for `p(s|y)`: `1 -> 100 -> 50 -> m^l`.
pub fn likelihood_classifier_spec(states: usize) -> Result<MlpSpec> {
    MlpSpec::new(vec![1, 100, 50, states], vec![Activation::Sigmoid, Activation::Relu])
}

/// Trains the posterior classifier on `(y, state)` pairs and fits an
/// `m^l`-component mixture to the outputs.
pub fn train_likelihood_model(
    data: &FiniteMemoryDataset,
    constellation: &Constellation,
    cfg: &TrainConfig,
) -> Result<LikelihoodModel> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let trellis = Trellis::new(constellation.len(), data.memory())?;
    let states = trellis.num_states();
    let mut samples = Samples::new(1);
    for (i, &y) in data.observations().iter().enumerate() {
        samples.push(&[y], data.state(i, constellation.len()));
    }
    let classifier = train(&likelihood_classifier_spec(states)?, &samples, cfg)?.mlp;
    let marginal = fit_gmm(data.observations(), &GmmConfig::with_components(states))?.gmm;
    LikelihoodModel::new(constellation.clone(), data.memory(), classifier, marginal)
}

/// `c(y, s) = -ln(m^l p(s|y) p(y))`, with each log factor floored at
/// [`LN_FLOOR`].
#[derive(Clone, Copy, Debug)]
pub struct LearnedCost<'a, P, D> {
    model: &'a LikelihoodModel<P, D>,
    ln_states: f64,
}

pub fn learned_cost<P: StatePosterior, D: MarginalDensity>(model: &LikelihoodModel<P, D>) -> LearnedCost<'_, P, D> {
    LearnedCost {
        model,
        ln_states: (model.trellis.num_states() as f64).ln(),
    }
}

impl<P: StatePosterior, D: MarginalDensity> StateCost for LearnedCost<'_, P, D> {
    fn num_states(&self) -> usize {
        self.model.trellis.num_states()
    }

    fn cost(&self, y: f64, state: usize) -> f64 {
        let mut out = vec![0.0; self.num_states()];
        self.fill(y, &mut out);
        out[state]
    }

    fn fill(&self, y: f64, out: &mut [f64]) {
        self.model.posterior.log_posterior(y, out);
        let shared = self.ln_states + floor_ln(self.model.marginal.ln_pdf(y));
        for c in out.iter_mut() {
            *c = -(shared + floor_ln(*c));
        }
    }
}

fn floor_ln(v: f64) -> f64 {
    if v.is_nan() {
        LN_FLOOR
    } else {
        v.max(LN_FLOOR)
    }
}

/// Function node built from [`learned_cost`].
pub fn learned_function_node<P: StatePosterior, D: MarginalDensity>(
    model: &LikelihoodModel<P, D>,
) -> CostNode<LearnedCost<'_, P, D>> {
    CostNode::new(learned_cost(model), model.trellis)
}

pub fn viterbinet_detect<P: StatePosterior, D: MarginalDensity>(
    model: &LikelihoodModel<P, D>,
    y: &[f64],
    mode: ViterbiMode,
) -> Result<Vec<usize>> {
    viterbi(y, &learned_cost(model), model.trellis, mode)
}

pub fn bcjrnet_posteriors<P: StatePosterior, D: MarginalDensity>(
    model: &LikelihoodModel<P, D>,
    y: &[f64],
) -> Result<Vec<SoftEstimate>> {
    bcjr(y, &learned_function_node(model))
}

pub fn bcjrnet_detect<P: StatePosterior, D: MarginalDensity>(
    model: &LikelihoodModel<P, D>,
    y: &[f64],
) -> Result<Vec<usize>> {
    Ok(hard_decisions(&bcjrnet_posteriors(model, y)?))
}

/// The exact posterior `p(s|y)` of a known channel under uniform states.
#[derive(Clone, Debug)]
pub struct ExactPosterior(ExactCost);

/// The exact output density `p(y) = m^-l sum_s p(y|s)` of a known channel.
#[derive(Clone, Debug)]
pub struct ExactMarginal(ExactCost);

fn log_likelihoods(cost: &ExactCost, y: f64, out: &mut [f64]) {
    cost.fill(y, out);
    out.iter_mut().for_each(|c| *c = -*c);
}

impl StatePosterior for ExactPosterior {
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    fn log_posterior(&self, y: f64, out: &mut [f64]) {
        log_likelihoods(&self.0, y, out);
        let norm = log_sum_exp(out);
        out.iter_mut().for_each(|v| *v -= norm);
    }
}

impl MarginalDensity for ExactMarginal {
    fn ln_pdf(&self, y: f64) -> f64 {
        let mut out = vec![0.0; self.0.num_states()];
        log_likelihoods(&self.0, y, &mut out);
        log_sum_exp(&out) - (out.len() as f64).ln()
    }
}

/// A likelihood model whose components are the analytic posterior and
/// marginal of `channel`. Its learned cost equals the exact cost up to
/// rounding.
pub fn exact_plug_in(channel: &FiniteMemoryChannel) -> Result<LikelihoodModel<ExactPosterior, ExactMarginal>> {
    let cost = exact_cost(channel)?;
    LikelihoodModel::new(
        channel.kind().default_constellation(),
        channel.memory(),
        ExactPosterior(cost.clone()),
        ExactMarginal(cost),
    )
}

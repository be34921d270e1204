//! Brute-force equivalence suites.
//!
//! Each suite compares a detector against an exhaustive or decoupled
//! computation written independently of the detector code.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::channels::{generate_dataset, make_decay_vector, ChannelKind, Constellation, FiniteMemoryChannel, MimoChannel};
use crate::detect_ml::{
    bcjrnet_detect, deepsic_gradient, deepsic_sum_loss, exact_plug_in, learned_cost, likelihood_classifier_spec,
    viterbinet_detect, DeepSicArch, DeepSicNet, GradientFlow,
};
use crate::detect_model::{
    awgn_log_score, bcjr, exact_cost, exact_function_node, hard_decisions, iterative_sic, map_mimo_brute,
    viterbi, viterbi_costs, FunctionNode, LinearGaussianModel, StateCost, Trellis, ViterbiMode,
};
use crate::nn::{gradient_check, relative_error, Activation, Mlp, MlpSpec};
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    ViterbiExhaustive,
    BcjrMarginals,
    SicMap,
    PluginConsistency,
    Gradient,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] =
        ["viterbi-exhaustive", "bcjr-marginals", "sic-map", "plugin-consistency", "gradient", "all"];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "viterbi-exhaustive" => Self::ViterbiExhaustive,
            "bcjr-marginals" => Self::BcjrMarginals,
            "sic-map" => Self::SicMap,
            "plugin-consistency" => Self::PluginConsistency,
            "gradient" => Self::Gradient,
            "all" => Self::All,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown suite {name:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(OracleCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs the named suite with draws keyed by `seed`.
pub fn oracle_check(suite: &str, seed: u64) -> Result<OracleReport> {
    let suite = Suite::parse(suite)?;
    let mut report = OracleReport::default();
    let rng = RngStream::new(seed, 0x0AC1E);
    let run = |s: Suite| suite == s || suite == Suite::All;
    if run(Suite::ViterbiExhaustive) {
        viterbi_exhaustive(&mut rng.derive(&[1]), &mut report)?;
    }
    if run(Suite::BcjrMarginals) {
        bcjr_marginals(&mut rng.derive(&[2]), &mut report)?;
    }
    if run(Suite::SicMap) {
        sic_map(&mut rng.derive(&[3]), &mut report)?;
    }
    if run(Suite::PluginConsistency) {
        plugin_consistency(&mut rng.derive(&[4]), 100_000, &mut report)?;
    }
    if run(Suite::Gradient) {
        gradients(&mut rng.derive(&[5]), &mut report)?;
    }
    Ok(report)
}

/// Window `(s[i], s[i-1], ..., s[i-l+1])` of a full binary sequence whose
/// first `l - 1` entries are the prefix, encoded current-symbol-first.
fn window_state(seq: &[usize], i: usize, l: usize, m: usize) -> usize {
    let mut state = 0;
    let mut weight = 1;
    for tau in 0..l {
        state += seq[i + l - 1 - tau] * weight;
        weight *= m;
    }
    state
}

fn digits(mut code: usize, len: usize, m: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let d = code % m;
            code /= m;
            d
        })
        .collect()
}

/// Minimum of `sum_i cost[i][state_i]` over every sequence including the
/// prefix; returns the last `t` symbols of the minimizer.
pub(crate) fn exhaustive_ml(costs: &[f64], t: usize, l: usize, m: usize) -> Vec<usize> {
    let s = m.pow(l as u32);
    let len = t + l - 1;
    let mut best = (f64::INFINITY, Vec::new());
    for code in 0..m.pow(len as u32) {
        let seq = digits(code, len, m);
        let total: f64 = (0..t).map(|i| costs[i * s + window_state(&seq, i, l, m)]).sum();
        if total < best.0 {
            best = (total, seq[l - 1..].to_vec());
        }
    }
    best.1
}

fn viterbi_exhaustive(rng: &mut RngStream, report: &mut OracleReport) -> Result<()> {
    let (t, m) = (6, 2);
    for l in 1..=3 {
        let trellis = Trellis::new(m, l)?;
        let s = trellis.num_states();
        let mut matches = 0;
        for _ in 0..100 {
            let costs: Vec<f64> = (0..t * s).map(|_| rng.random_range(0.0..5.0)).collect();
            let got = viterbi_costs(&costs, trellis, ViterbiMode::Traceback)?;
            if got == exhaustive_ml(&costs, t, l, m) {
                matches += 1;
            }
        }
        report.push(
            format!("viterbi-exhaustive l={l}"),
            matches == 100,
            format!("{matches}/100 exact matches (t={t}, m={m})"),
        );
    }
    Ok(())
}

/// Function node given by explicit tables, one per time index; the
/// observation is the time index.
pub(crate) struct TableNode {
    pub trellis: Trellis,
    pub tables: Vec<Vec<f64>>,
}

impl FunctionNode for TableNode {
    fn trellis(&self) -> Trellis {
        self.trellis
    }

    fn value(&self, y: f64, state: usize, prev: usize) -> f64 {
        self.tables[y as usize][state * self.trellis.num_states() + prev]
    }
}

/// Random strictly positive values on shift-consistent pairs, zero elsewhere.
pub(crate) fn random_node<R: Rng>(rng: &mut R, t: usize, l: usize, m: usize) -> Result<TableNode> {
    let trellis = Trellis::new(m, l)?;
    let s = trellis.num_states();
    let top = s / m;
    let tables = (0..t)
        .map(|_| {
            let mut table = vec![0.0; s * s];
            for state in 0..s {
                for prev in 0..s {
                    // Consistent when the state's older l-1 symbols are the
                    // previous state's newer l-1 symbols.
                    if state / m == prev % top {
                        table[state * s + prev] = rng.random_range(0.05..1.0);
                    }
                }
            }
            table
        })
        .collect();
    Ok(TableNode { trellis, tables })
}

/// Marginals `P(s_i = a)` from the product of node values over every full
/// sequence, including the symbol before the prefix.
pub(crate) fn exhaustive_marginals(node: &TableNode, t: usize, l: usize, m: usize) -> Vec<Vec<f64>> {
    let s = m.pow(l as u32);
    let len = t + l;
    let mut marg = vec![vec![0.0; m]; t];
    for code in 0..m.pow(len as u32) {
        let seq = digits(code, len, m);
        let mut w = 1.0;
        for i in 0..t {
            let state = window_state(&seq[1..], i, l, m);
            let prev = window_state(&seq, i, l, m);
            w *= node.tables[i][state * s + prev];
        }
        for (i, row) in marg.iter_mut().enumerate() {
            row[seq[i + l]] += w;
        }
    }
    for row in &mut marg {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= z);
    }
    marg
}

fn bcjr_marginals(rng: &mut RngStream, report: &mut OracleReport) -> Result<()> {
    let (t, m) = (6, 2);
    for l in 1..=3 {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let node = random_node(rng, t, l, m)?;
            let y: Vec<f64> = (0..t).map(|i| i as f64).collect();
            let post = bcjr(&y, &node)?;
            let exact = exhaustive_marginals(&node, t, l, m);
            for (p, e) in post.iter().zip(&exact) {
                for (a, b) in p.probs().iter().zip(e) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        report.push(
            format!("bcjr-marginals l={l}"),
            worst <= 1e-9,
            format!("max |posterior - marginal| = {worst:.3e} over 100 instances (t={t}, m={m})"),
        );
    }
    Ok(())
}

fn sic_map(rng: &mut RngStream, report: &mut OracleReport) -> Result<()> {
    let c = Constellation::bpsk();

    // One user: SIC has nothing to cancel and must agree with MAP.
    let ch = MimoChannel::new(ChannelKind::Awgn, DMatrix::from_column_slice(3, 1, &[1.0, 0.5, -0.3]), 0.7)?;
    let model = LinearGaussianModel::from_channel(&ch)?;
    let score = awgn_log_score(&ch, &c);
    let mut mismatches = 0;
    for _ in 0..2000 {
        let s = [c.random_index(rng)];
        let y = ch.emit(&c.values(&s), rng)?;
        if iterative_sic(&y, &model, &c, 5)? != map_mimo_brute(&y, &score, 1, 2)? {
            mismatches += 1;
        }
    }
    report.push("sic-map K=1", mismatches == 0, format!("{mismatches} mismatches in 2000 draws"));

    // Decoupled 2x2 channel: each user's MAP is the sign of its own output.
    let ch = MimoChannel::new(ChannelKind::Awgn, DMatrix::identity(2, 2), 0.5)?;
    let model = LinearGaussianModel::from_channel(&ch)?;
    let score = awgn_log_score(&ch, &c);
    let (mut sic_bad, mut map_bad) = (0, 0);
    for _ in 0..10_000 {
        let s = [c.random_index(rng), c.random_index(rng)];
        let y = ch.emit(&c.values(&s), rng)?;
        let scalar: Vec<usize> = y.iter().map(|&v| usize::from(v > 0.0)).collect();
        sic_bad += usize::from(iterative_sic(&y, &model, &c, 5)? != scalar);
        map_bad += usize::from(map_mimo_brute(&y, &score, 2, 2)? != scalar);
    }
    report.push(
        "sic-map 2x2 identity",
        sic_bad == 0 && map_bad == 0,
        format!("SIC {sic_bad}, MAP {map_bad} mismatches against scalar MAP in 10000 draws"),
    );

    // Exhaustive MAP against a direct double loop on random 2x2 channels.
    let mut mismatches = 0;
    for _ in 0..1000 {
        let h = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let ch = MimoChannel::new(ChannelKind::Awgn, h.clone(), 0.4)?;
        let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let mut best = (f64::INFINITY, vec![0, 0]);
        for a in 0..2 {
            for b in 0..2 {
                let (sa, sb) = (c.point(a), c.point(b));
                let d = (y[0] - h[(0, 0)] * sa - h[(0, 1)] * sb).powi(2) + (y[1] - h[(1, 0)] * sa - h[(1, 1)] * sb).powi(2);
                if d < best.0 {
                    best = (d, vec![a, b]);
                }
            }
        }
        mismatches += usize::from(map_mimo_brute(&y, awgn_log_score(&ch, &c), 2, 2)? != best.1);
    }
    report.push("map double-loop K=2", mismatches == 0, format!("{mismatches} mismatches in 1000 draws"));
    Ok(())
}

/// Plug-in consistency on the ISI-AWGN channel with `l = 4`, `gamma = 0.5`
/// and `rho = 4`, over `n` symbols in blocks of 1000.
pub(crate) fn plugin_consistency(rng: &mut RngStream, n: usize, report: &mut OracleReport) -> Result<()> {
    let ch = FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.5, 4)?, 4.0)?;
    let c = Constellation::bpsk();
    let model = exact_plug_in(&ch)?;
    let cost = exact_cost(&ch)?;
    let node = exact_function_node(&ch)?;
    let learned = learned_cost(&model);
    let trellis = cost.trellis();
    let s = trellis.num_states();
    let (mut worst, mut vit_bad, mut bcjr_bad, mut total) = (0.0f64, 0usize, 0usize, 0usize);
    let (mut a, mut b) = (vec![0.0; s], vec![0.0; s]);
    let mut remaining = n;
    while remaining > 0 {
        let len = remaining.min(1000);
        remaining -= len;
        let block = generate_dataset(&ch, &c, len, rng)?;
        let y = block.observations();
        for &obs in y {
            learned.fill(obs, &mut a);
            cost.fill(obs, &mut b);
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs());
            }
        }
        let model_v = viterbi(y, &cost, trellis, ViterbiMode::Traceback)?;
        let net_v = viterbinet_detect(&model, y, ViterbiMode::Traceback)?;
        vit_bad += model_v.iter().zip(&net_v).filter(|(p, q)| p != q).count();
        let model_b = hard_decisions(&bcjr(y, &node)?);
        let net_b = bcjrnet_detect(&model, y)?;
        bcjr_bad += model_b.iter().zip(&net_b).filter(|(p, q)| p != q).count();
        total += len;
    }
    report.push(
        "plugin-consistency costs",
        worst <= 1e-9,
        format!("max |learned - exact| cost = {worst:.3e} over {total} observations"),
    );
    report.push(
        "plugin-consistency viterbinet",
        vit_bad == 0,
        format!("{vit_bad} decision mismatches against viterbi in {total} symbols"),
    );
    report.push(
        "plugin-consistency bcjrnet",
        bcjr_bad == 0,
        format!("{bcjr_bad} decision mismatches against bcjr in {total} symbols"),
    );
    Ok(())
}

fn gradients(rng: &mut RngStream, report: &mut OracleReport) -> Result<()> {
    let users = 4;
    let e2e = DeepSicArch::EndToEnd.block_spec(4 + (users - 1) * 2, 2)?;
    let seq = DeepSicArch::Sequential.block_spec(4 + (users - 1) * 2, 2)?;
    let arches: [(&str, MlpSpec); 3] = [
        ("likelihood classifier 1-100-50-16", likelihood_classifier_spec(16)?),
        ("deepsic end-to-end block 10-60-2", e2e),
        ("deepsic sequential block 10-100-50-2", seq),
    ];
    for (name, spec) in arches {
        let mut worst: f64 = 0.0;
        for trial in 0..3 {
            let mlp = Mlp::init(spec.clone(), rng.random());
            let x: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
            worst = worst.max(gradient_check(&mlp, &x, trial % spec.classes()));
        }
        report.push(format!("gradient {name}"), worst <= 1e-5, format!("max relative error {worst:.3e}"));
    }

    // Joint sum loss of a small grid, back-propagated through the soft
    // estimates passed between columns.
    let spec = MlpSpec::new(vec![2 + 2, 5, 2], vec![Activation::Sigmoid])?;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let blocks = (0..4).map(|_| Mlp::init(spec.clone(), rng.random())).collect();
        let net = DeepSicNet::from_blocks(Constellation::bpsk(), 2, 2, 2, blocks)?;
        let y = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let labels = [rng.random_range(0..2), rng.random_range(0..2)];
        let (_, grads) = deepsic_gradient(&net, &y, &labels, GradientFlow::Through)?;
        let step = 1e-5;
        for (b, grad) in grads.iter().enumerate() {
            for (p, &g) in grad.iter().enumerate() {
                let shifted = |delta: f64| -> Result<f64> {
                    let mut blocks = net.blocks().to_vec();
                    blocks[b].params_mut()[p] += delta;
                    let probe = DeepSicNet::from_blocks(Constellation::bpsk(), 2, 2, 2, blocks)?;
                    deepsic_sum_loss(&probe, &y, &labels)
                };
                let numeric = (shifted(step)? - shifted(-step)?) / (2.0 * step);
                worst = worst.max(relative_error(g, numeric));
            }
        }
    }
    report.push(
        "gradient deepsic joint loss (K=2, Q=2, 5 neurons)",
        worst <= 1e-5,
        format!("max relative error {worst:.3e}"),
    );
    Ok(())
}

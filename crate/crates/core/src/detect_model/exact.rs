use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::{FunctionNode, StateCost, Trellis};
use crate::channels::{ChannelKind, Constellation, FiniteMemoryChannel};
use crate::Result;

/// Exact negative log-likelihood of a known finite-memory channel.
#[derive(Clone, Debug)]
pub struct ExactCost {
    trellis: Trellis,
    kind: ChannelKind,
    /// Noiseless output per state (Poisson: the rate).
    levels: Vec<f64>,
}

impl ExactCost {
    pub fn new(channel: &FiniteMemoryChannel, constellation: &Constellation) -> Result<Self> {
        let trellis = Trellis::new(constellation.len(), channel.memory())?;
        let levels = (0..trellis.num_states())
            .map(|s| {
                let window = constellation.values(&trellis.decode(s));
                match channel.kind() {
                    ChannelKind::Awgn => channel.isi_mean(&window),
                    ChannelKind::Poisson => channel.poisson_rate(&window),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            trellis,
            kind: channel.kind(),
            levels,
        })
    }

    pub fn trellis(&self) -> Trellis {
        self.trellis
    }

    /// `ln p(y | state)`.
    pub fn log_likelihood(&self, y: f64, state: usize) -> f64 {
        -self.cost(y, state)
    }
}

impl StateCost for ExactCost {
    fn num_states(&self) -> usize {
        self.trellis.num_states()
    }

    fn cost(&self, y: f64, state: usize) -> f64 {
        let level = self.levels[state];
        match self.kind {
            ChannelKind::Awgn => 0.5 * (2.0 * PI).ln() + 0.5 * (y - level) * (y - level),
            ChannelKind::Poisson => level - y * level.ln() + ln_gamma(y + 1.0),
        }
    }
}

/// Builds the exact cost for `channel` over its default constellation.
pub fn exact_cost(channel: &FiniteMemoryChannel) -> Result<ExactCost> {
    ExactCost::new(channel, &channel.kind().default_constellation())
}

/// Function node `(1/m) exp(-cost(y, s))` on shift-consistent pairs and zero
/// elsewhere.
#[derive(Clone, Debug)]
pub struct CostNode<C> {
    cost: C,
    trellis: Trellis,
}

impl<C: StateCost> CostNode<C> {
    pub fn new(cost: C, trellis: Trellis) -> Self {
        assert_eq!(cost.num_states(), trellis.num_states(), "cost and trellis disagree");
        Self { cost, trellis }
    }

    pub fn cost_fn(&self) -> &C {
        &self.cost
    }
}

impl<C: StateCost> FunctionNode for CostNode<C> {
    fn trellis(&self) -> Trellis {
        self.trellis
    }

    fn value(&self, y: f64, state: usize, prev: usize) -> f64 {
        if !self.trellis.consistent(state, prev) {
            return 0.0;
        }
        (-self.cost.cost(y, state)).exp() / self.trellis.m() as f64
    }

    /// Uses `exp(min_cost - cost)` so the most likely state maps to `1/m`.
    fn fill_scaled(&self, y: f64, out: &mut [f64]) {
        let n = self.trellis.num_states();
        let mut costs = vec![0.0; n];
        self.cost.fill(y, &mut costs);
        let floor = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let inv_m = 1.0 / self.trellis.m() as f64;
        out.fill(0.0);
        for (s, c) in costs.iter().enumerate() {
            let v = (floor - c).exp() * inv_m;
            for p in self.trellis.predecessors(s) {
                out[s * n + p] = v;
            }
        }
    }
}

/// Exact function node of a known channel over its default constellation.
pub fn exact_function_node(channel: &FiniteMemoryChannel) -> Result<CostNode<ExactCost>> {
    let cost = exact_cost(channel)?;
    let trellis = cost.trellis();
    Ok(CostNode::new(cost, trellis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::make_decay_vector;

    fn awgn() -> FiniteMemoryChannel {
        FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.5, 3).unwrap(), 2.0).unwrap()
    }

    #[test]
    fn gaussian_peak() {
        let ch = awgn();
        let cost = exact_cost(&ch).unwrap();
        let t = cost.trellis();
        for s in 0..t.num_states() {
            let mean = ch.isi_mean(&Constellation::bpsk().values(&t.decode(s))).unwrap();
            assert!((cost.cost(mean, s) - 0.918939).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_symmetry() {
        let cost = exact_cost(&awgn()).unwrap();
        let t = cost.trellis();
        for s in 0..t.num_states() {
            // Flipping every BPSK symbol flips every digit.
            let flipped = t.encode(&t.decode(s).iter().map(|d| 1 - d).collect::<Vec<_>>());
            for y in [-2.5, 0.3, 1.7] {
                assert!((cost.cost(y, s) - cost.cost(-y, flipped)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poisson_zero_count_costs_the_rate() {
        let ch = FiniteMemoryChannel::new(ChannelKind::Poisson, vec![1.0, 0.5], 4.0).unwrap();
        let cost = exact_cost(&ch).unwrap();
        let t = cost.trellis();
        for s in 0..t.num_states() {
            let rate = ch.poisson_rate(&Constellation::ook().values(&t.decode(s))).unwrap();
            assert!((cost.cost(0.0, s) - rate).abs() < 1e-12);
        }
    }

    #[test]
    fn node_values() {
        let node = exact_function_node(&awgn()).unwrap();
        let t = node.trellis();
        let cost = node.cost_fn();
        for s in 0..t.num_states() {
            for p in 0..t.num_states() {
                let v = node.value(0.4, s, p);
                if t.consistent(s, p) {
                    assert!((v - 0.5 * (-cost.cost(0.4, s)).exp()).abs() < 1e-15);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn poisson_node_is_normalized() {
        // Sum over next states and over the whole count support.
        let ch = FiniteMemoryChannel::new(ChannelKind::Poisson, vec![1.0, 0.6, 0.2], 9.0).unwrap();
        let node = exact_function_node(&ch).unwrap();
        let t = node.trellis();
        for prev in 0..t.num_states() {
            let total: f64 = (0..t.m())
                .map(|a| {
                    let s = t.successor(prev, a);
                    (0..400).map(|y| node.value(y as f64, s, prev)).sum::<f64>()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn scaled_fill_is_proportional() {
        let node = exact_function_node(&awgn()).unwrap();
        let n = node.trellis().num_states();
        let mut scaled = vec![0.0; n * n];
        node.fill_scaled(1.3, &mut scaled);
        let mut ratio = None;
        for s in 0..n {
            for p in 0..n {
                let v = node.value(1.3, s, p);
                if v == 0.0 {
                    assert_eq!(scaled[s * n + p], 0.0);
                    continue;
                }
                let r = scaled[s * n + p] / v;
                let r0 = *ratio.get_or_insert(r);
                assert!((r / r0 - 1.0).abs() < 1e-12);
            }
        }
    }
}

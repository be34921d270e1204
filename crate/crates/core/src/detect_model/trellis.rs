use crate::{Error, Result};

/// State space of a memory-`l` channel over an `m`-ary alphabet.
///
/// The window `(s[i], s[i-1], ..., s[i-l+1])` maps to
/// `sum_tau idx(window[tau]) * m^tau`: the current symbol is the least
/// significant digit and the oldest symbol the most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trellis {
    m: usize,
    l: usize,
    states: usize,
    /// `m^(l-1)`, the weight of the oldest digit.
    top: usize,
}

/// Largest trellis the detectors will allocate.
const MAX_STATES: usize = 1 << 20;

impl Trellis {
    pub fn new(m: usize, l: usize) -> Result<Self> {
        if m < 2 || l == 0 {
            return Err(Error::invalid(format!("trellis needs m >= 2 and l >= 1, got m={m}, l={l}")));
        }
        let states = (m as u128).checked_pow(l as u32).filter(|&s| s <= MAX_STATES as u128);
        let states = states.ok_or_else(|| Error::invalid(format!("m^l = {m}^{l} states is too many")))? as usize;
        Ok(Self {
            m,
            l,
            states,
            top: states / m,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn memory(&self) -> usize {
        self.l
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    /// Encodes a window given current symbol first.
    pub fn encode(&self, window: &[usize]) -> usize {
        window.iter().rev().fold(0, |acc, &j| acc * self.m + j)
    }

    /// Window of `state`, current symbol first.
    pub fn decode(&self, state: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.l);
        let mut s = state;
        for _ in 0..self.l {
            out.push(s % self.m);
            s /= self.m;
        }
        out
    }

    /// Symbol index at the newest position.
    pub fn current(&self, state: usize) -> usize {
        state % self.m
    }

    /// Symbol index at the oldest position.
    pub fn oldest(&self, state: usize) -> usize {
        state / self.top
    }

    /// Whether `state` can follow `prev`: the newer `l - 1` symbols of
    /// `prev` are the older `l - 1` symbols of `state`.
    pub fn consistent(&self, state: usize, prev: usize) -> bool {
        state / self.m == prev % self.top
    }

    /// The `m` states that can precede `state`, in ascending index order.
    pub fn predecessors(&self, state: usize) -> impl Iterator<Item = usize> {
        let base = state / self.m;
        let top = self.top;
        (0..self.m).map(move |j| base + j * top)
    }

    /// State reached from `prev` when symbol `symbol` is sent.
    pub fn successor(&self, prev: usize, symbol: usize) -> usize {
        symbol + self.m * (prev % self.top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encoding_example() {
        let t = Trellis::new(2, 3).unwrap();
        // s[i] = 1, s[i-1] = 0, s[i-2] = 1
        assert_eq!(t.encode(&[1, 0, 1]), 0b101);
        assert_eq!(t.encode(&[1, 1, 0]), 0b011);
        assert_eq!(t.current(0b011), 1);
        assert_eq!(t.oldest(0b011), 0);
    }

    #[test]
    fn oversized_trellis_is_rejected() {
        assert!(Trellis::new(2, 40).is_err());
        assert!(Trellis::new(1, 2).is_err());
    }

    proptest! {
        #[test]
        fn transitions_agree(m in 2usize..5, l in 1usize..5, seed in 0usize..10_000) {
            let t = Trellis::new(m, l).unwrap();
            let prev = seed % t.num_states();
            let symbol = seed % m;
            let next = t.successor(prev, symbol);
            prop_assert!(t.consistent(next, prev));
            prop_assert_eq!(t.current(next), symbol);
            prop_assert!(t.predecessors(next).any(|p| p == prev));
            let count = (0..t.num_states()).filter(|&p| t.consistent(next, p)).count();
            prop_assert_eq!(count, m);
            prop_assert_eq!(t.encode(&t.decode(prev)), prev);
        }
    }
}

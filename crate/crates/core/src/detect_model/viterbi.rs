use super::{argmin, StateCost, Trellis};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ViterbiMode {
    /// Decide the oldest symbol of the best state after every step, with no
    /// back-pointers. Outputs `s[i]` once `y[i + l - 1]` has arrived.
    Sequential,
    /// Keep per-state back-pointers and trace back the minimum-cost path.
    #[default]
    Traceback,
}

/// Minimum-cost state sequence for a block of observations.
pub fn viterbi<C: StateCost + ?Sized>(
    y: &[f64],
    cost: &C,
    trellis: Trellis,
    mode: ViterbiMode,
) -> Result<Vec<usize>> {
    let n = trellis.num_states();
    if cost.num_states() != n {
        return Err(Error::invalid(format!(
            "cost function covers {} states, trellis has {n}",
            cost.num_states()
        )));
    }
    check_length(y.len(), trellis)?;
    let mut costs = vec![0.0; y.len() * n];
    for (row, &obs) in costs.chunks_mut(n).zip(y) {
        cost.fill(obs, row);
    }
    viterbi_costs(&costs, trellis, mode)
}

/// Viterbi over a precomputed `t x S` cost table (row per time index).
///
/// All initial path costs are zero, so the `l - 1` symbols preceding the
/// block are free. Ties resolve to the lowest state index.
pub fn viterbi_costs(costs: &[f64], trellis: Trellis, mode: ViterbiMode) -> Result<Vec<usize>> {
    let n = trellis.num_states();
    if costs.len() % n != 0 {
        return Err(Error::invalid("cost table is not a whole number of rows"));
    }
    let t = costs.len() / n;
    check_length(t, trellis)?;
    let l = trellis.memory();

    let mut path = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut back = match mode {
        ViterbiMode::Traceback => vec![0u32; t * n],
        ViterbiMode::Sequential => Vec::new(),
    };
    let mut out = vec![0usize; t];

    for (i, row) in costs.chunks(n).enumerate() {
        for (s, slot) in next.iter_mut().enumerate() {
            let mut best_prev = usize::MAX;
            let mut best = f64::INFINITY;
            for p in trellis.predecessors(s) {
                if best_prev == usize::MAX || path[p] < best {
                    best = path[p];
                    best_prev = p;
                }
            }
            *slot = best + row[s];
            if mode == ViterbiMode::Traceback {
                back[i * n + s] = best_prev as u32;
            }
        }
        std::mem::swap(&mut path, &mut next);
        if mode == ViterbiMode::Sequential && i + 1 >= l {
            out[i + 1 - l] = trellis.oldest(argmin(&path));
        }
    }

    let mut state = argmin(&path);
    match mode {
        ViterbiMode::Sequential => {
            for (tau, symbol) in trellis.decode(state).into_iter().enumerate() {
                out[t - 1 - tau] = symbol;
            }
        }
        ViterbiMode::Traceback => {
            for i in (0..t).rev() {
                out[i] = trellis.current(state);
                state = back[i * n + state] as usize;
            }
        }
    }
    Ok(out)
}

fn check_length(t: usize, trellis: Trellis) -> Result<()> {
    if t <= trellis.memory() {
        return Err(Error::invalid(format!(
            "block length {t} must exceed the memory {}",
            trellis.memory()
        )));
    }
    Ok(())
}

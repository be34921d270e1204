use super::{FunctionNode, SoftEstimate, Trellis};
use crate::{Error, Result};

/// Forward-backward (sum-product) posteriors for every symbol of a block.
pub fn bcjr<N: FunctionNode + ?Sized>(y: &[f64], node: &N) -> Result<Vec<SoftEstimate>> {
    let trellis = node.trellis();
    bcjr_with(y.len(), trellis, |i, table| node.fill_scaled(y[i], table))
}

/// BCJR over node tables produced on demand.
///
/// `fill(i, table)` writes the time-`i` node into `table[state * S + prev]`,
/// up to a positive factor. It is called once per time index in the forward
/// pass and once in the backward pass, so it must be deterministic.
///
/// The forward message starts uniform over states and the backward message
/// starts at all ones. Both are renormalized to unit sum every step; the
/// discarded constants cancel in the posteriors.
pub fn bcjr_with<F>(t: usize, trellis: Trellis, mut fill: F) -> Result<Vec<SoftEstimate>>
where
    F: FnMut(usize, &mut [f64]),
{
    if t <= trellis.memory() {
        return Err(Error::invalid(format!(
            "block length {t} must exceed the memory {}",
            trellis.memory()
        )));
    }
    let n = trellis.num_states();
    let m = trellis.m();
    let mut table = vec![0.0; n * n];
    let mut alpha = vec![0.0; t * n];
    let mut prev = vec![1.0 / n as f64; n];

    for i in 0..t {
        fill(i, &mut table);
        let row = &mut alpha[i * n..(i + 1) * n];
        for s in 0..n {
            let weights = &table[s * n..(s + 1) * n];
            row[s] = weights.iter().zip(&prev).map(|(f, a)| f * a).sum();
        }
        normalize(row, i)?;
        prev.copy_from_slice(row);
    }

    let mut beta = vec![1.0 / n as f64; n];
    let mut back = vec![0.0; n];
    let mut out = vec![SoftEstimate::uniform(m); t];
    for i in (0..t).rev() {
        let row = &alpha[i * n..(i + 1) * n];
        let mut symbol = vec![0.0; m];
        for s in 0..n {
            symbol[trellis.current(s)] += row[s] * beta[s];
        }
        out[i] = SoftEstimate::normalized(symbol).map_err(|_| Error::DegenerateEvidence { time: i })?;
        if i == 0 {
            break;
        }
        fill(i, &mut table);
        back.fill(0.0);
        for s in 0..n {
            let b = beta[s];
            if b == 0.0 {
                continue;
            }
            for (acc, f) in back.iter_mut().zip(&table[s * n..(s + 1) * n]) {
                *acc += f * b;
            }
        }
        normalize(&mut back, i)?;
        beta.copy_from_slice(&back);
    }
    Ok(out)
}

fn normalize(v: &mut [f64], time: usize) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateEvidence { time });
    }
    v.iter_mut().for_each(|x| *x /= sum);
    Ok(())
}

/// Per-symbol argmax, ties to the lowest index.
pub fn hard_decisions(posteriors: &[SoftEstimate]) -> Vec<usize> {
    posteriors.iter().map(SoftEstimate::argmax).collect()
}

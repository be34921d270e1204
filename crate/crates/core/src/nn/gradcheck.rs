use super::{log_softmax_in_place, softmax_in_place, Mlp};

/// Step for the central differences.
const STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-4)`.
///
/// The floor keeps near-zero gradient entries, where the finite difference
/// is dominated by rounding, from reporting huge relative errors.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn loss(mlp: &Mlp, x: &[f64], label: usize) -> f64 {
    let mut z = mlp.logits(x).expect("input width checked by caller");
    log_softmax_in_place(&mut z);
    -z[label]
}

/// Largest relative error between back-propagated and central-difference
/// gradients of `-ln p[label]`, over every parameter.
pub fn gradient_check(mlp: &Mlp, x: &[f64], label: usize) -> f64 {
    let mut tape = mlp.new_tape();
    let mut probs = mlp.forward_tape(x, &mut tape).expect("input width").to_vec();
    softmax_in_place(&mut probs);
    probs[label] -= 1.0;
    let mut analytic = vec![0.0; mlp.params().len()];
    mlp.backward(&mut tape, &probs, &mut analytic, None);

    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + STEP;
        let up = loss(&probe, x, label);
        probe.params_mut()[i] = orig - STEP;
        let down = loss(&probe, x, label);
        probe.params_mut()[i] = orig;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * STEP)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};

    #[test]
    fn linear_softmax_model() {
        let mlp = Mlp::init(MlpSpec::linear(3, 4).unwrap(), 11);
        assert!(gradient_check(&mlp, &[0.4, -1.1, 2.0], 1) <= 1e-6);
    }

    #[test]
    fn likelihood_classifier_architecture() {
        let spec = MlpSpec::new(vec![1, 100, 50, 16], vec![Activation::Sigmoid, Activation::Relu]).unwrap();
        let mlp = Mlp::init(spec, 3);
        for (x, label) in [(0.7, 3), (-2.2, 11), (1.9, 0)] {
            let err = gradient_check(&mlp, &[x], label);
            assert!(err <= 1e-5, "x = {x}: {err}");
        }
    }

    #[test]
    fn bias_only_network() {
        // A zero input leaves only the biases with non-zero gradient.
        let mlp = Mlp::init(MlpSpec::linear(2, 3).unwrap(), 5);
        assert!(gradient_check(&mlp, &[0.0, 0.0], 2) <= 1e-8);
    }
}

use proptest::prelude::*;

use neurodetect::channels::{generate_dataset, make_decay_vector, ChannelKind, Constellation, FiniteMemoryChannel};
use neurodetect::detect_ml::{
    bcjrnet_detect, deepsic_forward, exact_plug_in, learned_cost, viterbinet_detect, DeepSicArch, DeepSicNet,
    LikelihoodModel, MarginalDensity,
};
use neurodetect::detect_model::{bcjr, exact_cost, exact_function_node, hard_decisions, viterbi, StateCost, ViterbiMode};
use neurodetect::rng::RngStream;

#[test]
fn bcjr_symbol_errors_do_not_exceed_viterbi() {
    let ch = FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.2, 3).unwrap(), 1.5).unwrap();
    let c = Constellation::bpsk();
    let cost = exact_cost(&ch).unwrap();
    let node = exact_function_node(&ch).unwrap();
    let mut rng = RngStream::new(21, 0);
    let (mut v_err, mut b_err, mut n) = (0u64, 0u64, 0u64);
    for _ in 0..100 {
        let block = generate_dataset(&ch, &c, 1000, &mut rng).unwrap();
        let (y, truth) = (block.observations(), block.labels());
        let v = viterbi(y, &cost, cost.trellis(), ViterbiMode::Traceback).unwrap();
        let b = hard_decisions(&bcjr(y, &node).unwrap());
        v_err += v.iter().zip(truth).filter(|(a, t)| a != t).count() as u64;
        b_err += b.iter().zip(truth).filter(|(a, t)| a != t).count() as u64;
        n += truth.len() as u64;
    }
    let (pv, pb) = (v_err as f64 / n as f64, b_err as f64 / n as f64);
    let se = ((pv * (1.0 - pv) + pb * (1.0 - pb)) / n as f64).sqrt();
    assert!(pb <= pv + 3.0 * se, "bcjr {pb} viterbi {pv}");
}

/// Exact plug-in whose marginal is off by a constant factor.
struct Scaled<M>(M, f64);

impl<M: MarginalDensity> MarginalDensity for Scaled<M> {
    fn ln_pdf(&self, y: f64) -> f64 {
        self.0.ln_pdf(y) + self.1
    }
}

#[test]
fn marginal_scale_never_changes_decisions() {
    let ch = FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.7, 2).unwrap(), 3.0).unwrap();
    let c = Constellation::bpsk();
    let exact = exact_plug_in(&ch).unwrap();
    let shifted = LikelihoodModel::new(
        c.clone(),
        2,
        exact.posterior().clone(),
        Scaled(exact.marginal().clone(), 3.7),
    )
    .unwrap();
    let y = generate_dataset(&ch, &c, 400, &mut RngStream::new(22, 0)).unwrap();
    let y = y.observations();
    let (a, b) = (learned_cost(&exact), learned_cost(&shifted));
    for &obs in y {
        for s in 0..a.num_states() {
            assert!((b.cost(obs, s) - a.cost(obs, s) + 3.7).abs() < 1e-9);
        }
    }
    assert_eq!(
        viterbinet_detect(&exact, y, ViterbiMode::Traceback).unwrap(),
        viterbinet_detect(&shifted, y, ViterbiMode::Traceback).unwrap()
    );
    assert_eq!(
        bcjrnet_detect(&exact, y).unwrap(),
        bcjrnet_detect(&shifted, y).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Relabeling two interferers in the first column, and permuting the
    // matching input slots of the next column's block, leaves that block's
    // output unchanged.
    #[test]
    fn deepsic_wiring_is_permutation_consistent(
        seed in any::<u64>(),
        y in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let (users, m, n_r) = (3, 2, 2);
        let c = Constellation::bpsk();
        let net = DeepSicNet::new(DeepSicArch::EndToEnd, c.clone(), users, n_r, 2, seed).unwrap();
        let mut blocks = net.blocks().to_vec();
        blocks.swap(1, 2);
        // Block (q=1, k=0) reads users 1 and 2 at slots n_r and n_r + m.
        let target = &mut blocks[users];
        let inputs = target.spec().input_dim();
        let hidden = target.spec().layer_dims()[1];
        let params = target.params_mut();
        for o in 0..hidden {
            for j in 0..m {
                params.swap(o * inputs + n_r + j, o * inputs + n_r + m + j);
            }
        }
        let relabeled = DeepSicNet::from_blocks(c, users, n_r, 2, blocks).unwrap();
        let a = deepsic_forward(&net, &y).unwrap();
        let b = deepsic_forward(&relabeled, &y).unwrap();
        for (p, q) in a[0].probs().iter().zip(b[0].probs()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }
}

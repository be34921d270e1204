//! Acceptance suite. Runs with its own harness and prints one PASS/FAIL
//! line per criterion; exits non-zero if any criterion fails.
//!
//! The statistical criteria train and test at full scale, so the whole
//! target takes several minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use neurodetect::channels::{
    generate_dataset, make_decay_vector, ChannelKind, Constellation, FiniteMemoryChannel, MimoChannel,
};
use neurodetect::density::{fit_gmm, GmmConfig};
use neurodetect::detect_ml::{
    bcjrnet_detect, bcjrnet_posteriors, deepsic_forward, deepsic_gradient, deepsic_sum_loss, exact_plug_in,
    likelihood_classifier_spec, viterbinet_detect, DeepSicArch, DeepSicNet, GradientFlow,
};
use neurodetect::detect_model::{
    bcjr, exact_cost, exact_function_node, hard_decisions, sic_soft, viterbi, viterbi_costs, FunctionNode,
    LinearGaussianModel, SoftEstimate, Trellis, ViterbiMode, SIMPLEX_TOL,
};
use neurodetect::harness::{combined_stderr, run_sweep, ExperimentConfig, SerCurve, SerRow};
use neurodetect::nn::{gradient_check, relative_error, Mlp};
use neurodetect::rng::RngStream;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 viterbi matches exhaustive ML search", viterbi_oracle),
        ("2 bcjr matches brute-force marginals", bcjr_oracle),
        ("3 plug-in learned detectors equal model-based ones", plug_in),
        ("4 viterbinet within the viterbi bound", viterbinet_fidelity),
        ("5 bcjrnet within the bcjr bound", bcjrnet_fidelity),
        ("6 learned detectors robust to CSI error", csi_robustness),
        ("7 iterative SIC near MAP", sic_near_map),
        ("8 deepsic fidelity", deepsic_fidelity),
        ("9 numerical suites", numerical_suites),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {name}: {} [{:.1?}]", o.detail, start.elapsed());
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria failed");
        ExitCode::FAILURE
    }
}

// Brute force over whole binary sequences. A sequence holds the `l - 1`
// symbols before the block followed by the `t` block symbols; the window at
// time `i` lists `seq[i + l - 1], seq[i + l - 2], ..., seq[i]`, newest first.

fn sequences(len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << len).map(move |bits| (0..len).map(|j| (bits >> j) & 1).collect())
}

fn state_at(seq: &[usize], i: usize, l: usize) -> usize {
    (0..l).map(|tau| seq[i + l - 1 - tau] << tau).sum()
}

fn viterbi_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(101, 0);
    let t = 6;
    let mut mismatches = 0;
    for l in 1..=3 {
        let trellis = Trellis::new(2, l).unwrap();
        let s = trellis.num_states();
        for _ in 0..100 {
            let costs: Vec<f64> = (0..t * s).map(|_| rng.random_range(0.0..10.0)).collect();
            let got = viterbi_costs(&costs, trellis, ViterbiMode::Traceback).unwrap();
            let best = sequences(t + l - 1)
                .map(|seq| {
                    let total: f64 = (0..t).map(|i| costs[i * s + state_at(&seq, i, l)]).sum();
                    (total, seq)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap()
                .1;
            mismatches += usize::from(got != best[l - 1..]);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && elapsed < 5.0,
        format!("{mismatches} mismatches in 300 instances (t=6, m=2, l=1..3), {elapsed:.2} s (limit 5 s)"),
    )
}

/// Random positive node on consistent pairs; the observation is the time index.
struct RandomNode {
    trellis: Trellis,
    tables: Vec<Vec<f64>>,
}

impl FunctionNode for RandomNode {
    fn trellis(&self) -> Trellis {
        self.trellis
    }

    fn value(&self, y: f64, state: usize, prev: usize) -> f64 {
        self.tables[y as usize][state * self.trellis.num_states() + prev]
    }
}

fn bcjr_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(202, 0);
    let t = 6;
    let mut worst: f64 = 0.0;
    for l in 1..=3 {
        let trellis = Trellis::new(2, l).unwrap();
        let s = trellis.num_states();
        for _ in 0..100 {
            let tables: Vec<Vec<f64>> = (0..t)
                .map(|_| {
                    (0..s * s)
                        .map(|j| {
                            let (state, prev) = (j / s, j % s);
                            // The state's older symbols must be the previous state's newer ones.
                            let linked = (0..l - 1).all(|tau| (state >> (tau + 1)) & 1 == (prev >> tau) & 1);
                            if linked {
                                rng.random_range(0.05..1.0)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let node = RandomNode { trellis, tables };
            let y: Vec<f64> = (0..t).map(|i| i as f64).collect();
            let post = bcjr(&y, &node).unwrap();

            // Sequences carry one extra symbol before the first previous state.
            let mut marg = vec![[0.0f64; 2]; t];
            for seq in sequences(t + l) {
                let w: f64 = (0..t)
                    .map(|i| node.tables[i][state_at(&seq[1..], i, l) * s + state_at(&seq, i, l)])
                    .product();
                for (i, row) in marg.iter_mut().enumerate() {
                    row[seq[i + l]] += w;
                }
            }
            for (p, row) in post.iter().zip(&marg) {
                let z = row[0] + row[1];
                for a in 0..2 {
                    worst = worst.max((p.probs()[a] - row[a] / z).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && elapsed < 10.0,
        format!("max deviation {worst:.2e} over 300 instances (limit 1e-9), {elapsed:.2} s (limit 10 s)"),
    )
}

fn plug_in() -> Outcome {
    let ch = FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.5, 4).unwrap(), 4.0).unwrap();
    let c = Constellation::bpsk();
    let model = exact_plug_in(&ch).unwrap();
    let cost = exact_cost(&ch).unwrap();
    let node = exact_function_node(&ch).unwrap();
    let mut rng = RngStream::new(303, 0);
    let (mut vit_bad, mut bcjr_bad, mut total) = (0, 0, 0);
    for _ in 0..100 {
        let block = generate_dataset(&ch, &c, 1000, &mut rng).unwrap();
        let y = block.observations();
        let v = viterbi(y, &cost, cost.trellis(), ViterbiMode::Traceback).unwrap();
        let vn = viterbinet_detect(&model, y, ViterbiMode::Traceback).unwrap();
        vit_bad += v.iter().zip(&vn).filter(|(a, b)| a != b).count();
        let b = hard_decisions(&bcjr(y, &node).unwrap());
        let bn = bcjrnet_detect(&model, y).unwrap();
        bcjr_bad += b.iter().zip(&bn).filter(|(a, b)| a != b).count();
        total += y.len();
    }
    outcome(
        vit_bad == 0 && bcjr_bad == 0,
        format!("{vit_bad} viterbinet and {bcjr_bad} bcjrnet mismatches in {total} symbols"),
    )
}

/// `learned <= 1.3 reference + 3 combined standard errors` at every SNR.
fn bounded_gap(curve: &SerCurve, learned: &str, reference: &str) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in curve.detector(reference) {
        let n = curve.get(learned, r.snr_db).unwrap();
        let bound = 1.3 * r.ser() + 3.0 * combined_stderr(n, r);
        ok &= n.ser() <= bound;
        parts.push(format!("{} dB {:.5} vs bound {:.5}", r.snr_db, n.ser(), bound));
    }
    outcome(ok, parts.join("; "))
}

fn fidelity_curve() -> &'static SerCurve {
    use std::sync::OnceLock;
    static CURVE: OnceLock<SerCurve> = OnceLock::new();
    CURVE.get_or_init(|| {
        let cfg = ExperimentConfig::parse(
            "channel = isi-awgn\nmemory = 4\ndetectors = viterbi, bcjr, viterbinet, bcjrnet\n\
             snr_db = 0, 4, 8\nn_train = 5000\nn_test = 25000\nn_channels = 5\n\
             gamma_min = 0.1\ngamma_max = 2.0\nepochs = 100\nbatch_size = 27\nlearning_rate = 0.01\nseed = 4",
        )
        .unwrap();
        run_sweep(&cfg).unwrap()
    })
}

fn viterbinet_fidelity() -> Outcome {
    bounded_gap(fidelity_curve(), "viterbinet", "viterbi")
}

fn bcjrnet_fidelity() -> Outcome {
    bounded_gap(fidelity_curve(), "bcjrnet", "bcjr")
}

fn csi_robustness() -> Outcome {
    let cfg = ExperimentConfig::parse(
        "channel = isi-awgn\nmemory = 4\ndetectors = viterbi, bcjr, viterbinet, bcjrnet\nsnr_db = 8\n\
         n_train = 5000\nn_test = 25000\nn_channels = 5\nsigma_e2 = 0.1\nseed = 6",
    )
    .unwrap();
    let curve = run_sweep(&cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (learned, reference) in [("viterbinet", "viterbi"), ("bcjrnet", "bcjr")] {
        let (n, r) = (curve.get(learned, 8.0).unwrap(), curve.get(reference, 8.0).unwrap());
        let margin = 3.0 * combined_stderr(n, r);
        ok &= r.ser() - n.ser() > margin;
        parts.push(format!("{learned} {:.5} vs {reference} {:.5} (need gap > {margin:.5})", n.ser(), r.ser()));
    }
    outcome(ok, parts.join("; "))
}

fn sic_near_map() -> Outcome {
    let cfg = ExperimentConfig::parse(
        "channel = mimo-awgn\nusers = 4\nantennas = 4\nmimo_matrix = decay\ndetectors = map, sic\n\
         snr_db = 4, 5, 6, 7, 8, 9, 10, 11, 12\nn_test = 20000\nn_channels = 1\nq = 5\nseed = 7",
    )
    .unwrap();
    let curve = run_sweep(&cfg).unwrap();
    // The grid point whose MAP SER is closest to 1e-2 on a log scale.
    let map = curve
        .detector("map")
        .filter(|r| r.n_errors > 0)
        .min_by(|a, b| (a.ser().log10() + 2.0).abs().total_cmp(&(b.ser().log10() + 2.0).abs()))
        .unwrap();
    let sic = curve.get("sic", map.snr_db).unwrap();
    outcome(
        sic.ser() <= 2.0 * map.ser(),
        format!(
            "at {} dB MAP {:.5}, SIC {:.5} (limit {:.5}), {} symbols",
            map.snr_db,
            map.ser(),
            sic.ser(),
            2.0 * map.ser(),
            sic.n_symbols
        ),
    )
}

fn deepsic_fidelity() -> Outcome {
    let awgn = ExperimentConfig::parse(
        "channel = mimo-awgn\nusers = 4\nantennas = 4\nmimo_matrix = decay\ndetectors = sic, deepsic-e2e\n\
         snr_db = 0, 2, 4, 6, 8, 10\nn_train = 5000\nn_test = 20000\nn_channels = 1\nq = 5\nseed = 8",
    )
    .unwrap();
    let curve = run_sweep(&awgn).unwrap();
    let mut e2e_ok = true;
    let mut parts = Vec::new();
    let mut checked = 0;
    for sic in curve.detector("sic").filter(|r| r.ser() >= 1e-3) {
        let net = curve.get("deepsic-e2e", sic.snr_db).unwrap();
        let bound = 1.5 * sic.ser() + 3.0 * net.stderr();
        e2e_ok &= net.ser() <= bound;
        checked += 1;
        parts.push(format!("{} dB {:.5} vs bound {:.5}", sic.snr_db, net.ser(), bound));
    }
    e2e_ok &= checked > 0;

    let poisson = ExperimentConfig::parse(POISSON_CONFIG).unwrap();
    let curve = run_sweep(&poisson).unwrap();
    let wins: Vec<&SerRow> = curve
        .detector("deepsic-seq")
        .filter(|r| r.ser() < curve.get("sic", r.snr_db).unwrap().ser())
        .collect();
    let seq_parts: Vec<String> = curve
        .detector("sic")
        .map(|s| {
            let d = curve.get("deepsic-seq", s.snr_db).unwrap();
            format!("{} dB seq {:.5} vs sic {:.5}", s.snr_db, d.ser(), s.ser())
        })
        .collect();
    outcome(
        e2e_ok && !wins.is_empty(),
        format!(
            "awgn end-to-end [{}]; poisson sequential [{}]",
            parts.join("; "),
            seq_parts.join("; ")
        ),
    )
}

const POISSON_CONFIG: &str = "channel = mimo-poisson\nusers = 4\nantennas = 4\nmimo_matrix = decay\n\
    detectors = sic, deepsic-seq\nsnr_db = 24\nn_train = 5000\nn_test = 20000\nn_channels = 1\nq = 5\nseed = 8";

fn numerical_suites() -> Outcome {
    let mut rng = RngStream::new(909, 0);
    let mut parts = Vec::new();

    // Gradient checks on every architecture.
    let mut worst: f64 = 0.0;
    let specs = [
        likelihood_classifier_spec(16).unwrap(),
        DeepSicArch::EndToEnd.block_spec(4 + 3 * 2, 2).unwrap(),
        DeepSicArch::Sequential.block_spec(4 + 3 * 2, 2).unwrap(),
        DeepSicArch::EndToEnd.block_spec(6 + 5 * 2, 2).unwrap(),
    ];
    for spec in &specs {
        for label in 0..2 {
            let mlp = Mlp::init(spec.clone(), rng.random());
            let x: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            worst = worst.max(gradient_check(&mlp, &x, label));
        }
    }
    let grad_ok = worst <= 1e-5 && joint_deepsic_gradient(&mut rng) <= 1e-5;
    parts.push(format!("gradient max relative error {worst:.2e}"));

    // EM never lowers the log-likelihood.
    let mut em_bad = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(50..400);
        let centers: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let samples: Vec<f64> = (0..n)
            .map(|i| centers[i % k] + rng.random_range(-1.0..1.0) * rng.random_range(0.1..2.0))
            .collect();
        let fit = fit_gmm(&samples, &GmmConfig::with_components(rng.random_range(1..=6))).unwrap();
        let lls = &fit.log_likelihoods;
        em_bad += usize::from(lls.windows(2).any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)));
    }
    parts.push(format!("EM decreases on {em_bad}/100 datasets"));

    let (invocations, simplex_bad) = simplex_sweep(&mut rng);
    parts.push(format!("{simplex_bad} simplex violations in {invocations} invocations"));

    let cfg = ExperimentConfig::parse(
        "channel = isi-awgn\nmemory = 2\ndetectors = viterbi, bcjr, viterbinet, bcjrnet\nsnr_db = 0, 6\n\
         n_train = 300\nn_test = 2000\nn_channels = 2\nepochs = 3\nseed = 99",
    )
    .unwrap();
    let identical = run_sweep(&cfg).unwrap().to_csv() == run_sweep(&cfg).unwrap().to_csv();
    parts.push(format!("rerun CSV byte-identical: {identical}"));

    outcome(
        grad_ok && em_bad == 0 && simplex_bad == 0 && invocations >= 100_000 && identical,
        parts.join("; "),
    )
}

/// Central differences on the summed loss of a small DeepSIC grid.
fn joint_deepsic_gradient(rng: &mut RngStream) -> f64 {
    let c = Constellation::bpsk();
    let net = DeepSicNet::new(DeepSicArch::EndToEnd, c.clone(), 2, 2, 3, rng.random()).unwrap();
    let y = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    let labels = [1, 0];
    let (_, grads) = deepsic_gradient(&net, &y, &labels, GradientFlow::Through).unwrap();
    let mut worst: f64 = 0.0;
    let step = 1e-5;
    for (b, grad) in grads.iter().enumerate() {
        // Every fifth parameter keeps the check quick.
        for p in (0..grad.len()).step_by(5) {
            let loss = |delta: f64| {
                let mut blocks = net.blocks().to_vec();
                blocks[b].params_mut()[p] += delta;
                let probe = DeepSicNet::from_blocks(c.clone(), 2, 2, 3, blocks).unwrap();
                deepsic_sum_loss(&probe, &y, &labels).unwrap()
            };
            worst = worst.max(relative_error(grad[p], (loss(step) - loss(-step)) / (2.0 * step)));
        }
    }
    worst
}

fn simplex_violation(p: &SoftEstimate) -> bool {
    let sum: f64 = p.probs().iter().sum();
    p.probs().iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) || (sum - 1.0).abs() > SIMPLEX_TOL
}

/// Soft outputs of every soft detector on random inputs, including extreme
/// observations. Returns (invocations, violating invocations).
fn simplex_sweep(rng: &mut RngStream) -> (usize, usize) {
    let (mut calls, mut bad) = (0, 0);
    let mut tally = |outs: &[SoftEstimate]| {
        calls += 1;
        bad += usize::from(outs.iter().any(simplex_violation));
    };
    let wild = |rng: &mut RngStream| {
        if rng.random_bool(0.05) {
            rng.random_range(-200.0..200.0)
        } else {
            rng.random_range(-4.0..4.0)
        }
    };

    let c = Constellation::bpsk();
    let ch = MimoChannel::new(ChannelKind::Awgn, DMatrix::from_fn(3, 3, |i, k| (-(i.abs_diff(k) as f64)).exp()), 0.3)
        .unwrap();
    let model = LinearGaussianModel::from_channel(&ch).unwrap();
    for _ in 0..40_000 {
        let y: Vec<f64> = (0..3).map(|_| wild(rng)).collect();
        tally(&sic_soft(&y, &model, &c, 3).unwrap());
    }

    let net = DeepSicNet::new(DeepSicArch::Sequential, c.clone(), 3, 3, 2, 5).unwrap();
    for _ in 0..40_000 {
        let y: Vec<f64> = (0..3).map(|_| wild(rng)).collect();
        tally(&deepsic_forward(&net, &y).unwrap());
    }

    let fm = FiniteMemoryChannel::new(ChannelKind::Awgn, make_decay_vector(0.3, 2).unwrap(), 2.0).unwrap();
    let node = exact_function_node(&fm).unwrap();
    let plug = exact_plug_in(&fm).unwrap();
    for _ in 0..10_000 {
        let y: Vec<f64> = (0..8).map(|_| wild(rng)).collect();
        tally(&bcjr(&y, &node).unwrap());
        tally(&bcjrnet_posteriors(&plug, &y).unwrap());
    }
    (calls, bad)
}

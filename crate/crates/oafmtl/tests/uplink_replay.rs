//! Hand-replay of the device encoding pipeline and the identity the uplink
//! is built around: with the channel inverted and no noise, the normalized
//! observation equals the superposition of the compressed, dataset-weighted
//! averages of the scheduled devices' sparsified gradients.

use num_complex::Complex64;
use oafmtl::channel::{effective_observation, transmit, ChannelRound, SigmaConvention};
use oafmtl::transform::{make_partial_dct, PartialOrthonormalOperator};
use oafmtl::transmitter::{
    auto_gamma, device_encode, preview_signal_norm, DeviceState, EncodedDevice, PowerPolicy,
    POWER_TOLERANCE,
};

/// Entry `F[m][n]` (0-based) of the orthonormal DCT-II matrix.
fn dct_entry(d: usize, m: usize, n: usize) -> f64 {
    let dd = d as f64;
    if m == 0 {
        (1.0 / dd).sqrt()
    } else {
        (2.0 / dd).sqrt()
            * ((m as f64) * (2 * n + 1) as f64 * std::f64::consts::PI / (2.0 * dd)).cos()
    }
}

/// `A x` evaluated row by row from the defining cosine formula.
fn dense_apply(op: &PartialOrthonormalOperator, x: &[f64]) -> Vec<f64> {
    op.row_selection()
        .iter()
        .map(|&r| {
            (0..op.dim())
                .map(|n| dct_entry(op.dim(), r, n) * x[n])
                .sum()
        })
        .collect()
}

/// Deterministic dense test vector.
fn probe(len: usize, phase: f64) -> Vec<f64> {
    (0..len)
        .map(|i| (i as f64 * 0.379 + phase).sin() + 0.25 * (i as f64 * 1.618).cos())
        .collect()
}

#[test]
fn device_encoding_matches_a_hand_replay() {
    // Two tasks, dims 8 and 6, shared measurement length 4 (2 symbols).
    let ops = vec![
        make_partial_dct(8, 4, 31).unwrap(),
        make_partial_dct(6, 4, 32).unwrap(),
    ];
    let state = DeviceState::new(0, &[8, 6], vec![3, 5]).unwrap();
    // Both gradients contain magnitude ties straddling the top-k cutoff.
    let g0 = vec![2.0, -2.0, 1.0, 1.0, 0.5, 0.0, -3.0, 1.0];
    let g1 = vec![-1.5, 0.25, 1.5, -0.75, 0.125, 2.5];
    let grads = vec![g0.clone(), g1.clone()];
    let h = Complex64::new(0.6, -0.8); // |h| = 1
    let gamma = 0.35;
    let policy = PowerPolicy::fixed(10.0, gamma, 0.5).unwrap();

    let enc = device_encode(&grads, &state, &ops, &[3, 2], h, &policy).unwrap();
    assert!(enc.scheduled);

    // Top-3 of task 0: -3 at index 6, then the tie at |2| keeps indices 0, 1.
    let sp0 = vec![2.0, -2.0, 0.0, 0.0, 0.0, 0.0, -3.0, 0.0];
    // Top-2 of task 1: 2.5 at index 5, then the tie at |1.5| keeps index 0.
    let sp1 = vec![-1.5, 0.0, 0.0, 0.0, 0.0, 2.5];
    assert_eq!(enc.sparsified[0], sp0);
    assert_eq!(enc.sparsified[1], sp1);
    // Dropped entries are carried, exactly, in the advanced buffers.
    for i in 0..g0.len() {
        assert_eq!(enc.state.buffers[0][i], g0[i] - sp0[i]);
    }
    for i in 0..g1.len() {
        assert_eq!(enc.state.buffers[1][i], g1[i] - sp1[i]);
    }

    // tx = (γ/h) · pack(3·A₀sp₀ + 5·A₁sp₁), replayed with the dense cosine
    // matrices: first half of the mixed vector feeds the real parts.
    let c0 = dense_apply(&ops[0], &sp0);
    let c1 = dense_apply(&ops[1], &sp1);
    let mixed: Vec<f64> = c0
        .iter()
        .zip(c1.iter())
        .map(|(a, b)| 3.0 * a + 5.0 * b)
        .collect();
    let alpha = Complex64::new(gamma, 0.0) / h;
    assert_eq!(enc.tx.len(), 2);
    for j in 0..2 {
        let expect = alpha * Complex64::new(mixed[j], mixed[2 + j]);
        assert!(
            (enc.tx[j] - expect).norm() <= 1e-12,
            "symbol {j}: {} vs {expect}",
            enc.tx[j]
        );
    }
    let norm_sq: f64 = mixed.iter().map(|v| v * v).sum();
    assert!((enc.signal_norm - norm_sq.sqrt()).abs() <= 1e-12);
    // |h| = 1, so the transmit power is γ²‖x̃‖².
    assert!((enc.power - gamma * gamma * norm_sq).abs() <= 1e-12);
}

struct Uplink {
    round: ChannelRound,
    ops: Vec<PartialOrthonormalOperator>,
    sizes: Vec<Vec<u64>>,
    gamma: f64,
    budget: f64,
    encs: Vec<EncodedDevice>,
}

/// Three devices (the third below the scheduling threshold), two tasks,
/// auto-resolved γ, noiseless channel.
fn run_uplink() -> Uplink {
    let dims = [32usize, 24];
    let rows = 16;
    let ops: Vec<PartialOrthonormalOperator> = (0..2)
        .map(|n| make_partial_dct(dims[n], rows, 40 + n as u64).unwrap())
        .collect();
    let gains = vec![
        Complex64::new(0.9, 0.3),
        Complex64::new(-0.4, 0.7),
        Complex64::new(0.05, -0.02),
    ];
    let threshold = 0.2;
    let round = ChannelRound::new(gains.clone(), 0.0, threshold, 77).unwrap();
    assert_eq!(round.scheduled, vec![0, 1]);

    // Each device holds the same sample count for both tasks, so a single
    // normalization fits every task.
    let sizes: Vec<Vec<u64>> = vec![vec![12, 12], vec![20, 20], vec![9, 9]];
    let states: Vec<DeviceState> = (0..3)
        .map(|m| DeviceState::new(m, &dims, sizes[m].clone()).unwrap())
        .collect();
    let grads: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|m| {
            (0..2)
                .map(|n| probe(dims[n], m as f64 + 0.31 * n as f64))
                .collect()
        })
        .collect();
    let top_k = [16usize, 12];

    let budget = 2.0;
    let constraints: Vec<(f64, f64)> = round
        .scheduled
        .iter()
        .map(|&m| {
            let norm = preview_signal_norm(&grads[m], &states[m], &ops, &top_k).unwrap();
            (gains[m].norm(), norm)
        })
        .collect();
    let gamma = auto_gamma(budget, constraints).unwrap();
    let policy = PowerPolicy::auto(budget, gamma, threshold).unwrap();

    let encs: Vec<EncodedDevice> = (0..3)
        .map(|m| device_encode(&grads[m], &states[m], &ops, &top_k, gains[m], &policy).unwrap())
        .collect();
    Uplink {
        round,
        ops,
        sizes,
        gamma,
        budget,
        encs,
    }
}

#[test]
fn noiseless_uplink_reproduces_the_weighted_gradient_average() {
    let up = run_uplink();
    assert!(up.encs[0].scheduled && up.encs[1].scheduled);
    assert!(!up.encs[2].scheduled);
    assert!(up.encs[2].tx.iter().all(|z| z.norm() == 0.0));

    let signals: Vec<Vec<Complex64>> = up.encs.iter().map(|e| e.tx.clone()).collect();
    let received = transmit(&signals, &up.round).unwrap();
    let obs = effective_observation(
        &received,
        &up.round,
        up.gamma,
        &up.sizes,
        SigmaConvention::Derived,
    )
    .unwrap();
    assert_eq!(obs.noise_var, 0.0);
    let k_total = 32.0; // scheduled devices hold 12 + 20 samples per task
    assert_eq!(obs.normalizers, vec![k_total, k_total]);

    // Reference: y = Σ_n A_n ḡ_n with ḡ_n the dataset-weighted average of
    // the scheduled devices' sparsified task-n gradients.
    let mut y_ref = vec![0.0; obs.y.len()];
    for (n, op) in up.ops.iter().enumerate() {
        let mut avg = vec![0.0; op.dim()];
        for &m in &up.round.scheduled {
            let w = up.sizes[m][n] as f64 / k_total;
            for (a, &g) in avg.iter_mut().zip(up.encs[m].sparsified[n].iter()) {
                *a += w * g;
            }
        }
        for (y, p) in y_ref.iter_mut().zip(op.forward(&avg).unwrap().iter()) {
            *y += p;
        }
    }
    let worst = obs
        .y
        .iter()
        .zip(y_ref.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "uplink identity violated by {worst}");
}

#[test]
fn auto_gamma_drives_the_binding_device_to_the_budget() {
    let up = run_uplink();
    let powers: Vec<f64> = up
        .round
        .scheduled
        .iter()
        .map(|&m| up.encs[m].power)
        .collect();
    for (&m, &p) in up.round.scheduled.iter().zip(powers.iter()) {
        assert!(up.encs[m].within_budget, "device {m} over budget");
        assert!(p <= up.budget + POWER_TOLERANCE, "device {m}: {p}");
    }
    let max_power = powers.iter().copied().fold(0.0, f64::max);
    assert!(
        (max_power - up.budget).abs() <= POWER_TOLERANCE * up.budget,
        "binding device transmits {max_power}, budget {}",
        up.budget
    );
    assert_eq!(up.encs[2].power, 0.0);
}

//! Synthetic one-shot recovery instances.
//!
//! The signal-level protocol behind MSE-versus-iteration experiments: draw
//! Bernoulli-Gaussian task signals, form the shared observation
//! `y = Σ_n A_n g_n + w`, and build per-task time-division observations of
//! the same signals, so concurrent and TDM recovery can be compared on
//! identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::EffectiveObservation;
use crate::error::{Error, Result};
use crate::prior::{sample_bg, BgPrior};
use crate::seeds::{derive_seed, Stream};
use crate::transform::{make_partial_dct, PartialOrthonormalOperator};

/// One synthesized multi-task recovery problem.
#[derive(Debug, Clone)]
pub struct RecoveryInstance {
    /// True per-task signals.
    pub signals: Vec<Vec<f64>>,
    pub ops: Vec<PartialOrthonormalOperator>,
    /// Observation carrying all tasks superimposed.
    pub shared: EffectiveObservation,
    /// Per-task observations of the same signals, one channel block each.
    pub tdm: Vec<EffectiveObservation>,
}

fn add_noise(y: &mut [f64], noise_var: f64, seed: u64) -> Result<()> {
    if noise_var == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise_var.sqrt())
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    for v in y.iter_mut() {
        *v += dist.sample(&mut rng);
    }
    Ok(())
}

/// Draw signals, operators, and observations for one recovery experiment.
///
/// Operators use the `Operator` seed stream, signals the `Data` stream, and
/// noise the `Noise` stream (sub-index 0 for the shared block, `1 + n` for
/// task n's time-division block), so the instance is reproducible from
/// `seed` alone and the TDM blocks see fresh noise on the same signals.
pub fn synthesize_recovery(
    priors: &[BgPrior],
    dims: &[usize],
    rows: usize,
    noise_var: f64,
    seed: u64,
) -> Result<RecoveryInstance> {
    if priors.is_empty() {
        return Err(Error::EmptyInput("synthesize_recovery priors"));
    }
    if priors.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            context: "recovery priors vs dims",
            expected: dims.len(),
            got: priors.len(),
        });
    }
    if noise_var < 0.0 || !noise_var.is_finite() {
        return Err(Error::invalid(format!(
            "noise variance must be non-negative, got {noise_var}"
        )));
    }
    let ops = dims
        .iter()
        .enumerate()
        .map(|(n, &d)| make_partial_dct(d, rows, derive_seed(seed, Stream::Operator, n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let signals = priors
        .iter()
        .zip(dims.iter())
        .enumerate()
        .map(|(n, (prior, &d))| sample_bg(d, prior, derive_seed(seed, Stream::Data, n as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut y_shared = vec![0.0; rows];
    for (op, g) in ops.iter().zip(signals.iter()) {
        for (acc, v) in y_shared.iter_mut().zip(op.forward(g)?) {
            *acc += v;
        }
    }
    add_noise(&mut y_shared, noise_var, derive_seed(seed, Stream::Noise, 0))?;
    let shared = EffectiveObservation {
        y: y_shared,
        noise_var,
        normalizers: vec![1.0; dims.len()],
    };

    let tdm = ops
        .iter()
        .zip(signals.iter())
        .enumerate()
        .map(|(n, (op, g))| {
            let mut y = op.forward(g)?;
            add_noise(&mut y, noise_var, derive_seed(seed, Stream::Noise, 1 + n as u64))?;
            Ok(EffectiveObservation {
                y,
                noise_var,
                normalizers: vec![1.0],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RecoveryInstance {
        signals,
        ops,
        shared,
        tdm,
    })
}

//! Fading multiple-access channel: all scheduled devices transmit in the
//! same resource block, the receiver observes the superposition plus
//! circularly-symmetric complex Gaussian noise, and normalizes it into the
//! real-valued observation consumed by the recovery algorithm.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the per-device fading gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingModel {
    /// `h_m = 1` for every device (no fading).
    Unit,
    /// `h_m ~ CN(0, 1)`: real and imaginary parts i.i.d. `N(0, 1/2)`.
    Rayleigh,
}

/// Which effective-noise-variance convention the receiver is told.
///
/// The observation is `y = [Re(r); Im(r)] / (γ K)`. Each real component of
/// the complex noise `w ~ CN(0, σ_w²)` has variance `σ_w²/2`, giving
/// `σ_w² / (2 γ² K²)` per entry of `y` — the [`SigmaConvention::Derived`]
/// value. [`SigmaConvention::PaperSigma`] halves it again to
/// `σ_w² / (4 γ² K²)`, matching a common alternative bookkeeping where
/// `σ_w²` denotes the per-quadrature noise power already.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    Derived,
    PaperSigma,
}

/// One round's channel realization.
#[derive(Debug, Clone)]
pub struct ChannelRound {
    /// Fading gain per device.
    pub gains: Vec<Complex64>,
    /// Complex noise standard deviation σ_w (so `w ~ CN(0, σ_w²)`).
    pub noise_std: f64,
    /// Scheduling threshold ζ.
    pub threshold: f64,
    /// Indices of devices with `|h_m| ≥ ζ`, in device order.
    pub scheduled: Vec<usize>,
    /// Seed for this round's additive noise.
    pub noise_seed: u64,
}

impl ChannelRound {
    pub fn new(
        gains: Vec<Complex64>,
        noise_std: f64,
        threshold: f64,
        noise_seed: u64,
    ) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::EmptyInput("channel gains"));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::invalid(format!(
                "noise standard deviation must be non-negative, got {noise_std}"
            )));
        }
        if threshold < 0.0 || !threshold.is_finite() {
            return Err(Error::invalid(format!(
                "scheduling threshold must be non-negative, got {threshold}"
            )));
        }
        let scheduled = gains
            .iter()
            .enumerate()
            .filter(|(_, h)| h.norm() >= threshold)
            .map(|(m, _)| m)
            .collect();
        Ok(ChannelRound {
            gains,
            noise_std,
            threshold,
            scheduled,
            noise_seed,
        })
    }

    pub fn num_devices(&self) -> usize {
        self.gains.len()
    }

    pub fn is_scheduled(&self, device: usize) -> bool {
        self.gains
            .get(device)
            .map(|h| h.norm() >= self.threshold)
            .unwrap_or(false)
    }
}

/// Draw one fading gain per device.
pub fn draw_fading(num_devices: usize, model: FadingModel, seed: u64) -> Result<Vec<Complex64>> {
    if num_devices == 0 {
        return Err(Error::EmptyInput("draw_fading"));
    }
    match model {
        FadingModel::Unit => Ok(vec![Complex64::new(1.0, 0.0); num_devices]),
        FadingModel::Rayleigh => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let per_part = Normal::new(0.0, (0.5f64).sqrt())
                .map_err(|e| Error::invalid(format!("fading distribution: {e}")))?;
            Ok((0..num_devices)
                .map(|_| Complex64::new(per_part.sample(&mut rng), per_part.sample(&mut rng)))
                .collect())
        }
    }
}

/// Superpose the scheduled devices' transmit signals through their fading
/// gains and add complex Gaussian noise: `r = Σ_m h_m s_m + w`.
///
/// `signals` holds one transmit vector per device (unscheduled devices pass
/// all-zero vectors, which contribute nothing). Devices are summed in index
/// order so the result is independent of scheduling history.
pub fn transmit(signals: &[Vec<Complex64>], round: &ChannelRound) -> Result<Vec<Complex64>> {
    if signals.len() != round.num_devices() {
        return Err(Error::DimensionMismatch {
            context: "transmit device count",
            expected: round.num_devices(),
            got: signals.len(),
        });
    }
    let len = signals
        .first()
        .map(|s| s.len())
        .ok_or(Error::EmptyInput("transmit"))?;
    if len == 0 {
        return Err(Error::EmptyInput("transmit symbols"));
    }
    let mut received = vec![Complex64::new(0.0, 0.0); len];
    for (m, s) in signals.iter().enumerate() {
        if s.len() != len {
            return Err(Error::DimensionMismatch {
                context: "transmit symbol length",
                expected: len,
                got: s.len(),
            });
        }
        let h = round.gains[m];
        for (r, &z) in received.iter_mut().zip(s.iter()) {
            *r += h * z;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(round.noise_seed);
    let per_part = Normal::new(0.0, round.noise_std / 2f64.sqrt())
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    for r in received.iter_mut() {
        let re = per_part.sample(&mut rng);
        let im = per_part.sample(&mut rng);
        *r += Complex64::new(re, im);
    }
    Ok(received)
}

/// The receiver-side observation after normalization.
#[derive(Debug, Clone)]
pub struct EffectiveObservation {
    /// `[Re(r); Im(r)] / (γ K)`, length twice the symbol count.
    pub y: Vec<f64>,
    /// Per-entry variance of the effective noise in `y`.
    pub noise_var: f64,
    /// Scheduled-set dataset-size sum per task (all equal to `K`).
    pub normalizers: Vec<f64>,
}

/// Normalize the received block into the real observation
/// `y = [Re(r); Im(r)] / (γ K)` where `K = Σ_{m scheduled} K_nm` must be the
/// same for every task `n` (otherwise no single normalization makes every
/// task's aggregated gradient appear at unit scale).
///
/// `dataset_sizes[m][n]` is device `m`'s sample count for task `n`; only
/// rows of scheduled devices enter `K`.
pub fn effective_observation(
    received: &[Complex64],
    round: &ChannelRound,
    gamma: f64,
    dataset_sizes: &[Vec<u64>],
    convention: SigmaConvention,
) -> Result<EffectiveObservation> {
    if received.is_empty() {
        return Err(Error::EmptyInput("effective_observation"));
    }
    if dataset_sizes.len() != round.num_devices() {
        return Err(Error::DimensionMismatch {
            context: "effective_observation device count",
            expected: round.num_devices(),
            got: dataset_sizes.len(),
        });
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if round.scheduled.is_empty() {
        return Err(Error::EmptyScheduledSet);
    }
    let n_tasks = dataset_sizes[0].len();
    if n_tasks == 0 {
        return Err(Error::EmptyInput("dataset sizes"));
    }
    let mut normalizers = vec![0.0f64; n_tasks];
    for &m in &round.scheduled {
        if dataset_sizes[m].len() != n_tasks {
            return Err(Error::DimensionMismatch {
                context: "effective_observation task count",
                expected: n_tasks,
                got: dataset_sizes[m].len(),
            });
        }
        for (k, &size) in normalizers.iter_mut().zip(dataset_sizes[m].iter()) {
            *k += size as f64;
        }
    }
    let k = normalizers[0];
    if normalizers.iter().any(|&v| v != k) {
        return Err(Error::UnequalNormalizers(normalizers));
    }
    if k == 0.0 {
        return Err(Error::invalid("scheduled dataset sizes sum to zero"));
    }
    let scale = 1.0 / (gamma * k);
    let mut y = Vec::with_capacity(2 * received.len());
    y.extend(received.iter().map(|z| z.re * scale));
    y.extend(received.iter().map(|z| z.im * scale));
    let denom = gamma * gamma * k * k;
    let noise_var = match convention {
        SigmaConvention::Derived => round.noise_std.powi(2) / (2.0 * denom),
        SigmaConvention::PaperSigma => round.noise_std.powi(2) / (4.0 * denom),
    };
    Ok(EffectiveObservation {
        y,
        noise_var,
        normalizers,
    })
}

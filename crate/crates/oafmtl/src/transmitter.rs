//! Device-side uplink pipeline: error-feedback accumulation, top-k
//! sparsification, partial-DCT compression, cross-task superposition,
//! complex packing, and channel inversion.
//!
//! Per round and device, each task's gradient `g` is processed as
//!
//! ```text
//! g_ac = g + Δ              accumulate the sparsification residual
//! g_sp = top_k(g_ac)        keep the k largest-magnitude entries
//! Δ'   = g_ac - g_sp        carry the rest into the next round
//! g_cp = A g_sp             compress to the shared measurement length
//! ```
//!
//! and the device transmits `α · pack(Σ_n K_n · g_cp_n)`, where `K_n` is its
//! per-task sample count and `α = γ/h` inverts the fading gain when the
//! device is scheduled (`|h| ≥ ζ`). Buffers advance every round, scheduled
//! or not, so sparsification error is never dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::PartialOrthonormalOperator;
use crate::util::norm_sq;

/// Relative/absolute slack for power-budget comparisons.
pub const POWER_TOLERANCE: f64 = 1e-12;

/// Per-device buffers and weights, one entry per task.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub device_id: usize,
    /// Sparsification residual Δ per task, same length as that task's model.
    pub buffers: Vec<Vec<f64>>,
    /// Per-task local dataset sizes `K_nm`; used as superposition weights.
    pub dataset_sizes: Vec<u64>,
}

impl DeviceState {
    /// Fresh state with zero buffers.
    pub fn new(device_id: usize, dims: &[usize], dataset_sizes: Vec<u64>) -> Result<Self> {
        if dims.len() != dataset_sizes.len() {
            return Err(Error::DimensionMismatch {
                context: "device state dims vs dataset sizes",
                expected: dims.len(),
                got: dataset_sizes.len(),
            });
        }
        if dataset_sizes.iter().any(|&k| k == 0) {
            return Err(Error::invalid("dataset sizes must be positive"));
        }
        Ok(DeviceState {
            device_id,
            buffers: dims.iter().map(|&d| vec![0.0; d]).collect(),
            dataset_sizes,
        })
    }
}

/// How the transmit scale factor γ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// γ is a configured constant; the power budget is reported, not
    /// enforced (large fixed γ can exceed it).
    Fixed,
    /// γ is resolved each round so every scheduled device meets the budget
    /// with equality for the tightest one; the budget is then asserted.
    Auto,
}

/// Power control for channel inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    /// Per-device transmit power budget `P`.
    pub budget: f64,
    /// Scale factor γ; in [`GammaMode::Auto`] this is the value resolved for
    /// the current round.
    pub gamma: f64,
    /// Scheduling threshold ζ on the fading magnitude `|h|`.
    pub threshold: f64,
    pub mode: GammaMode,
}

impl PowerPolicy {
    /// Fixed-γ policy.
    pub fn fixed(budget: f64, gamma: f64, threshold: f64) -> Result<Self> {
        if budget <= 0.0 || !budget.is_finite() {
            return Err(Error::invalid(format!("power budget must be positive, got {budget}")));
        }
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::invalid(format!("fixed gamma must be positive, got {gamma}")));
        }
        if threshold < 0.0 || !threshold.is_finite() {
            return Err(Error::invalid(format!("threshold must be non-negative, got {threshold}")));
        }
        Ok(PowerPolicy {
            budget,
            gamma,
            threshold,
            mode: GammaMode::Fixed,
        })
    }

    /// Auto-γ policy with γ resolved to `gamma` for the current round (see
    /// [`auto_gamma`]).
    pub fn auto(budget: f64, gamma: f64, threshold: f64) -> Result<Self> {
        let mut p = PowerPolicy::fixed(budget, gamma, threshold)?;
        p.mode = GammaMode::Auto;
        Ok(p)
    }
}

/// Round-level γ that lets every scheduled device satisfy its power budget:
/// `γ = min over scheduled devices of sqrt(P)·|h| / ‖x̃‖`.
///
/// Devices with a zero-norm signal impose no constraint. If nothing
/// constrains γ (no scheduled device transmits energy), returns 1.0.
pub fn auto_gamma<I>(budget: f64, scheduled: I) -> Result<f64>
where
    I: IntoIterator<Item = (f64, f64)>, // (|h|, ‖x̃‖)
{
    if budget <= 0.0 || !budget.is_finite() {
        return Err(Error::invalid(format!("power budget must be positive, got {budget}")));
    }
    let sqrt_p = budget.sqrt();
    let mut gamma = f64::INFINITY;
    for (gain_mag, norm) in scheduled {
        if norm > 0.0 {
            gamma = gamma.min(sqrt_p * gain_mag / norm);
        }
    }
    Ok(if gamma.is_finite() { gamma } else { 1.0 })
}

/// `g + Δ`: fold the carried residual into this round's gradient.
pub fn accumulate(gradient: &[f64], buffer: &[f64]) -> Result<Vec<f64>> {
    if gradient.len() != buffer.len() {
        return Err(Error::DimensionMismatch {
            context: "accumulate",
            expected: gradient.len(),
            got: buffer.len(),
        });
    }
    Ok(gradient.iter().zip(buffer.iter()).map(|(g, b)| g + b).collect())
}

/// Keep the `k` largest-magnitude entries of `x`, zeroing the rest.
///
/// Ties in magnitude are broken toward the lower index, so the result is a
/// pure function of `x` and `k`. The output has exactly
/// `min(k, nonzeros of x)` nonzero entries.
pub fn top_k_sparsify(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("top_k_sparsify"));
    }
    if k == 0 || k > x.len() {
        return Err(Error::invalid(format!(
            "top-k must satisfy 1 <= k <= len, got k={k}, len={}",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        x[b].abs()
            .total_cmp(&x[a].abs())
            .then_with(|| a.cmp(&b))
    });
    let mut out = vec![0.0; x.len()];
    for &i in &order[..k] {
        out[i] = x[i];
    }
    Ok(out)
}

/// `Δ' = g_ac - g_sp`: the part of the accumulated gradient that was not
/// transmitted. Satisfies `g_sp + Δ' == g_ac` exactly, entry by entry.
pub fn residual_update(accumulated: &[f64], sparsified: &[f64]) -> Result<Vec<f64>> {
    if accumulated.len() != sparsified.len() {
        return Err(Error::DimensionMismatch {
            context: "residual_update",
            expected: accumulated.len(),
            got: sparsified.len(),
        });
    }
    Ok(accumulated
        .iter()
        .zip(sparsified.iter())
        .map(|(a, s)| a - s)
        .collect())
}

/// `Σ_n w_n · c_n`: weighted superposition of per-task compressed vectors.
/// All vectors must share the common measurement length.
pub fn superpose(compressed: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if compressed.is_empty() {
        return Err(Error::EmptyInput("superpose"));
    }
    if compressed.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "superpose weights",
            expected: compressed.len(),
            got: weights.len(),
        });
    }
    let len = compressed[0].len();
    let mut out = vec![0.0; len];
    for (c, &w) in compressed.iter().zip(weights.iter()) {
        if c.len() != len {
            return Err(Error::DimensionMismatch {
                context: "superpose lengths",
                expected: len,
                got: c.len(),
            });
        }
        for (o, &v) in out.iter_mut().zip(c.iter()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Pack a real vector of even length `2s` into `s` complex symbols: the
/// first half becomes the real parts, the second half the imaginary parts.
pub fn pack_complex(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("pack_complex"));
    }
    if x.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "pack_complex needs an even length, got {}",
            x.len()
        )));
    }
    let s = x.len() / 2;
    Ok((0..s).map(|j| Complex64::new(x[j], x[s + j])).collect())
}

/// Inverse of [`pack_complex`]: `[Re(c); Im(c)]`.
pub fn unpack_complex(c: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * c.len());
    out.extend(c.iter().map(|z| z.re));
    out.extend(c.iter().map(|z| z.im));
    out
}

/// Result of channel inversion for one device.
#[derive(Debug, Clone)]
pub struct ChannelInversion {
    /// Transmit signal; all zeros when the device is unscheduled.
    pub signal: Vec<Complex64>,
    /// `‖signal‖²`.
    pub power: f64,
    /// Whether the power budget was met (reported in both modes, enforced
    /// only under [`GammaMode::Auto`]).
    pub within_budget: bool,
    /// Whether `|h| ≥ ζ` held.
    pub scheduled: bool,
}

/// Apply truncated channel inversion `s = (γ/h)·x̃` when `|h| ≥ ζ`, else
/// transmit nothing.
pub fn channel_invert(
    x_tilde: &[Complex64],
    h: Complex64,
    policy: &PowerPolicy,
) -> Result<ChannelInversion> {
    if x_tilde.is_empty() {
        return Err(Error::EmptyInput("channel_invert"));
    }
    if !(policy.gamma > 0.0) || !policy.gamma.is_finite() {
        return Err(Error::invalid(format!(
            "channel inversion requires a resolved positive gamma, got {}",
            policy.gamma
        )));
    }
    let gain = h.norm();
    if gain < policy.threshold {
        return Ok(ChannelInversion {
            signal: vec![Complex64::new(0.0, 0.0); x_tilde.len()],
            power: 0.0,
            within_budget: true,
            scheduled: false,
        });
    }
    if gain == 0.0 {
        // Only reachable with ζ = 0; a zero gain cannot be inverted.
        return Err(Error::ZeroChannelGain);
    }
    let alpha = Complex64::new(policy.gamma, 0.0) / h;
    let signal: Vec<Complex64> = x_tilde.iter().map(|&z| alpha * z).collect();
    let power: f64 = signal.iter().map(|z| z.norm_sqr()).sum();
    let within_budget = power <= policy.budget + POWER_TOLERANCE;
    if policy.mode == GammaMode::Auto && !within_budget {
        return Err(Error::invalid(format!(
            "auto-gamma power violation: {power} > {}",
            policy.budget
        )));
    }
    Ok(ChannelInversion {
        signal,
        power,
        within_budget,
        scheduled: true,
    })
}

/// Per-task intermediate products of one device-round.
#[derive(Debug, Clone)]
pub struct CompressedDevice {
    /// Sparsified accumulated gradient per task (model length).
    pub sparsified: Vec<Vec<f64>>,
    /// Compressed vectors per task (measurement length).
    pub compressed: Vec<Vec<f64>>,
    /// State with buffers advanced to the next round.
    pub state: DeviceState,
}

/// Run accumulate → sparsify → residual-update → compress for every task.
///
/// Buffers in the returned state are advanced unconditionally; scheduling
/// only affects what is transmitted afterwards.
pub fn device_compress(
    gradients: &[Vec<f64>],
    state: &DeviceState,
    ops: &[PartialOrthonormalOperator],
    top_k: &[usize],
) -> Result<CompressedDevice> {
    let n_tasks = state.buffers.len();
    if gradients.len() != n_tasks || ops.len() != n_tasks || top_k.len() != n_tasks {
        return Err(Error::DimensionMismatch {
            context: "device_compress task counts",
            expected: n_tasks,
            got: gradients.len().min(ops.len()).min(top_k.len()),
        });
    }
    let mut sparsified = Vec::with_capacity(n_tasks);
    let mut compressed = Vec::with_capacity(n_tasks);
    let mut new_state = state.clone();
    for n in 0..n_tasks {
        let acc = accumulate(&gradients[n], &state.buffers[n])?;
        let sp = top_k_sparsify(&acc, top_k[n])?;
        new_state.buffers[n] = residual_update(&acc, &sp)?;
        compressed.push(ops[n].forward(&sp)?);
        sparsified.push(sp);
    }
    Ok(CompressedDevice {
        sparsified,
        compressed,
        state: new_state,
    })
}

/// Superpose a subset of tasks with this device's dataset-size weights and
/// pack into complex symbols. `tasks` selects which entries of `compressed`
/// participate (e.g. a single task for time-division baselines).
pub fn superpose_packed(
    compressed: &CompressedDevice,
    tasks: &[usize],
) -> Result<Vec<Complex64>> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("superpose_packed"));
    }
    let selected: Vec<Vec<f64>> = tasks
        .iter()
        .map(|&n| compressed.compressed[n].clone())
        .collect();
    let weights: Vec<f64> = tasks
        .iter()
        .map(|&n| compressed.state.dataset_sizes[n] as f64)
        .collect();
    pack_complex(&superpose(&selected, &weights)?)
}

/// One device's full encoding result.
#[derive(Debug, Clone)]
pub struct EncodedDevice {
    /// Transmit symbols (zeros when unscheduled).
    pub tx: Vec<Complex64>,
    /// State with buffers advanced.
    pub state: DeviceState,
    /// Per-task sparsified gradients (diagnostics for error decomposition).
    pub sparsified: Vec<Vec<f64>>,
    /// `‖x̃‖` of the pre-inversion packed signal.
    pub signal_norm: f64,
    pub power: f64,
    pub within_budget: bool,
    pub scheduled: bool,
}

/// Full device pipeline: compress all tasks, superpose, pack, and invert the
/// channel under `policy`. In auto-γ operation the caller resolves γ first
/// (it depends on every scheduled device's signal norm, see [`auto_gamma`])
/// and passes it in the policy.
pub fn device_encode(
    gradients: &[Vec<f64>],
    state: &DeviceState,
    ops: &[PartialOrthonormalOperator],
    top_k: &[usize],
    h: Complex64,
    policy: &PowerPolicy,
) -> Result<EncodedDevice> {
    let compressed = device_compress(gradients, state, ops, top_k)?;
    let all_tasks: Vec<usize> = (0..state.buffers.len()).collect();
    let x_tilde = superpose_packed(&compressed, &all_tasks)?;
    let signal_norm = x_tilde.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let inv = channel_invert(&x_tilde, h, policy)?;
    Ok(EncodedDevice {
        tx: inv.signal,
        state: compressed.state,
        sparsified: compressed.sparsified,
        signal_norm,
        power: inv.power,
        within_budget: inv.within_budget,
        scheduled: inv.scheduled,
    })
}

/// `‖x̃‖` a device would present to the γ resolver this round, without
/// advancing any state (pure preview used by auto-γ coordination).
pub fn preview_signal_norm(
    gradients: &[Vec<f64>],
    state: &DeviceState,
    ops: &[PartialOrthonormalOperator],
    top_k: &[usize],
) -> Result<f64> {
    let compressed = device_compress(gradients, state, ops, top_k)?;
    let all_tasks: Vec<usize> = (0..state.buffers.len()).collect();
    let x_tilde = superpose_packed(&compressed, &all_tasks)?;
    Ok(norm_sq(&unpack_complex(&x_tilde)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::make_partial_dct;

    #[test]
    fn top_k_keeps_largest_and_breaks_ties_low() {
        let x = [1.0, -3.0, 2.0, -3.0, 0.5];
        let out = top_k_sparsify(&x, 2).unwrap();
        assert_eq!(out, vec![0.0, -3.0, 0.0, -3.0, 0.0]);
        let tied = [1.0, 1.0, 1.0];
        assert_eq!(top_k_sparsify(&tied, 2).unwrap(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn top_k_never_manufactures_nonzeros() {
        let x = [0.0, 2.0, 0.0, 0.0];
        let out = top_k_sparsify(&x, 3).unwrap();
        assert_eq!(out.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(out[1], 2.0);
    }

    #[test]
    fn top_k_validates_k() {
        assert!(top_k_sparsify(&[1.0], 0).is_err());
        assert!(top_k_sparsify(&[1.0], 2).is_err());
        assert!(top_k_sparsify(&[], 1).is_err());
    }

    #[test]
    fn residual_identity_is_exact() {
        let acc = [3.5, -1.25, 0.875, 2.0];
        let sp = top_k_sparsify(&acc, 2).unwrap();
        let res = residual_update(&acc, &sp).unwrap();
        for i in 0..acc.len() {
            assert_eq!(sp[i] + res[i], acc[i]);
        }
    }

    #[test]
    fn packing_round_trips() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let c = pack_complex(&x).unwrap();
        assert_eq!(c[0], Complex64::new(1.0, 4.0));
        assert_eq!(unpack_complex(&c), x.to_vec());
        assert!(pack_complex(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn auto_gamma_takes_the_binding_constraint() {
        let g = auto_gamma(0.1, vec![(1.0, 1.0), (0.5, 2.0)]).unwrap();
        let expect = 0.1f64.sqrt() * 0.5 / 2.0;
        assert!((g - expect).abs() < 1e-15, "{g} vs {expect}");
        // Zero-norm devices do not constrain; nothing constraining => 1.0.
        assert_eq!(auto_gamma(0.1, vec![(0.7, 0.0)]).unwrap(), 1.0);
    }

    #[test]
    fn channel_inversion_schedules_on_threshold_and_meets_power() {
        let x = pack_complex(&[0.6, -0.8]).unwrap();
        let h = Complex64::new(0.3, 0.4); // |h| = 0.5
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let gamma = auto_gamma(0.1, vec![(0.5, norm)]).unwrap();
        let policy = PowerPolicy::auto(0.1, gamma, 0.2).unwrap();
        let inv = channel_invert(&x, h, &policy).unwrap();
        assert!(inv.scheduled);
        assert!((inv.power - 0.1).abs() < 1e-12, "budget met with equality");
        // Channel inversion: h * s = γ x̃.
        let back = h * inv.signal[0];
        assert!((back - x[0] * gamma).norm() < 1e-12);

        let below = PowerPolicy::auto(0.1, gamma, 0.6).unwrap();
        let inv = channel_invert(&x, h, &below).unwrap();
        assert!(!inv.scheduled);
        assert!(inv.signal.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_gain_with_zero_threshold_is_rejected() {
        let x = pack_complex(&[1.0, 1.0]).unwrap();
        let policy = PowerPolicy::fixed(0.1, 1.0, 0.0).unwrap();
        assert!(matches!(
            channel_invert(&x, Complex64::new(0.0, 0.0), &policy),
            Err(Error::ZeroChannelGain)
        ));
    }

    #[test]
    fn fixed_mode_reports_but_does_not_enforce_power() {
        let x = pack_complex(&[10.0, 0.0]).unwrap();
        let policy = PowerPolicy::fixed(0.1, 1000.0, 0.0).unwrap();
        let inv = channel_invert(&x, Complex64::new(1.0, 0.0), &policy).unwrap();
        assert!(!inv.within_budget);
        assert!(inv.power > 0.1);
    }

    #[test]
    fn buffers_accumulate_residuals_across_rounds() {
        let op = make_partial_dct(8, 4, 1).unwrap();
        let state = DeviceState::new(0, &[8], vec![10]).unwrap();
        let g = vec![vec![4.0, -3.0, 2.0, -1.0, 0.5, 0.25, 0.125, 0.0625]];
        let policy = PowerPolicy::fixed(1.0, 1.0, 0.0).unwrap();
        let h = Complex64::new(1.0, 0.0);

        let round1 = device_encode(&g, &state, &[op.clone()], &[2], h, &policy).unwrap();
        // Round 1: top-2 of g keeps 4, -3; buffer = rest of g.
        let acc1 = g[0].clone();
        let sp1 = top_k_sparsify(&acc1, 2).unwrap();
        assert_eq!(round1.sparsified[0], sp1);
        let res1 = residual_update(&acc1, &sp1).unwrap();
        assert_eq!(round1.state.buffers[0], res1);

        let round2 = device_encode(&g, &round1.state, &[op], &[2], h, &policy).unwrap();
        // Round 2 sees g + residual of round 1.
        let acc2 = accumulate(&g[0], &res1).unwrap();
        let sp2 = top_k_sparsify(&acc2, 2).unwrap();
        let res2 = residual_update(&acc2, &sp2).unwrap();
        assert_eq!(round2.state.buffers[0], res2);
    }

    #[test]
    fn unscheduled_devices_still_advance_buffers() {
        let op = make_partial_dct(4, 2, 3).unwrap();
        let state = DeviceState::new(1, &[4], vec![5]).unwrap();
        let g = vec![vec![1.0, -2.0, 3.0, -4.0]];
        let policy = PowerPolicy::fixed(1.0, 1.0, 0.9).unwrap();
        let weak = Complex64::new(0.1, 0.0);
        let out = device_encode(&g, &state, &[op], &[1], weak, &policy).unwrap();
        assert!(!out.scheduled);
        assert!(out.tx.iter().all(|z| z.norm() == 0.0));
        assert!(out.state.buffers[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn superposition_weights_by_dataset_size() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = superpose(&a, &[2.0, 3.0]).unwrap();
        assert_eq!(out, vec![2.0, 3.0]);
        assert!(superpose(&a, &[1.0]).is_err());
    }
}

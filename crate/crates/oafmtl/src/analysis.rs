//! Deterministic predictions for the recovery loop and the training
//! process: the state-evolution recursion that tracks per-iteration
//! variances of the turbo receiver, the per-round contraction bound on the
//! training loss gap, and the gradient-error decomposition used to audit
//! both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{bg_mmse, BgPrior};
use crate::receiver::VarInit;
use crate::util::norm_sq;

/// One task's dimensions and prior for the state-evolution recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTask {
    pub dim: usize,
    pub prior: BgPrior,
}

/// Configuration of the state-evolution recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub tasks: Vec<SeTask>,
    /// Real observation length (twice the complex symbol count).
    pub rows: usize,
    pub noise_var: f64,
    pub max_iters: usize,
    /// Termination on the maximum relative change of any task's `v_a`.
    pub rel_tol: f64,
    /// Use `rows/(2 d_n)` as the measurement ratio instead of `rows/d_n`,
    /// mirroring the receiver option of the same name.
    pub paper_ratio: bool,
    pub var_floor: f64,
    pub var_ceil: f64,
    pub var_init: VarInit,
}

impl SeConfig {
    pub fn new(tasks: Vec<SeTask>, rows: usize, noise_var: f64) -> Result<Self> {
        let cfg = SeConfig {
            tasks,
            rows,
            noise_var,
            max_iters: 200,
            rel_tol: 1e-10,
            paper_ratio: false,
            var_floor: 1e-12,
            var_ceil: 1e12,
            var_init: VarInit::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::EmptyInput("state-evolution tasks"));
        }
        if self.rows == 0 {
            return Err(Error::invalid("rows must be positive"));
        }
        for t in &self.tasks {
            if self.rows > t.dim {
                return Err(Error::invalid(format!(
                    "rows ({}) must not exceed any task dimension ({})",
                    self.rows, t.dim
                )));
            }
        }
        if self.noise_var < 0.0 || !self.noise_var.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be non-negative, got {}",
                self.noise_var
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.var_floor > 0.0) || !(self.var_ceil > self.var_floor) {
            return Err(Error::invalid("variance clamps must satisfy 0 < floor < ceil"));
        }
        Ok(())
    }
}

/// One row of the state-evolution trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeIterRecord {
    /// 1-based iteration, aligned with the receiver's trace.
    pub iter: usize,
    pub task: usize,
    pub v_a_pri: f64,
    pub v_b_pri: f64,
    /// Predicted per-component MSE of this iteration's denoised estimate.
    pub mmse: f64,
}

#[derive(Debug, Clone)]
pub struct SeResult {
    pub trace: Vec<SeIterRecord>,
    /// Per-task `v⋆`: the predicted output MSE at the final iterate.
    pub fixed_point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Any variance hit the ceiling (the recursion is not at a fixed point).
    pub diverged: bool,
}

/// Deterministic variance recursion of the turbo receiver:
///
/// ```text
/// v_b_n  = (d_n/rows)·(Σ_k v_a_k + σ²) − v_a_n
/// v_a_n' = (1/mmse_n(v_b_n) − 1/v_b_n)⁻¹
/// ```
///
/// iterated from `v_a_n = λ_n v_n` (or the configured initialization) until
/// the relative change of every `v_a_n` falls below `rel_tol`. The
/// per-iteration `mmse_n` values predict the receiver's empirical MSE
/// after denoising; the final one is the fixed point `v⋆_n`.
pub fn state_evolution(cfg: &SeConfig) -> Result<SeResult> {
    cfg.validate()?;
    let n_tasks = cfg.tasks.len();
    let clamp = |v: f64| v.clamp(cfg.var_floor, cfg.var_ceil);
    let mut v_a: Vec<f64> = match cfg.var_init {
        VarInit::Auto | VarInit::PriorSecondMoment => cfg
            .tasks
            .iter()
            .map(|t| clamp(t.prior.second_moment()))
            .collect(),
        VarInit::ObservationEnergy => {
            // Expected observation energy per component and task:
            // E‖y‖²/(N·s) with E‖y‖² = (rows/2)·2·(Σ λ_k v_k + σ²)·…
            // reduces to 2(Σ_k λ_k v_k + σ²)/N for unit-row-norm operators.
            let total: f64 =
                cfg.tasks.iter().map(|t| t.prior.second_moment()).sum::<f64>() + cfg.noise_var;
            vec![clamp(2.0 * total / n_tasks as f64); n_tasks]
        }
        VarInit::Fixed(v) => {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "fixed initial variance must be positive, got {v}"
                )));
            }
            vec![clamp(v); n_tasks]
        }
    };

    let mut trace = Vec::new();
    let mut mmse_now = vec![f64::NAN; n_tasks];
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let sum_v: f64 = v_a.iter().sum();
        let mut v_a_next = vec![0.0; n_tasks];
        for (n, task) in cfg.tasks.iter().enumerate() {
            let ratio = if cfg.paper_ratio {
                cfg.rows as f64 / (2.0 * task.dim as f64)
            } else {
                cfg.rows as f64 / task.dim as f64
            };
            let v_b = clamp((sum_v + cfg.noise_var) / ratio - v_a[n]);
            // The mmse is a prediction of the output MSE, not a message
            // variance, so it is not floored; only guard the reciprocal.
            let mmse = bg_mmse(v_b, &task.prior)?.max(f64::MIN_POSITIVE);
            mmse_now[n] = mmse;
            let precision = 1.0 / mmse - 1.0 / v_b;
            v_a_next[n] = if precision <= 1.0 / cfg.var_ceil {
                cfg.var_ceil
            } else {
                clamp(1.0 / precision)
            };
            if v_b >= cfg.var_ceil || v_a_next[n] >= cfg.var_ceil {
                diverged = true;
            }
            trace.push(SeIterRecord {
                iter,
                task: n,
                v_a_pri: v_a[n],
                v_b_pri: v_b,
                mmse,
            });
        }
        let max_change = v_a
            .iter()
            .zip(v_a_next.iter())
            .map(|(old, new)| (old - new).abs() / old.max(cfg.var_floor))
            .fold(0.0f64, f64::max);
        v_a = v_a_next;
        if cfg.rel_tol > 0.0 && max_change <= cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(SeResult {
        trace,
        fixed_point: mmse_now,
        iterations,
        converged,
        diverged,
    })
}

/// `r_n = √((d_n − k_n)/d_n)`, the per-round contraction factor of top-k
/// sparsification. Requires `1 ≤ k ≤ d` so that `r < 1`.
pub fn sparsification_ratio(dim: usize, top_k: usize) -> Result<f64> {
    if dim == 0 || top_k == 0 || top_k > dim {
        return Err(Error::invalid(format!(
            "sparsification ratio needs 1 <= k <= d, got k={top_k}, d={dim}"
        )));
    }
    Ok(((dim - top_k) as f64 / dim as f64).sqrt())
}

/// Round-t error amplification factor
///
/// ```text
/// Ψ = (3/2)·[((2r − rᵗ − r^{t+1})/(1−r))² + (2 − 2·participation)²]
/// ```
///
/// combining the accumulated sparsification error (geometric in `r`) and
/// the scheduling shortfall (`participation` = scheduled dataset fraction).
pub fn psi(r: f64, t: usize, participation: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "sparsification ratio must lie in [0, 1), got {r}"
        )));
    }
    if t == 0 {
        return Err(Error::invalid("round index must be at least 1"));
    }
    if !(0.0..=1.0).contains(&participation) {
        return Err(Error::invalid(format!(
            "participation must lie in [0, 1], got {participation}"
        )));
    }
    let geometric = if r == 0.0 {
        0.0
    } else {
        (2.0 * r - r.powi(t as i32) - r.powi(t as i32 + 1)) / (1.0 - r)
    };
    Ok(1.5 * (geometric * geometric + (2.0 - 2.0 * participation).powi(2)))
}

/// Constants of one task entering the loss-gap bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTask {
    pub dim: usize,
    /// Strong-convexity constant Ω.
    pub strong_convexity: f64,
    /// Smoothness constant L (the harness steps with η = 1/L).
    pub smoothness: f64,
    /// Uniform per-sample gradient-norm bound β₁ (‖∇l‖² ≤ β₁ + β₂‖∇L‖²).
    pub beta1: f64,
    /// Relative gradient-norm bound β₂.
    pub beta2: f64,
    /// Sparsification ratio r = √((d−k)/d).
    pub sparsification_ratio: f64,
}

impl BoundTask {
    pub fn validate(&self) -> Result<()> {
        if !(self.strong_convexity > 0.0 && self.smoothness >= self.strong_convexity) {
            return Err(Error::invalid(format!(
                "need 0 < strong_convexity <= smoothness, got {} and {}",
                self.strong_convexity, self.smoothness
            )));
        }
        if self.beta1 < 0.0 || !(self.beta2 > 0.0) {
            return Err(Error::invalid(format!(
                "need beta1 >= 0 and beta2 > 0, got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(0.0..1.0).contains(&self.sparsification_ratio) {
            return Err(Error::invalid(format!(
                "sparsification ratio must lie in [0, 1), got {}",
                self.sparsification_ratio
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("task dimension must be positive"));
        }
        Ok(())
    }
}

/// Inputs of the loss-gap bound over a training horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub tasks: Vec<BoundTask>,
    /// `L(θ^(1)) − L(θ^⋆)` at the start of training.
    pub initial_gap: f64,
    /// `participation[t-1][n]`: scheduled dataset fraction of task n at
    /// round t.
    pub participation: Vec<Vec<f64>>,
    /// `fixed_point_mse[t-1][n]`: the recovery fixed point v⋆ of task n at
    /// round t.
    pub fixed_point_mse: Vec<Vec<f64>>,
}

/// Per-round output of [`theorem1_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRound {
    /// 1-based round index; `bound` caps `L(θ^(t+1)) − L(θ^⋆)`.
    pub round: usize,
    pub bound: f64,
    /// `max_n Υ_n` for this round.
    pub upsilon_max: f64,
    /// Whether the round contracts the gap (`upsilon_max < 1`).
    pub contracting: bool,
}

/// Per-round contraction factor `Υ = 1 − Ω/L + 2Ωβ₂Ψ/L`.
pub fn upsilon(task: &BoundTask, psi_value: f64) -> f64 {
    let ratio = task.strong_convexity / task.smoothness;
    1.0 - ratio + 2.0 * task.strong_convexity * task.beta2 * psi_value / task.smoothness
}

/// Upper-bound sequence on the total loss gap:
///
/// ```text
/// gap(t+1) ≤ initial_gap·Π_{t'=1}^{t} max_n Υ_n^(t') + Σ_n S_n(t)
/// S_n(t) = Υ_n^(t)·S_n(t−1) + C_n^(t),   S_n(0) = 0
/// C_n(t) = β₁Ψ_n^(t)/L + 3 d_n v⋆_n(t)/(2L)
/// ```
///
/// The gap contracts whenever every round's `max_n Υ_n < 1`, equivalently
/// `Ψ_n < 1/(2β₂)` for all tasks.
pub fn theorem1_bound(params: &BoundParams, horizon: usize) -> Result<Vec<BoundRound>> {
    if params.tasks.is_empty() {
        return Err(Error::EmptyInput("bound tasks"));
    }
    for task in &params.tasks {
        task.validate()?;
    }
    if params.initial_gap < 0.0 || !params.initial_gap.is_finite() {
        return Err(Error::invalid(format!(
            "initial gap must be non-negative, got {}",
            params.initial_gap
        )));
    }
    if horizon == 0 || params.participation.len() < horizon || params.fixed_point_mse.len() < horizon
    {
        return Err(Error::invalid(format!(
            "need per-round inputs for all {horizon} rounds, got {} participation and {} MSE rows",
            params.participation.len(),
            params.fixed_point_mse.len()
        )));
    }
    let n_tasks = params.tasks.len();
    let mut product = 1.0f64;
    let mut carried = vec![0.0f64; n_tasks];
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let parts = &params.participation[t - 1];
        let mses = &params.fixed_point_mse[t - 1];
        if parts.len() != n_tasks || mses.len() != n_tasks {
            return Err(Error::DimensionMismatch {
                context: "theorem1_bound per-round inputs",
                expected: n_tasks,
                got: parts.len().min(mses.len()),
            });
        }
        let mut ups_max = f64::NEG_INFINITY;
        for (n, task) in params.tasks.iter().enumerate() {
            if mses[n] < 0.0 {
                return Err(Error::invalid("fixed-point MSE must be non-negative"));
            }
            let psi_n = psi(task.sparsification_ratio, t, parts[n])?;
            let ups_n = upsilon(task, psi_n);
            ups_max = ups_max.max(ups_n);
            let c_n = task.beta1 * psi_n / task.smoothness
                + 1.5 * task.dim as f64 * mses[n] / task.smoothness;
            carried[n] = ups_n * carried[n] + c_n;
        }
        product *= ups_max;
        let bound = params.initial_gap * product + carried.iter().sum::<f64>();
        out.push(BoundRound {
            round: t,
            bound,
            upsilon_max: ups_max,
            contracting: ups_max < 1.0,
        });
    }
    Ok(out)
}

/// Per-round descent inequality on an L-smooth loss:
/// `L(θ^{t+1}) ≤ L(θ^t) − ‖∇L‖²/(2L) + ‖e‖²/(2L)`, checked with a relative
/// slack of 1e−9 to absorb floating-point evaluation noise.
pub fn lemma1_check(
    loss_t: f64,
    loss_next: f64,
    grad_norm_sq: f64,
    err_norm_sq: f64,
    smoothness: f64,
) -> Result<bool> {
    if !(smoothness > 0.0) || !smoothness.is_finite() {
        return Err(Error::invalid(format!(
            "smoothness must be positive, got {smoothness}"
        )));
    }
    let rhs = loss_t - grad_norm_sq / (2.0 * smoothness) + err_norm_sq / (2.0 * smoothness);
    let slack = 1e-9 * (1.0 + loss_t.abs() + rhs.abs());
    Ok(loss_next <= rhs + slack)
}

/// Closed-form caps on the sparsification and scheduling error energies at
/// round `t` under the per-sample gradient bound `‖∇l‖² ≤ β₁ + β₂‖∇L‖²`:
///
/// ```text
/// ‖e₁‖² ≤ ((2r − rᵗ − r^{t+1})/(1−r))²·(β₁ + β₂‖∇L‖²)
/// ‖e₂‖² ≤ 4·(1 − participation)²·(β₁ + β₂‖∇L‖²)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientErrorBounds {
    pub sparsification_sq: f64,
    pub scheduling_sq: f64,
}

pub fn appendix_error_bounds(
    r: f64,
    t: usize,
    participation: f64,
    grad_norm_sq: f64,
    beta1: f64,
    beta2: f64,
) -> Result<GradientErrorBounds> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "sparsification ratio must lie in [0, 1), got {r}"
        )));
    }
    if t == 0 {
        return Err(Error::invalid("round index must be at least 1"));
    }
    if !(0.0..=1.0).contains(&participation) {
        return Err(Error::invalid(format!(
            "participation must lie in [0, 1], got {participation}"
        )));
    }
    if beta1 < 0.0 || beta2 < 0.0 || grad_norm_sq < 0.0 {
        return Err(Error::invalid(
            "gradient bounds and norms must be non-negative",
        ));
    }
    let envelope = beta1 + beta2 * grad_norm_sq;
    let geometric = if r == 0.0 {
        0.0
    } else {
        (2.0 * r - r.powi(t as i32) - r.powi(t as i32 + 1)) / (1.0 - r)
    };
    Ok(GradientErrorBounds {
        sparsification_sq: geometric * geometric * envelope,
        scheduling_sq: 4.0 * (1.0 - participation).powi(2) * envelope,
    })
}

/// The three additive components of one task's aggregated-gradient error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    /// Sparsification: full average minus sparsified average (all devices).
    pub e1: Vec<f64>,
    /// Scheduling: sparsified average over all devices minus over the
    /// scheduled set.
    pub e2: Vec<f64>,
    /// Recovery: scheduled sparsified average minus the receiver estimate.
    pub e3: Vec<f64>,
    /// `full − recovered = e1 + e2 + e3`.
    pub total: Vec<f64>,
}

impl ErrorDecomposition {
    pub fn norms_sq(&self) -> [f64; 4] {
        [
            norm_sq(&self.e1),
            norm_sq(&self.e2),
            norm_sq(&self.e3),
            norm_sq(&self.total),
        ]
    }
}

/// Split one task's gradient error into sparsification, scheduling, and
/// recovery parts, verifying that the parts sum to the total and that the
/// quadratic triangle bound `‖total‖² ≤ 3(‖e₁‖² + ‖e₂‖² + ‖e₃‖²)` holds.
pub fn error_decomposition(
    full: &[f64],
    sparsified_avg: &[f64],
    scheduled_avg: &[f64],
    recovered: &[f64],
) -> Result<ErrorDecomposition> {
    let d = full.len();
    for (name, v) in [
        ("sparsified average", sparsified_avg),
        ("scheduled average", scheduled_avg),
        ("recovered", recovered),
    ] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                context: match name {
                    "sparsified average" => "error_decomposition sparsified average",
                    "scheduled average" => "error_decomposition scheduled average",
                    _ => "error_decomposition recovered",
                },
                expected: d,
                got: v.len(),
            });
        }
    }
    let e1: Vec<f64> = full
        .iter()
        .zip(sparsified_avg.iter())
        .map(|(a, b)| a - b)
        .collect();
    let e2: Vec<f64> = sparsified_avg
        .iter()
        .zip(scheduled_avg.iter())
        .map(|(a, b)| a - b)
        .collect();
    let e3: Vec<f64> = scheduled_avg
        .iter()
        .zip(recovered.iter())
        .map(|(a, b)| a - b)
        .collect();
    let total: Vec<f64> = full.iter().zip(recovered.iter()).map(|(a, b)| a - b).collect();
    let decomp = ErrorDecomposition { e1, e2, e3, total };
    let [n1, n2, n3, nt] = decomp.norms_sq();
    let cap = 3.0 * (n1 + n2 + n3);
    if nt > cap * (1.0 + 1e-9) + 1e-300 {
        return Err(Error::invalid(format!(
            "error decomposition violates the quadratic triangle bound: {nt} > 3*{}",
            n1 + n2 + n3
        )));
    }
    Ok(decomp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_prior_recursion_matches_hand_unrolled_values() {
        // One task, λ=1, v=1, d=4, rows=2, σ²=0.1. First step:
        // v_b = (4/2)(1 + 0.1) − 1 = 1.2; mmse = 1·1.2/2.2 = 6/11;
        // 1/v_a' = 11/6 − 1/1.2 = 1, so v_a stays at 1 — a fixed point.
        let cfg = SeConfig::new(
            vec![SeTask {
                dim: 4,
                prior: BgPrior::new(1.0, 1.0).unwrap(),
            }],
            2,
            0.1,
        )
        .unwrap();
        let out = state_evolution(&cfg).unwrap();
        assert!(out.converged);
        let first = out.trace[0];
        assert!((first.v_b_pri - 1.2).abs() < 1e-12);
        assert!((first.mmse - 6.0 / 11.0).abs() < 1e-12);
        assert!((out.fixed_point[0] - 6.0 / 11.0).abs() < 1e-10);
        for row in &out.trace {
            assert!((row.v_a_pri - 1.0).abs() < 1e-9, "v_a stays at 1");
        }
    }

    #[test]
    fn full_measurements_no_noise_drives_mse_to_zero() {
        let cfg = SeConfig::new(
            vec![SeTask {
                dim: 64,
                prior: BgPrior::new(0.5, 1.0).unwrap(),
            }],
            64,
            0.0,
        )
        .unwrap();
        let out = state_evolution(&cfg).unwrap();
        assert!(out.converged);
        assert!(out.fixed_point[0] <= 1e-11, "v* = {}", out.fixed_point[0]);
        assert!(!out.diverged);
    }

    #[test]
    fn noise_keeps_variances_positive() {
        let cfg = SeConfig::new(
            vec![
                SeTask {
                    dim: 128,
                    prior: BgPrior::new(0.3, 1.0).unwrap(),
                },
                SeTask {
                    dim: 128,
                    prior: BgPrior::new(0.4, 0.5).unwrap(),
                },
            ],
            96,
            1e-3,
        )
        .unwrap();
        let out = state_evolution(&cfg).unwrap();
        assert!(out.converged);
        for row in &out.trace {
            assert!(row.v_b_pri > 0.0);
        }
        for &v in &out.fixed_point {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn paper_ratio_doubles_the_effective_spread() {
        let mk = |paper_ratio: bool| {
            let mut cfg = SeConfig::new(
                vec![SeTask {
                    dim: 4,
                    prior: BgPrior::new(1.0, 1.0).unwrap(),
                }],
                2,
                0.1,
            )
            .unwrap();
            cfg.paper_ratio = paper_ratio;
            cfg.max_iters = 1;
            cfg.rel_tol = 0.0;
            state_evolution(&cfg).unwrap()
        };
        let standard = mk(false);
        let halved = mk(true);
        assert!((standard.trace[0].v_b_pri - 1.2).abs() < 1e-12);
        // ratio rows/(2d) = 1/4 → v_b = 4·1.1 − 1 = 3.4.
        assert!((halved.trace[0].v_b_pri - 3.4).abs() < 1e-12);
    }

    #[test]
    fn psi_plug_in_values() {
        assert_eq!(psi(0.0, 1, 1.0).unwrap(), 0.0);
        // r=0.5, large t, full participation → (3/2)(2r/(1−r))² = 6.
        let limit = psi(0.5, 400, 1.0).unwrap();
        assert!((limit - 6.0).abs() < 1e-9, "{limit}");
        // r=√0.9, t=3: direct evaluation of the closed form.
        let r: f64 = 0.9f64.sqrt();
        let geo = (2.0 * r - r.powi(3) - r.powi(4)) / (1.0 - r);
        let expect = 1.5 * geo * geo;
        assert!((psi(r, 3, 1.0).unwrap() - expect).abs() < 1e-12);
        assert!(psi(1.0, 1, 1.0).is_err());
        // Partial participation adds the scheduling term.
        let partial = psi(0.0, 1, 0.75).unwrap();
        assert!((partial - 1.5 * 0.25).abs() < 1e-12);
    }

    fn unit_task(beta1: f64, beta2: f64, r: f64) -> BoundTask {
        BoundTask {
            dim: 16,
            strong_convexity: 1.0,
            smoothness: 1.0,
            beta1,
            beta2,
            sparsification_ratio: r,
        }
    }

    #[test]
    fn perfect_communication_contracts_to_zero_in_one_round() {
        let params = BoundParams {
            tasks: vec![unit_task(0.0, 0.1, 0.0)],
            initial_gap: 5.0,
            participation: vec![vec![1.0]],
            fixed_point_mse: vec![vec![0.0]],
        };
        let out = theorem1_bound(&params, 1).unwrap();
        assert_eq!(out[0].bound, 0.0);
        assert_eq!(out[0].upsilon_max, 0.0);
        assert!(out[0].contracting);
    }

    #[test]
    fn one_round_bound_unrolls_explicitly() {
        let task = BoundTask {
            dim: 8,
            strong_convexity: 0.5,
            smoothness: 2.0,
            beta1: 0.3,
            beta2: 0.1,
            sparsification_ratio: 0.5,
        };
        let participation = 0.9;
        let v_star = 0.01;
        let params = BoundParams {
            tasks: vec![task],
            initial_gap: 3.0,
            participation: vec![vec![participation]],
            fixed_point_mse: vec![vec![v_star]],
        };
        let out = theorem1_bound(&params, 1).unwrap();
        let psi1 = psi(0.5, 1, participation).unwrap();
        let ups = 1.0 - 0.25 + 2.0 * 0.5 * 0.1 * psi1 / 2.0;
        let c = 0.3 * psi1 / 2.0 + 1.5 * 8.0 * v_star / 2.0;
        assert!((out[0].bound - (3.0 * ups + c)).abs() < 1e-12);
    }

    #[test]
    fn bound_is_monotone_in_the_fixed_point_mse() {
        let mk = |v: f64| {
            let params = BoundParams {
                tasks: vec![unit_task(0.1, 0.1, 0.3)],
                initial_gap: 1.0,
                participation: vec![vec![1.0]; 20],
                fixed_point_mse: vec![vec![v]; 20],
            };
            theorem1_bound(&params, 20).unwrap()
        };
        let low = mk(1e-4);
        let high = mk(2e-4);
        for (a, b) in low.iter().zip(high.iter()) {
            assert!(b.bound >= a.bound);
        }
    }

    #[test]
    fn contraction_flag_matches_the_psi_threshold() {
        // Υ < 1 ⟺ Ψ < 1/(2β₂).
        for &(r, beta2, participation) in &[
            (0.0f64, 0.1f64, 1.0f64),
            (0.5, 0.1, 1.0),
            (0.5, 0.2, 0.8),
            (0.9, 0.05, 0.95),
            (0.3, 2.0, 1.0),
        ] {
            for t in [1usize, 2, 5, 50] {
                let task = unit_task(0.0, beta2, r);
                let p = psi(r, t, participation).unwrap();
                let ups = upsilon(&task, p);
                assert_eq!(ups < 1.0, p < 1.0 / (2.0 * beta2), "r={r} t={t}");
            }
        }
    }

    #[test]
    fn lemma1_inequality_on_exact_descent() {
        // Quadratic ½θ² with L=1, η=1: θ'=θ−∇=0 from θ=1, loss 0.5 → 0.
        // RHS = 0.5 − 1/2 + 0 = 0: equality.
        assert!(lemma1_check(0.5, 0.0, 1.0, 0.0, 1.0).unwrap());
        // Large recovery error makes the inequality slack.
        assert!(lemma1_check(0.5, 0.4, 1.0, 100.0, 1.0).unwrap());
        // A genuine ascent with no error budget fails.
        assert!(!lemma1_check(0.5, 0.6, 1.0, 0.0, 1.0).unwrap());
        assert!(lemma1_check(0.5, 0.4, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn appendix_bounds_vanish_in_the_ideal_cases() {
        let full = appendix_error_bounds(0.0, 3, 1.0, 2.0, 0.5, 0.1).unwrap();
        assert_eq!(full.sparsification_sq, 0.0);
        assert_eq!(full.scheduling_sq, 0.0);
        let partial = appendix_error_bounds(0.0, 1, 0.5, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(partial.scheduling_sq, 4.0 * 0.25);
    }

    #[test]
    fn decomposition_sums_and_respects_the_triangle_bound() {
        let full = vec![1.0, -2.0, 3.0, 0.5];
        let sp = vec![0.9, -2.0, 2.5, 0.0];
        let sched = vec![0.8, -1.9, 2.5, 0.1];
        let rec = vec![0.7, -1.8, 2.4, 0.05];
        let d = error_decomposition(&full, &sp, &sched, &rec).unwrap();
        for i in 0..4 {
            let sum = d.e1[i] + d.e2[i] + d.e3[i];
            assert!((sum - d.total[i]).abs() < 1e-12);
        }
        let [n1, n2, n3, nt] = d.norms_sq();
        assert!(nt <= 3.0 * (n1 + n2 + n3) + 1e-12);
    }

    #[test]
    fn exact_recovery_leaves_only_the_sparsification_term() {
        let full = vec![1.0, 2.0];
        let sp = vec![0.5, 2.0];
        let d = error_decomposition(&full, &sp, &sp, &sp).unwrap();
        assert_eq!(d.e2, vec![0.0, 0.0]);
        assert_eq!(d.e3, vec![0.0, 0.0]);
        assert_eq!(d.e1, d.total);
    }
}

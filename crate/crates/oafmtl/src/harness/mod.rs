//! End-to-end federated training over the shared uplink.
//!
//! One global round: every device computes full-batch local gradients for
//! all tasks, runs the error-feedback sparsify/compress pipeline, and the
//! scheduled devices transmit. The receiver recovers per-task aggregated
//! gradients from the superposed observation and the server steps every
//! task's parameters. Four schemes are available on identical instances:
//!
//! - `oa_fmtl`: all tasks share one channel block, joint turbo recovery;
//! - `scheme1_tdm`: one channel block per task (N blocks per round),
//!   single-task recovery in each — no inter-task interference by
//!   construction, at N× the channel cost;
//! - `scheme2`: one shared block like `oa_fmtl`, but each task is
//!   recovered as if it were alone (interference ignored);
//! - `error_free`: the exact weighted gradient average bypasses the
//!   channel entirely (the ideal baseline).
//!
//! Seeding is derived per (stream, round) from one master seed, so paired
//! schemes see identical data, fading, and noise realizations.

pub mod data;
pub mod idx;
pub mod model;

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{error_decomposition, lemma1_check, state_evolution, SeConfig, SeTask};
use crate::channel::{
    draw_fading, effective_observation, transmit, ChannelRound, FadingModel, SigmaConvention,
};
use crate::error::{Error, Result};
use crate::prior::BgPrior;
use crate::receiver::{m_turbo_cs, scheme2_recover, PriorSpec, TurboOptions};
use crate::seeds::{derive_seed, Stream};
use crate::transform::{make_partial_dct, PartialOrthonormalOperator};
use crate::transmitter::{
    auto_gamma, channel_invert, device_compress, superpose_packed, CompressedDevice, DeviceState,
    GammaMode, PowerPolicy,
};
use crate::util::norm_sq;

pub use data::{make_synthetic, FederatedDataset, SyntheticTaskConfig};
pub use idx::{ingest_idx, load_idx_images, load_idx_labels, IdxImages};
pub use model::{global_step, LabeledSet, ModelKind, TaskData, TaskSpec};

/// Aggregation scheme run by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    OaFmtl,
    Scheme1Tdm,
    Scheme2,
    ErrorFree,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::OaFmtl,
        Scheme::Scheme1Tdm,
        Scheme::Scheme2,
        Scheme::ErrorFree,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::OaFmtl => "oa_fmtl",
            Scheme::Scheme1Tdm => "scheme1_tdm",
            Scheme::Scheme2 => "scheme2",
            Scheme::ErrorFree => "error_free",
        }
    }

    /// Channel blocks consumed per global round.
    pub fn channel_blocks(&self, n_tasks: usize) -> usize {
        match self {
            Scheme::OaFmtl | Scheme::Scheme2 => 1,
            Scheme::Scheme1Tdm => n_tasks,
            Scheme::ErrorFree => 0,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How the scheduling threshold ζ is chosen each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// A constant ζ.
    Fixed(f64),
    /// ζ = the given percentile (0–100, exclusive of 100) of this round's
    /// gain magnitudes; at least one device is always scheduled.
    Percentile(f64),
}

/// How the transmit scale γ is chosen each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    /// A constant (the power budget is reported, not enforced).
    Fixed(f64),
    /// Largest γ meeting the budget on every scheduled device (enforced).
    Auto,
}

/// Uplink configuration shared by all rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetup {
    pub fading: FadingModel,
    /// Complex noise power σ_w².
    pub noise_w_sq: f64,
    pub gamma: GammaPolicy,
    pub threshold: ThresholdRule,
    /// Per-device power budget P.
    pub power_budget: f64,
    pub sigma_convention: SigmaConvention,
}

impl ChannelSetup {
    pub fn validate(&self) -> Result<()> {
        if self.noise_w_sq < 0.0 || !self.noise_w_sq.is_finite() {
            return Err(Error::invalid(format!(
                "noise power must be non-negative, got {}",
                self.noise_w_sq
            )));
        }
        if !(self.power_budget > 0.0) || !self.power_budget.is_finite() {
            return Err(Error::invalid(format!(
                "power budget must be positive, got {}",
                self.power_budget
            )));
        }
        match self.gamma {
            GammaPolicy::Fixed(g) if !(g > 0.0) || !g.is_finite() => {
                return Err(Error::invalid(format!("fixed gamma must be positive, got {g}")));
            }
            _ => {}
        }
        match self.threshold {
            ThresholdRule::Fixed(z) if z < 0.0 || !z.is_finite() => {
                return Err(Error::invalid(format!(
                    "scheduling threshold must be non-negative, got {z}"
                )));
            }
            ThresholdRule::Percentile(q) if !(0.0..100.0).contains(&q) => {
                return Err(Error::invalid(format!(
                    "threshold percentile must lie in [0, 100), got {q}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Whether the receiver knows the per-task priors or estimates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// EM starting from each task's design sparsity `k_n/d_n`.
    Estimate,
    Known(Vec<BgPrior>),
}

/// Full training configuration (everything but the data).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub specs: Vec<TaskSpec>,
    /// Compressed length per task: 2s real measurements.
    pub rows: usize,
    pub channel: ChannelSetup,
    pub turbo: TurboOptions,
    pub prior_mode: PriorMode,
    /// Also run the state-evolution predictor each round and record its
    /// fixed point (used by the loss-bound evaluation).
    pub record_se_fixed_point: bool,
}

impl TrainSetup {
    pub fn validate(&self, dataset: &FederatedDataset) -> Result<()> {
        if self.specs.len() != dataset.tasks.len() {
            return Err(Error::DimensionMismatch {
                context: "task specs vs dataset tasks",
                expected: dataset.tasks.len(),
                got: self.specs.len(),
            });
        }
        for (spec, task) in self.specs.iter().zip(dataset.tasks.iter()) {
            spec.validate()?;
            if spec.dim != task.dim() {
                return Err(Error::DimensionMismatch {
                    context: "task spec dim vs data dim",
                    expected: task.dim(),
                    got: spec.dim,
                });
            }
        }
        if self.rows == 0 || self.rows % 2 != 0 {
            return Err(Error::invalid(format!(
                "rows must be a positive even number (2s real measurements), got {}",
                self.rows
            )));
        }
        if let Some(min_dim) = self.specs.iter().map(|s| s.dim).min() {
            if self.rows > min_dim {
                return Err(Error::invalid(format!(
                    "rows ({}) must not exceed the smallest task dimension ({min_dim})",
                    self.rows
                )));
            }
        }
        self.channel.validate()?;
        self.turbo.validate()?;
        if let PriorMode::Known(p) = &self.prior_mode {
            if p.len() != self.specs.len() {
                return Err(Error::DimensionMismatch {
                    context: "known priors vs tasks",
                    expected: self.specs.len(),
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    fn prior_spec(&self) -> PriorSpec {
        match &self.prior_mode {
            PriorMode::Known(p) => PriorSpec::Known(p.clone()),
            PriorMode::Estimate => PriorSpec::Estimate {
                init_sparsity: self
                    .specs
                    .iter()
                    .map(|s| s.top_k as f64 / s.dim as f64)
                    .collect(),
            },
        }
    }
}

/// Mutable training state carried across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub params: Vec<Vec<f64>>,
    pub devices: Vec<DeviceState>,
    /// 1-based index of the next round to run.
    pub next_round: usize,
}

/// Fresh all-zeros state for a setup/dataset pair.
pub fn init_state(setup: &TrainSetup, dataset: &FederatedDataset) -> Result<SystemState> {
    setup.validate(dataset)?;
    let dims = dataset.dims();
    let devices = (0..dataset.num_devices())
        .map(|m| DeviceState::new(m, &dims, dataset.device_sizes(m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemState {
        params: dims.iter().map(|&d| vec![0.0; d]).collect(),
        devices,
        next_round: 1,
    })
}

/// Per-task per-round measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRound {
    pub task: usize,
    /// Test accuracy (logistic) or loss gap to optimum (quadratic),
    /// evaluated after this round's update.
    pub test_metric: f64,
    /// Global training loss after the update.
    pub train_loss: f64,
    /// `‖∇L(θ^t)‖²` before the update.
    pub grad_norm_sq: f64,
    /// `‖ĝ − ∇L‖²`: total aggregated-gradient error.
    pub recovery_err_sq: f64,
    pub e1_sq: f64,
    pub e2_sq: f64,
    pub e3_sq: f64,
    /// Scheduled dataset fraction `Σ_{m∈M} K_nm / Σ_m K_nm`.
    pub participation: f64,
    /// Per-round descent-inequality diagnostic with L = 1/η.
    pub lemma1_ok: bool,
    /// Largest squared per-sample gradient norm this round (β₁ evidence).
    pub max_sample_grad_sq: f64,
    /// Prior in effect at the returned recovery iterate (None when the
    /// channel was not used).
    pub prior_sparsity: Option<f64>,
    pub prior_active_variance: Option<f64>,
    /// Predicted recovery MSE fixed point for this round's prior.
    pub se_fixed_point: Option<f64>,
    pub turbo_iterations: usize,
    pub turbo_converged: bool,
    /// `L(θ) − L(θ⋆)` after the update, when the optimum is known.
    pub optimum_gap: Option<f64>,
}

/// One round's full log entry.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub scheme: Scheme,
    pub scheduled_devices: usize,
    /// Channel blocks consumed by this round (0, 1, or N).
    pub channel_blocks: usize,
    /// Every transmission met the power budget.
    pub power_ok: bool,
    /// `accumulated == sparsified + next buffer` held exactly on every
    /// device and task.
    pub error_feedback_ok: bool,
    /// Not part of any exported CSV (outputs stay byte-reproducible).
    #[serde(skip)]
    pub wall_clock_secs: f64,
    pub tasks: Vec<TaskRound>,
}

/// Equality covers the deterministic payload; wall-clock time is excluded.
impl PartialEq for RoundRecord {
    fn eq(&self, other: &Self) -> bool {
        self.round == other.round
            && self.scheme == other.scheme
            && self.scheduled_devices == other.scheduled_devices
            && self.channel_blocks == other.channel_blocks
            && self.power_ok == other.power_ok
            && self.error_feedback_ok == other.error_feedback_ok
            && self.tasks == other.tasks
    }
}

/// Per-task constants measured over a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskConstants {
    pub smoothness: f64,
    pub strong_convexity: f64,
    /// `(1 + 1e−9) ×` the largest per-sample squared gradient norm seen on
    /// the trajectory: an honest β₁ for the gradient envelope.
    pub beta1_observed: f64,
    pub sparsification_ratio: f64,
}

/// A completed training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub scheme: Scheme,
    pub records: Vec<RoundRecord>,
    pub constants: Vec<TaskConstants>,
    /// Global loss per task at the initial parameters.
    pub initial_loss: Vec<f64>,
    pub final_params: Vec<Vec<f64>>,
}

fn resolve_threshold(rule: ThresholdRule, gains: &[Complex64]) -> f64 {
    match rule {
        ThresholdRule::Fixed(z) => z,
        ThresholdRule::Percentile(q) => {
            let mut mags: Vec<f64> = gains.iter().map(|h| h.norm()).collect();
            mags.sort_by(f64::total_cmp);
            let idx = ((q / 100.0) * mags.len() as f64).floor() as usize;
            mags[idx.min(mags.len() - 1)]
        }
    }
}

/// Weighted averages of per-device vectors: all devices, and the scheduled
/// subset (zeros when the subset is empty or weightless).
fn weighted_averages(
    vectors: &[&Vec<f64>],
    weights: &[u64],
    scheduled: &[bool],
) -> (Vec<f64>, Vec<f64>, f64) {
    let dim = vectors[0].len();
    let mut full = vec![0.0; dim];
    let mut sched = vec![0.0; dim];
    let mut w_full = 0.0;
    let mut w_sched = 0.0;
    for ((v, &w), &on) in vectors.iter().zip(weights.iter()).zip(scheduled.iter()) {
        let w = w as f64;
        w_full += w;
        for (acc, &x) in full.iter_mut().zip(v.iter()) {
            *acc += w * x;
        }
        if on {
            w_sched += w;
            for (acc, &x) in sched.iter_mut().zip(v.iter()) {
                *acc += w * x;
            }
        }
    }
    if w_full > 0.0 {
        full.iter_mut().for_each(|x| *x /= w_full);
    }
    if w_sched > 0.0 {
        sched.iter_mut().for_each(|x| *x /= w_sched);
    } else {
        sched.iter_mut().for_each(|x| *x = 0.0);
    }
    let participation = if w_full > 0.0 { w_sched / w_full } else { 0.0 };
    (full, sched, participation)
}

struct RecoveryOutcome {
    estimates: Vec<Vec<f64>>,
    priors: Vec<Option<BgPrior>>,
    iterations: Vec<usize>,
    converged: Vec<bool>,
    noise_vars: Vec<f64>,
    power_ok: bool,
}

/// Run the uplink for one round of a channel-using scheme: superpose (per
/// block), transmit, and recover every task's aggregated gradient.
#[allow(clippy::too_many_arguments)]
fn run_uplink(
    setup: &TrainSetup,
    scheme: Scheme,
    compressed: &[CompressedDevice],
    ops: &[PartialOrthonormalOperator],
    gains: &[Complex64],
    zeta: f64,
    dataset: &FederatedDataset,
    master_seed: u64,
    round: usize,
) -> Result<RecoveryOutcome> {
    let n_tasks = setup.specs.len();
    let m_devices = gains.len();
    let prior_spec = setup.prior_spec();
    let blocks: Vec<Vec<usize>> = match scheme {
        Scheme::OaFmtl | Scheme::Scheme2 => vec![(0..n_tasks).collect()],
        Scheme::Scheme1Tdm => (0..n_tasks).map(|n| vec![n]).collect(),
        Scheme::ErrorFree => unreachable!("error_free does not use the channel"),
    };
    let mut estimates: Vec<Vec<f64>> = setup.specs.iter().map(|s| vec![0.0; s.dim]).collect();
    let mut priors: Vec<Option<BgPrior>> = vec![None; n_tasks];
    let mut iterations = vec![0usize; n_tasks];
    let mut converged = vec![true; n_tasks];
    let mut noise_vars = vec![0.0f64; n_tasks];
    let mut power_ok = true;

    for (b, block_tasks) in blocks.iter().enumerate() {
        let noise_seed = derive_seed(
            master_seed,
            Stream::Noise,
            (round as u64) * n_tasks as u64 + b as u64,
        );
        let channel = ChannelRound::new(
            gains.to_vec(),
            setup.channel.noise_w_sq.sqrt(),
            zeta,
            noise_seed,
        )?;
        if channel.scheduled.is_empty() {
            // Nothing transmits; estimates for this block stay zero.
            continue;
        }
        let x_tildes: Vec<Vec<Complex64>> = compressed
            .iter()
            .map(|c| superpose_packed(c, block_tasks))
            .collect::<Result<Vec<_>>>()?;
        let gamma = match setup.channel.gamma {
            GammaPolicy::Fixed(g) => g,
            GammaPolicy::Auto => auto_gamma(
                setup.channel.power_budget,
                channel.scheduled.iter().map(|&m| {
                    (
                        gains[m].norm(),
                        x_tildes[m].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
                    )
                }),
            )?,
        };
        let policy = PowerPolicy {
            budget: setup.channel.power_budget,
            gamma,
            threshold: zeta,
            mode: match setup.channel.gamma {
                GammaPolicy::Fixed(_) => GammaMode::Fixed,
                GammaPolicy::Auto => GammaMode::Auto,
            },
        };
        let mut signals = Vec::with_capacity(m_devices);
        for m in 0..m_devices {
            let inv = channel_invert(&x_tildes[m], gains[m], &policy)?;
            power_ok &= inv.within_budget;
            signals.push(inv.signal);
        }
        let received = transmit(&signals, &channel)?;
        let block_sizes: Vec<Vec<u64>> = (0..m_devices)
            .map(|m| {
                block_tasks
                    .iter()
                    .map(|&n| dataset.tasks[n].device_count(m))
                    .collect()
            })
            .collect();
        let obs = effective_observation(
            &received,
            &channel,
            gamma,
            &block_sizes,
            setup.channel.sigma_convention,
        )?;
        for &n in block_tasks {
            noise_vars[n] = obs.noise_var;
        }
        match scheme {
            Scheme::OaFmtl => {
                let out = m_turbo_cs(&obs, ops, &prior_spec, &setup.turbo)?;
                for (n, est) in out.estimates.into_iter().enumerate() {
                    estimates[n] = est;
                    priors[n] = Some(out.priors[n].clone());
                    iterations[n] = out.iterations;
                    converged[n] = out.converged;
                }
            }
            Scheme::Scheme2 => {
                let outs = scheme2_recover(&obs, ops, &prior_spec, &setup.turbo)?;
                for (n, out) in outs.into_iter().enumerate() {
                    estimates[n] = out.estimates.into_iter().next().expect("single task");
                    priors[n] = Some(out.priors[0].clone());
                    iterations[n] = out.iterations;
                    converged[n] = out.converged;
                }
            }
            Scheme::Scheme1Tdm => {
                let n = block_tasks[0];
                let out = m_turbo_cs(
                    &obs,
                    std::slice::from_ref(&ops[n]),
                    &prior_spec.select(n),
                    &setup.turbo,
                )?;
                estimates[n] = out.estimates.into_iter().next().expect("single task");
                priors[n] = Some(out.priors[0].clone());
                iterations[n] = out.iterations;
                converged[n] = out.converged;
            }
            Scheme::ErrorFree => unreachable!(),
        }
    }
    Ok(RecoveryOutcome {
        estimates,
        priors,
        iterations,
        converged,
        noise_vars,
        power_ok,
    })
}

/// Execute one global round under `scheme`, advancing `state` in place.
pub fn run_round(
    setup: &TrainSetup,
    dataset: &FederatedDataset,
    ops: &[PartialOrthonormalOperator],
    state: &mut SystemState,
    scheme: Scheme,
    master_seed: u64,
) -> Result<RoundRecord> {
    let start = Instant::now();
    let round = state.next_round;
    state.next_round += 1;
    let n_tasks = setup.specs.len();
    let m_devices = dataset.num_devices();
    let top_k: Vec<usize> = setup.specs.iter().map(|s| s.top_k).collect();

    // Local full-batch gradients, one per (device, task).
    let mut grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m_devices);
    for m in 0..m_devices {
        let per_task = (0..n_tasks)
            .map(|n| dataset.tasks[n].local_gradient(m, &state.params[n]))
            .collect::<Result<Vec<_>>>()?;
        grads.push(per_task);
    }

    let mut loss_before = Vec::with_capacity(n_tasks);
    let mut grad_norm_sq = Vec::with_capacity(n_tasks);
    let mut max_sample_grad_sq = Vec::with_capacity(n_tasks);
    let mut full_avgs: Vec<Vec<f64>> = Vec::with_capacity(n_tasks);
    for n in 0..n_tasks {
        let weights: Vec<u64> = (0..m_devices)
            .map(|m| dataset.tasks[n].device_count(m))
            .collect();
        let vectors: Vec<&Vec<f64>> = grads.iter().map(|g| &g[n]).collect();
        let (full, _, _) = weighted_averages(&vectors, &weights, &vec![false; m_devices]);
        full_avgs.push(full);
        loss_before.push(dataset.tasks[n].global_loss(&state.params[n])?);
        grad_norm_sq.push(norm_sq(&full_avgs[n]));
        max_sample_grad_sq.push(dataset.tasks[n].max_sample_grad_sq(&state.params[n])?);
    }

    let (estimates, sp_avgs, sched_avgs, participations, outcome, scheduled_count, ef_ok);
    match scheme {
        Scheme::ErrorFree => {
            estimates = full_avgs.clone();
            sp_avgs = full_avgs.clone();
            sched_avgs = full_avgs.clone();
            participations = vec![1.0; n_tasks];
            outcome = None;
            scheduled_count = m_devices;
            ef_ok = true;
        }
        _ => {
            let gains = draw_fading(
                m_devices,
                setup.channel.fading,
                derive_seed(master_seed, Stream::Fading, round as u64),
            )?;
            let zeta = resolve_threshold(setup.channel.threshold, &gains);
            let scheduled_flags: Vec<bool> = gains.iter().map(|h| h.norm() >= zeta).collect();
            scheduled_count = scheduled_flags.iter().filter(|&&on| on).count();

            // Error-feedback pipeline: buffers advance for every device,
            // scheduled or not.
            let mut compressed = Vec::with_capacity(m_devices);
            let mut all_ef_ok = true;
            for m in 0..m_devices {
                let before = state.devices[m].clone();
                let comp = device_compress(&grads[m], &before, ops, &top_k)?;
                for n in 0..n_tasks {
                    for i in 0..setup.specs[n].dim {
                        let acc = grads[m][n][i] + before.buffers[n][i];
                        let resum = comp.sparsified[n][i] + comp.state.buffers[n][i];
                        if resum != acc {
                            all_ef_ok = false;
                        }
                    }
                }
                state.devices[m] = comp.state.clone();
                compressed.push(comp);
            }
            ef_ok = all_ef_ok;

            let uplink = run_uplink(
                setup,
                scheme,
                &compressed,
                ops,
                &gains,
                zeta,
                dataset,
                master_seed,
                round,
            )?;

            let mut sp = Vec::with_capacity(n_tasks);
            let mut sched = Vec::with_capacity(n_tasks);
            let mut parts = Vec::with_capacity(n_tasks);
            for n in 0..n_tasks {
                let weights: Vec<u64> = (0..m_devices)
                    .map(|m| dataset.tasks[n].device_count(m))
                    .collect();
                let vectors: Vec<&Vec<f64>> =
                    compressed.iter().map(|c| &c.sparsified[n]).collect();
                let (full_sp, sched_sp, part) =
                    weighted_averages(&vectors, &weights, &scheduled_flags);
                sp.push(full_sp);
                sched.push(sched_sp);
                parts.push(part);
            }
            estimates = uplink.estimates.clone();
            sp_avgs = sp;
            sched_avgs = sched;
            participations = parts;
            outcome = Some(uplink);
        }
    }

    // Decompose errors, step parameters, and evaluate.
    let mut tasks = Vec::with_capacity(n_tasks);
    for n in 0..n_tasks {
        let decomp =
            error_decomposition(&full_avgs[n], &sp_avgs[n], &sched_avgs[n], &estimates[n])?;
        let [e1_sq, e2_sq, e3_sq, recovery_err_sq] = decomp.norms_sq();

        let se_fixed_point = match (&outcome, setup.record_se_fixed_point, scheme) {
            (Some(out), true, Scheme::OaFmtl) => {
                if let Some(prior) = &out.priors[n] {
                    // Joint prediction over all tasks sharing the block.
                    let se_tasks: Vec<SeTask> = (0..n_tasks)
                        .map(|k| SeTask {
                            dim: setup.specs[k].dim,
                            prior: out.priors[k]
                                .clone()
                                .unwrap_or_else(|| prior.clone()),
                        })
                        .collect();
                    let cfg = SeConfig {
                        paper_ratio: setup.turbo.paper_ratio,
                        var_floor: setup.turbo.var_floor,
                        var_ceil: setup.turbo.var_ceil,
                        ..SeConfig::new(se_tasks, setup.rows, out.noise_vars[n])?
                    };
                    Some(state_evolution(&cfg)?.fixed_point[n])
                } else {
                    None
                }
            }
            (Some(out), true, Scheme::Scheme1Tdm) => {
                if let Some(prior) = &out.priors[n] {
                    let cfg = SeConfig::new(
                        vec![SeTask {
                            dim: setup.specs[n].dim,
                            prior: prior.clone(),
                        }],
                        setup.rows,
                        out.noise_vars[n],
                    )?;
                    Some(state_evolution(&cfg)?.fixed_point[0])
                } else {
                    None
                }
            }
            _ => None,
        };

        global_step(
            &mut state.params[n],
            &estimates[n],
            setup.specs[n].learning_rate,
        )?;
        let train_loss = dataset.tasks[n].global_loss(&state.params[n])?;
        let test_metric = dataset.tasks[n].test_metric(&state.params[n])?;
        let optimum_gap = dataset.tasks[n].optimum_gap(&state.params[n])?;
        let lemma1_ok = lemma1_check(
            loss_before[n],
            train_loss,
            grad_norm_sq[n],
            recovery_err_sq,
            1.0 / setup.specs[n].learning_rate,
        )?;
        let (prior_sparsity, prior_active_variance) = match &outcome {
            Some(out) => match &out.priors[n] {
                Some(p) => (Some(p.sparsity()), Some(p.active_variance())),
                None => (None, None),
            },
            None => (None, None),
        };
        tasks.push(TaskRound {
            task: n,
            test_metric,
            train_loss,
            grad_norm_sq: grad_norm_sq[n],
            recovery_err_sq,
            e1_sq,
            e2_sq,
            e3_sq,
            participation: participations[n],
            lemma1_ok,
            max_sample_grad_sq: max_sample_grad_sq[n],
            prior_sparsity,
            prior_active_variance,
            se_fixed_point,
            turbo_iterations: outcome.as_ref().map_or(0, |o| o.iterations[n]),
            turbo_converged: outcome.as_ref().map_or(true, |o| o.converged[n]),
            optimum_gap,
        });
    }

    Ok(RoundRecord {
        round,
        scheme,
        scheduled_devices: scheduled_count,
        channel_blocks: scheme.channel_blocks(n_tasks),
        power_ok: outcome.as_ref().map_or(true, |o| o.power_ok),
        error_feedback_ok: ef_ok,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        tasks,
    })
}

/// Run `rounds` global rounds from a fresh state; fully deterministic in
/// `(setup, dataset, scheme, master_seed)`.
pub fn run_training(
    setup: &TrainSetup,
    dataset: &FederatedDataset,
    scheme: Scheme,
    rounds: usize,
    master_seed: u64,
) -> Result<TrainRun> {
    setup.validate(dataset)?;
    let ops = setup
        .specs
        .iter()
        .enumerate()
        .map(|(n, spec)| {
            make_partial_dct(
                spec.dim,
                setup.rows,
                derive_seed(master_seed, Stream::Operator, n as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = init_state(setup, dataset)?;
    let initial_loss = dataset
        .tasks
        .iter()
        .zip(state.params.iter())
        .map(|(t, p)| t.global_loss(p))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        records.push(run_round(
            setup,
            dataset,
            &ops,
            &mut state,
            scheme,
            master_seed,
        )?);
    }
    let constants = setup
        .specs
        .iter()
        .enumerate()
        .map(|(n, spec)| {
            let beta1 = records
                .iter()
                .map(|r| r.tasks[n].max_sample_grad_sq)
                .fold(0.0f64, f64::max)
                * (1.0 + 1e-9);
            Ok(TaskConstants {
                smoothness: dataset.tasks[n].smoothness()?,
                strong_convexity: dataset.tasks[n].strong_convexity()?,
                beta1_observed: beta1,
                sparsification_ratio: crate::analysis::sparsification_ratio(
                    spec.dim, spec.top_k,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainRun {
        scheme,
        records,
        constants,
        initial_loss,
        final_params: state.params,
    })
}

/// Outcome of a time-to-target query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TStar {
    /// Channel blocks needed to bring every task to its target.
    Reached(usize),
    /// Some task never met the target within the horizon.
    Unreached,
}

impl TStar {
    pub fn blocks(&self) -> Option<usize> {
        match self {
            TStar::Reached(t) => Some(*t),
            TStar::Unreached => None,
        }
    }
}

/// First 1-based round at which `curve` reaches `target`.
pub fn t_star_task(curve: &[f64], target: f64) -> TStar {
    curve
        .iter()
        .position(|&v| v >= target)
        .map(|i| TStar::Reached(i + 1))
        .unwrap_or(TStar::Unreached)
}

/// Channel blocks until all tasks reach `ξ × ξ_max`: the slowest task for
/// schemes whose tasks share each block, the sum of per-task times for
/// time-division (each task's rounds occupy their own blocks).
pub fn t_star(
    curves: &[Vec<f64>],
    xi: f64,
    xi_max: &[f64],
    scheme: Scheme,
) -> Result<TStar> {
    if curves.is_empty() || curves.len() != xi_max.len() {
        return Err(Error::DimensionMismatch {
            context: "t_star curves vs targets",
            expected: curves.len(),
            got: xi_max.len(),
        });
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::invalid(format!("xi must lie in (0, 1], got {xi}")));
    }
    let mut per_task = Vec::with_capacity(curves.len());
    for (curve, &m) in curves.iter().zip(xi_max.iter()) {
        match t_star_task(curve, xi * m) {
            TStar::Reached(t) => per_task.push(t),
            TStar::Unreached => return Ok(TStar::Unreached),
        }
    }
    Ok(TStar::Reached(match scheme {
        Scheme::Scheme1Tdm => per_task.iter().sum(),
        _ => per_task.iter().copied().max().expect("nonempty"),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::dist_sq;

    fn quadratic_setup(
        dim: usize,
        top_k: usize,
        rows: usize,
        learning_rate: f64,
    ) -> (TrainSetup, FederatedDataset) {
        let cfg = SyntheticTaskConfig {
            dim,
            curvature_min: 1.0,
            curvature_max: 1.0,
            ..SyntheticTaskConfig::default()
        };
        let data = make_synthetic(&cfg, 4, 5, 0, 77).unwrap();
        let dataset = FederatedDataset::new(vec![data]).unwrap();
        let setup = TrainSetup {
            specs: vec![TaskSpec {
                task_id: 0,
                dim,
                top_k,
                model: ModelKind::Quadratic,
                regularization: 0.0,
                learning_rate,
            }],
            rows,
            channel: ChannelSetup {
                fading: FadingModel::Unit,
                noise_w_sq: 0.0,
                gamma: GammaPolicy::Fixed(1.0),
                threshold: ThresholdRule::Fixed(0.0),
                power_budget: 1e12,
                sigma_convention: SigmaConvention::Derived,
            },
            turbo: TurboOptions::default(),
            prior_mode: PriorMode::Estimate,
            record_se_fixed_point: false,
        };
        (setup, dataset)
    }

    #[test]
    fn error_free_descends_at_the_exact_quadratic_rate() {
        // Isotropic curvature: gap contracts by (1 − ηΩ)² every round.
        let (setup, dataset) = quadratic_setup(16, 16, 16, 0.25);
        let run = run_training(&setup, &dataset, Scheme::ErrorFree, 10, 3).unwrap();
        let mut prev_gap: Option<f64> = None;
        for rec in &run.records {
            let gap = rec.tasks[0].optimum_gap.unwrap();
            if let Some(p) = prev_gap {
                let ratio = gap / p;
                assert!(
                    (ratio - 0.5625f64).abs() < 1e-6,
                    "contraction ratio {ratio}"
                );
            }
            assert!(rec.tasks[0].lemma1_ok);
            assert!(rec.error_feedback_ok && rec.power_ok);
            prev_gap = Some(gap);
        }
        assert_eq!(run.records[0].channel_blocks, 0);
    }

    #[test]
    fn lossless_uplink_matches_error_free_trajectory() {
        // k = d, rows = d, no noise, unit gains: the channel path must
        // reproduce the ideal update to numerical precision.
        let (setup, dataset) = quadratic_setup(64, 64, 64, 0.25);
        let ideal = run_training(&setup, &dataset, Scheme::ErrorFree, 15, 9).unwrap();
        let aired = run_training(&setup, &dataset, Scheme::OaFmtl, 15, 9).unwrap();
        for (a, b) in ideal.records.iter().zip(aired.records.iter()) {
            assert!(
                (a.tasks[0].train_loss - b.tasks[0].train_loss).abs() < 1e-10,
                "round {}: {} vs {}",
                a.round,
                a.tasks[0].train_loss,
                b.tasks[0].train_loss
            );
        }
        let err = dist_sq(&ideal.final_params[0], &aired.final_params[0]);
        assert!(err < 1e-16, "parameter divergence {err}");
        assert!(aired.records.iter().all(|r| r.error_feedback_ok));
    }

    #[test]
    fn same_seed_reruns_identically() {
        let (mut setup, dataset) = quadratic_setup(32, 8, 16, 0.1);
        setup.channel.fading = FadingModel::Rayleigh;
        setup.channel.threshold = ThresholdRule::Percentile(25.0);
        setup.channel.noise_w_sq = 1e-6;
        let a = run_training(&setup, &dataset, Scheme::OaFmtl, 8, 42).unwrap();
        let b = run_training(&setup, &dataset, Scheme::OaFmtl, 8, 42).unwrap();
        assert_eq!(a.records, b.records);
        let c = run_training(&setup, &dataset, Scheme::OaFmtl, 8, 43).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn sparsified_fading_run_keeps_the_books_straight() {
        let (mut setup, dataset) = quadratic_setup(32, 8, 16, 0.1);
        setup.channel.fading = FadingModel::Rayleigh;
        setup.channel.threshold = ThresholdRule::Percentile(50.0);
        setup.channel.gamma = GammaPolicy::Auto;
        setup.channel.power_budget = 0.1;
        setup.channel.noise_w_sq = 1e-9;
        let run = run_training(&setup, &dataset, Scheme::OaFmtl, 6, 5).unwrap();
        for rec in &run.records {
            assert!(rec.error_feedback_ok, "round {}", rec.round);
            assert!(rec.power_ok, "round {}", rec.round);
            assert!(rec.scheduled_devices >= 1);
            let t = &rec.tasks[0];
            assert!(t.participation > 0.0 && t.participation <= 1.0);
            // e1+e2+e3 decomposition norms are consistent with the total.
            assert!(t.recovery_err_sq <= 3.0 * (t.e1_sq + t.e2_sq + t.e3_sq) + 1e-12);
        }
    }

    #[test]
    fn tdm_consumes_one_block_per_task() {
        let cfg = SyntheticTaskConfig {
            dim: 16,
            ..SyntheticTaskConfig::default()
        };
        let t0 = make_synthetic(&cfg, 3, 4, 0, 1).unwrap();
        let t1 = make_synthetic(&cfg, 3, 4, 0, 2).unwrap();
        let dataset = FederatedDataset::new(vec![t0, t1]).unwrap();
        let setup = TrainSetup {
            specs: (0..2)
                .map(|task_id| TaskSpec {
                    task_id,
                    dim: 16,
                    top_k: 4,
                    model: ModelKind::Quadratic,
                    regularization: 0.0,
                    learning_rate: 0.1,
                })
                .collect(),
            rows: 12,
            channel: ChannelSetup {
                fading: FadingModel::Unit,
                noise_w_sq: 1e-8,
                gamma: GammaPolicy::Fixed(1.0),
                threshold: ThresholdRule::Fixed(0.0),
                power_budget: 1e12,
                sigma_convention: SigmaConvention::Derived,
            },
            turbo: TurboOptions::default(),
            prior_mode: PriorMode::Estimate,
            record_se_fixed_point: false,
        };
        let tdm = run_training(&setup, &dataset, Scheme::Scheme1Tdm, 3, 7).unwrap();
        assert!(tdm.records.iter().all(|r| r.channel_blocks == 2));
        let joint = run_training(&setup, &dataset, Scheme::OaFmtl, 3, 7).unwrap();
        assert!(joint.records.iter().all(|r| r.channel_blocks == 1));
    }

    #[test]
    fn t_star_combination_rules() {
        let curves = vec![
            vec![0.2, 0.5, 0.8, 0.9, 0.9],
            vec![0.1, 0.3, 0.5, 0.7, 0.9],
        ];
        let xi_max = vec![0.9, 0.9];
        // Task 1 hits 0.81 at round 4; task 2 at round 5.
        assert_eq!(
            t_star(&curves, 0.9, &xi_max, Scheme::OaFmtl).unwrap(),
            TStar::Reached(5)
        );
        assert_eq!(
            t_star(&curves, 0.9, &xi_max, Scheme::Scheme1Tdm).unwrap(),
            TStar::Reached(9)
        );
        // Targets reached immediately: 1 for concurrent, N for TDM.
        assert_eq!(
            t_star(&curves, 0.2, &[1.0, 0.5], Scheme::OaFmtl).unwrap(),
            TStar::Reached(1)
        );
        assert_eq!(
            t_star(&curves, 0.2, &[1.0, 0.5], Scheme::Scheme1Tdm).unwrap(),
            TStar::Reached(2)
        );
        assert_eq!(
            t_star(&curves, 1.0, &[2.0, 2.0], Scheme::OaFmtl).unwrap(),
            TStar::Unreached
        );
        assert!(t_star(&curves, 0.0, &xi_max, Scheme::OaFmtl).is_err());
    }

    #[test]
    fn unscheduled_round_leaves_parameters_untouched() {
        let (mut setup, dataset) = quadratic_setup(16, 4, 8, 0.1);
        // Impossible fixed threshold: nobody schedules.
        setup.channel.threshold = ThresholdRule::Fixed(10.0);
        let run = run_training(&setup, &dataset, Scheme::OaFmtl, 2, 11).unwrap();
        for rec in &run.records {
            assert_eq!(rec.scheduled_devices, 0);
            assert_eq!(rec.tasks[0].participation, 0.0);
            // Estimates are zero, so the update is a no-op...
            let t = &rec.tasks[0];
            assert!(
                (t.recovery_err_sq - t.grad_norm_sq).abs()
                    <= 1e-12 * t.grad_norm_sq.max(1.0)
            );
        }
        // ...but error feedback still accumulates device-side.
        assert!(run.records.iter().all(|r| r.error_feedback_ok));
    }
}

//! Run configuration: TOML schema, validation, flag overrides, and
//! conversion into library types.
//!
//! Every field is validated before any work starts; errors name the field
//! they refer to. CLI flags override file values; the `OAFMTL_OUT_DIR`
//! environment variable overrides the configured output directory (and is
//! itself overridden by `--out`).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oafmtl::channel::{FadingModel, SigmaConvention};
use oafmtl::harness::{
    ChannelSetup, GammaPolicy, ModelKind, PriorMode, Scheme, TaskSpec, ThresholdRule, TrainSetup,
};
use oafmtl::prior::BgPrior;
use oafmtl::receiver::{TurboOptions, VarInit};

use crate::RunArgs;

pub const OUT_DIR_ENV: &str = "OAFMTL_OUT_DIR";

fn default_rounds() -> usize {
    60
}
fn default_out_dir() -> String {
    "oafmtl-out".to_string()
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_tstar_xi() -> Vec<f64> {
    vec![0.8, 0.85, 0.9, 0.95, 1.0]
}

/// Which scheme(s) a training run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SchemeChoice {
    All,
    OaFmtl,
    Scheme1Tdm,
    Scheme2,
    ErrorFree,
}

impl Default for SchemeChoice {
    fn default() -> Self {
        SchemeChoice::All
    }
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::All => Scheme::ALL.to_vec(),
            SchemeChoice::OaFmtl => vec![Scheme::OaFmtl],
            SchemeChoice::Scheme1Tdm => vec![Scheme::Scheme1Tdm],
            SchemeChoice::Scheme2 => vec![Scheme::Scheme2],
            SchemeChoice::ErrorFree => vec![Scheme::ErrorFree],
        }
    }

    pub fn single(self) -> Option<Scheme> {
        match self.schemes().as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }
}

/// How the transmit scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaConfig {
    Auto,
    Fixed { value: f64 },
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig::Auto
    }
}

impl GammaConfig {
    fn to_policy(self) -> Result<GammaPolicy> {
        match self {
            GammaConfig::Auto => Ok(GammaPolicy::Auto),
            GammaConfig::Fixed { value } => {
                if !(value > 0.0) || !value.is_finite() {
                    bail!("channel.gamma.value: must be positive, got {value}");
                }
                Ok(GammaPolicy::Fixed(value))
            }
        }
    }
}

/// How the scheduling threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdConfig {
    Fixed { value: f64 },
    Percentile { value: f64 },
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig::Fixed { value: 0.0 }
    }
}

impl ThresholdConfig {
    fn to_rule(self) -> Result<ThresholdRule> {
        match self {
            ThresholdConfig::Fixed { value } => {
                if value < 0.0 || !value.is_finite() {
                    bail!("channel.threshold.value: must be non-negative, got {value}");
                }
                Ok(ThresholdRule::Fixed(value))
            }
            ThresholdConfig::Percentile { value } => {
                if !(0.0..100.0).contains(&value) {
                    bail!("channel.threshold.value: percentile must lie in [0, 100), got {value}");
                }
                Ok(ThresholdRule::Percentile(value))
            }
        }
    }
}

fn default_noise_w_sq() -> f64 {
    0.1
}
fn default_power_budget() -> f64 {
    0.1
}

/// Uplink knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub fading: FadingModel,
    /// Complex noise power σ_w².
    pub noise_w_sq: f64,
    /// Per-device power budget P.
    pub power_budget: f64,
    pub gamma: GammaConfig,
    pub threshold: ThresholdConfig,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            fading: FadingModel::Unit,
            noise_w_sq: default_noise_w_sq(),
            power_budget: default_power_budget(),
            gamma: GammaConfig::default(),
            threshold: ThresholdConfig::default(),
        }
    }
}

/// Receiver loop knobs (mirrors the library's options; the measurement
/// ratio switch lives at the top level next to the noise convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurboConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub var_floor: f64,
    pub var_ceil: f64,
    pub em_enabled: bool,
    pub var_init: VarInit,
}

impl Default for TurboConfig {
    fn default() -> Self {
        let d = TurboOptions::default();
        TurboConfig {
            max_iters: d.max_iters,
            rel_tol: d.rel_tol,
            var_floor: d.var_floor,
            var_ceil: d.var_ceil,
            em_enabled: d.em_enabled,
            var_init: d.var_init,
        }
    }
}

impl TurboConfig {
    pub fn to_options(self, paper_ratio: bool) -> TurboOptions {
        TurboOptions {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            var_floor: self.var_floor,
            var_ceil: self.var_ceil,
            em_enabled: self.em_enabled,
            paper_ratio,
            var_init: self.var_init,
        }
    }
}

/// A task's prior: known parameters or estimated on the fly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorConfig {
    Keyword(PriorKeyword),
    Known(BgPrior),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKeyword {
    Estimate,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Keyword(PriorKeyword::Estimate)
    }
}

fn default_regularization() -> f64 {
    1e-3
}

/// One task's model and compression knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub dim: usize,
    pub top_k: usize,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    /// Overrides the top-level learning rate for this task.
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

fn default_model() -> ModelKind {
    ModelKind::Quadratic
}

fn default_devices() -> usize {
    20
}
fn default_samples_per_device() -> usize {
    50
}
fn default_test_samples() -> usize {
    1000
}
fn default_classes() -> usize {
    4
}
fn default_class_separation() -> f64 {
    1.0
}
fn default_within_class_noise() -> f64 {
    8.0
}
fn default_curvature_min() -> f64 {
    0.5
}
fn default_curvature_max() -> f64 {
    2.0
}
fn default_target_spread() -> f64 {
    1.0
}

/// Where task data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Per-seed synthetic datasets (Gaussian-cluster logistic or random
    /// quadratic, per each task's `model`).
    Synthetic {
        #[serde(default = "default_devices")]
        devices: usize,
        #[serde(default = "default_samples_per_device")]
        samples_per_device: usize,
        #[serde(default = "default_test_samples")]
        test_samples: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_class_separation")]
        class_separation: f64,
        #[serde(default = "default_within_class_noise")]
        within_class_noise: f64,
        #[serde(default = "default_curvature_min")]
        curvature_min: f64,
        #[serde(default = "default_curvature_max")]
        curvature_max: f64,
        #[serde(default = "default_target_spread")]
        target_spread: f64,
    },
    /// IDX image/label files, one set per task, split round-robin over
    /// devices (the same data for every seed).
    Idx {
        #[serde(default = "default_devices")]
        devices: usize,
        #[serde(rename = "task")]
        tasks: Vec<IdxTaskPaths>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            devices: default_devices(),
            samples_per_device: default_samples_per_device(),
            test_samples: default_test_samples(),
            classes: default_classes(),
            class_separation: default_class_separation(),
            within_class_noise: default_within_class_noise(),
            curvature_min: default_curvature_min(),
            curvature_max: default_curvature_max(),
            target_spread: default_target_spread(),
        }
    }
}

/// IDX file locations for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxTaskPaths {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
}

fn default_beta2() -> f64 {
    0.1
}

/// Knobs specific to the bound command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    /// Gradient-envelope slope β₂ (the intercept β₁ is measured from the
    /// run itself).
    pub beta2: f64,
    /// Scheme the bound run uses; the per-round noise floor comes from the
    /// state-evolution fixed point, so interference-blind recovery is not
    /// supported here.
    pub scheme: SchemeChoice,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            beta2: default_beta2(),
            scheme: SchemeChoice::OaFmtl,
        }
    }
}

fn default_se_max_iters() -> usize {
    200
}
fn default_se_rel_tol() -> f64 {
    1e-10
}

/// Knobs specific to the state-evolution command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeSectionConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for SeSectionConfig {
    fn default() -> Self {
        SeSectionConfig {
            max_iters: default_se_max_iters(),
            rel_tol: default_se_rel_tol(),
        }
    }
}

/// The full run configuration, as read from TOML and amended by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scheme(s) for training runs.
    #[serde(default)]
    pub scheme: SchemeChoice,
    /// Global rounds T.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Master seed when no sweep is given.
    #[serde(default)]
    pub seed: u64,
    /// Seed sweep; takes precedence over `seed` when non-empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Real observation length per task (2s).
    pub rows: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Measurement-ratio convention switch (`s/d` instead of `2s/d`).
    #[serde(default)]
    pub paper_ratio: bool,
    /// Effective-noise convention switch (`σ_w²/(4γ²K²)` instead of
    /// `σ_w²/(2γ²K²)`).
    #[serde(default)]
    pub paper_sigma: bool,
    /// Record the per-round state-evolution fixed point during training
    /// (the bound command always does).
    #[serde(default)]
    pub record_se_fixed_point: bool,
    /// Targets ξ for the time-to-target table.
    #[serde(default = "default_tstar_xi")]
    pub tstar_xi: Vec<f64>,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub turbo: TurboConfig,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub se: SeSectionConfig,
}

/// A fully resolved run: config after overrides, the seed list, and the
/// output directory.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

/// Load the TOML file, apply flag and environment overrides, validate.
pub fn load(args: &RunArgs) -> Result<Resolved> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config: RunConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;

    if let Some(seed) = args.seed {
        config.seed = seed;
        config.seeds = Vec::new();
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(scheme) = args.scheme {
        config.scheme = scheme;
    }
    if args.paper_ratio {
        config.paper_ratio = true;
    }
    if args.paper_sigma {
        config.paper_sigma = true;
    }
    let out_dir = match (&args.out, std::env::var_os(OUT_DIR_ENV)) {
        (Some(flag), _) => flag.clone(),
        (None, Some(env)) => PathBuf::from(env),
        (None, None) => PathBuf::from(&config.out_dir),
    };
    config.out_dir = out_dir.display().to_string();

    validate(&config)?;
    let seeds = if config.seeds.is_empty() {
        vec![config.seed]
    } else {
        config.seeds.clone()
    };
    Ok(Resolved {
        config,
        seeds,
        out_dir,
        jobs: args.jobs,
    })
}

fn validate(config: &RunConfig) -> Result<()> {
    if config.tasks.is_empty() {
        bail!("task: at least one [[task]] section is required");
    }
    if config.rounds == 0 {
        bail!("rounds: must be positive");
    }
    if config.rows == 0 || config.rows % 2 != 0 {
        bail!(
            "rows: must be a positive even number (2s real measurements), got {}",
            config.rows
        );
    }
    for (n, task) in config.tasks.iter().enumerate() {
        if task.dim == 0 {
            bail!("task[{n}].dim: must be positive");
        }
        if task.top_k == 0 || task.top_k > task.dim {
            bail!(
                "task[{n}].top_k: must lie in 1..={}, got {}",
                task.dim,
                task.top_k
            );
        }
        if config.rows > task.dim {
            bail!(
                "rows: {} exceeds task[{n}].dim = {}",
                config.rows,
                task.dim
            );
        }
        if task.regularization < 0.0 || !task.regularization.is_finite() {
            bail!(
                "task[{n}].regularization: must be non-negative, got {}",
                task.regularization
            );
        }
        let lr = task.learning_rate.unwrap_or(config.learning_rate);
        if !(lr > 0.0) || !lr.is_finite() {
            bail!("task[{n}].learning_rate: must be positive, got {lr}");
        }
    }
    if config.channel.noise_w_sq < 0.0 || !config.channel.noise_w_sq.is_finite() {
        bail!(
            "channel.noise_w_sq: must be non-negative, got {}",
            config.channel.noise_w_sq
        );
    }
    if !(config.channel.power_budget > 0.0) || !config.channel.power_budget.is_finite() {
        bail!(
            "channel.power_budget: must be positive, got {}",
            config.channel.power_budget
        );
    }
    config.channel.gamma.to_policy()?;
    config.channel.threshold.to_rule()?;
    config
        .turbo
        .to_options(config.paper_ratio)
        .validate()
        .map_err(|e| anyhow::anyhow!("turbo: {e}"))?;
    if !(config.bound.beta2 > 0.0) || !config.bound.beta2.is_finite() {
        bail!("bound.beta2: must be positive, got {}", config.bound.beta2);
    }
    for (i, xi) in config.tstar_xi.iter().enumerate() {
        if !(*xi > 0.0 && *xi <= 1.0) {
            bail!("tstar_xi[{i}]: must lie in (0, 1], got {xi}");
        }
    }
    if config.se.max_iters == 0 {
        bail!("se.max_iters: must be positive");
    }
    match &config.data {
        DataConfig::Synthetic {
            devices,
            samples_per_device,
            classes,
            class_separation,
            within_class_noise,
            curvature_min,
            curvature_max,
            target_spread,
            test_samples,
        } => {
            if *devices == 0 {
                bail!("data.devices: must be positive");
            }
            if *samples_per_device == 0 {
                bail!("data.samples_per_device: must be positive");
            }
            if *classes < 2 {
                bail!("data.classes: must be at least 2, got {classes}");
            }
            if !(*class_separation > 0.0) {
                bail!("data.class_separation: must be positive, got {class_separation}");
            }
            if !(*within_class_noise > 0.0) {
                bail!("data.within_class_noise: must be positive, got {within_class_noise}");
            }
            if !(*curvature_min > 0.0) || !(*curvature_max >= *curvature_min) {
                bail!(
                    "data.curvature_min/curvature_max: need 0 < min <= max, got {curvature_min}/{curvature_max}"
                );
            }
            if !(*target_spread > 0.0) {
                bail!("data.target_spread: must be positive, got {target_spread}");
            }
            for (n, task) in config.tasks.iter().enumerate() {
                if task.model == ModelKind::Logistic {
                    if task.dim % *classes != 0 {
                        bail!(
                            "task[{n}].dim: logistic parameters are classes x features; {} is not divisible by data.classes = {classes}",
                            task.dim
                        );
                    }
                    if *test_samples == 0 {
                        bail!("data.test_samples: must be positive for logistic tasks");
                    }
                }
            }
        }
        DataConfig::Idx { devices, tasks } => {
            if *devices == 0 {
                bail!("data.devices: must be positive");
            }
            if tasks.len() != config.tasks.len() {
                bail!(
                    "data.task: expected {} IDX path sets (one per [[task]]), got {}",
                    config.tasks.len(),
                    tasks.len()
                );
            }
            for (n, task) in config.tasks.iter().enumerate() {
                if task.model != ModelKind::Logistic {
                    bail!("task[{n}].model: IDX data requires logistic tasks");
                }
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Per-task learning rate (task override or the top-level value).
    pub fn task_learning_rate(&self, n: usize) -> f64 {
        self.tasks[n].learning_rate.unwrap_or(self.learning_rate)
    }

    /// Per-task specs for the harness.
    pub fn task_specs(&self) -> Vec<TaskSpec> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(n, t)| TaskSpec {
                task_id: n,
                dim: t.dim,
                top_k: t.top_k,
                model: t.model,
                regularization: t.regularization,
                learning_rate: self.task_learning_rate(n),
            })
            .collect()
    }

    /// All-known priors, or an error naming the first estimated one.
    pub fn known_priors(&self) -> Result<Vec<BgPrior>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(n, t)| match t.prior {
                PriorConfig::Known(p) => Ok(p),
                PriorConfig::Keyword(PriorKeyword::Estimate) => bail!(
                    "task[{n}].prior: this command needs explicit sparsity/active_variance"
                ),
            })
            .collect()
    }

    /// Prior mode for training: all known or all estimated.
    pub fn prior_mode(&self) -> Result<PriorMode> {
        let known = self
            .tasks
            .iter()
            .filter(|t| matches!(t.prior, PriorConfig::Known(_)))
            .count();
        if known == 0 {
            Ok(PriorMode::Estimate)
        } else if known == self.tasks.len() {
            Ok(PriorMode::Known(self.known_priors()?))
        } else {
            bail!("task priors: must be all `estimate` or all known, not a mix");
        }
    }

    pub fn sigma_convention(&self) -> SigmaConvention {
        if self.paper_sigma {
            SigmaConvention::PaperSigma
        } else {
            SigmaConvention::Derived
        }
    }

    /// Effective per-entry noise variance of the normalized observation in
    /// the unit-scale setting (γ = 1, K = 1), per the active convention.
    pub fn effective_noise_var(&self) -> f64 {
        match self.sigma_convention() {
            SigmaConvention::Derived => self.channel.noise_w_sq / 2.0,
            SigmaConvention::PaperSigma => self.channel.noise_w_sq / 4.0,
        }
    }

    pub fn turbo_options(&self) -> TurboOptions {
        self.turbo.to_options(self.paper_ratio)
    }

    /// The harness configuration this run describes.
    pub fn train_setup(&self) -> Result<TrainSetup> {
        Ok(TrainSetup {
            specs: self.task_specs(),
            rows: self.rows,
            channel: ChannelSetup {
                fading: self.channel.fading,
                noise_w_sq: self.channel.noise_w_sq,
                gamma: self.channel.gamma.to_policy()?,
                threshold: self.channel.threshold.to_rule()?,
                power_budget: self.channel.power_budget,
                sigma_convention: self.sigma_convention(),
            },
            turbo: self.turbo_options(),
            prior_mode: self.prior_mode()?,
            record_se_fixed_point: self.record_se_fixed_point,
        })
    }

    /// Canonical JSON serialization of the resolved config.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn sha256(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Parse and validate a config from a TOML string.
#[cfg(test)]
pub fn parse_toml(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).context("parsing config")?;
    validate(&config)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        rows = 96
        [[task]]
        dim = 128
        top_k = 32
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_toml(MINIMAL).unwrap();
        assert_eq!(cfg.rounds, 60);
        assert_eq!(cfg.scheme, SchemeChoice::All);
        assert_eq!(cfg.tasks[0].model, ModelKind::Quadratic);
        assert!(matches!(
            cfg.tasks[0].prior,
            PriorConfig::Keyword(PriorKeyword::Estimate)
        ));
        assert_eq!(cfg.channel.power_budget, 0.1);
        assert!(matches!(cfg.prior_mode().unwrap(), PriorMode::Estimate));
        assert_eq!(cfg.turbo_options().max_iters, 30);
    }

    #[test]
    fn known_priors_parse_and_validate() {
        let cfg = parse_toml(
            r#"
            rows = 96
            [[task]]
            dim = 128
            top_k = 32
            prior = { sparsity = 0.5515, active_variance = 0.2175 }
        "#,
        )
        .unwrap();
        let priors = cfg.known_priors().unwrap();
        assert_eq!(priors[0].sparsity(), 0.5515);
        assert!(matches!(cfg.prior_mode().unwrap(), PriorMode::Known(_)));
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = parse_toml(
            r#"
            rows = 200
            [[task]]
            dim = 128
            top_k = 32
        "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("rows"), "{err}");

        let err = parse_toml(
            r#"
            rows = 96
            [[task]]
            dim = 128
            top_k = 300
        "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("task[0].top_k"), "{err}");

        let err = parse_toml(
            r#"
            rows = 96
            [[task]]
            dim = 128
            top_k = 32
            [channel]
            threshold = { rule = "percentile", value = 120.0 }
        "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("channel.threshold"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_toml(
            r#"
            rows = 96
            typo_key = 1
            [[task]]
            dim = 128
            top_k = 32
        "#,
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("typo_key"), "{err:#}");
    }

    #[test]
    fn mixed_prior_modes_are_rejected() {
        let cfg = parse_toml(
            r#"
            rows = 32
            [[task]]
            dim = 64
            top_k = 16
            prior = { sparsity = 0.5, active_variance = 1.0 }
            [[task]]
            dim = 64
            top_k = 16
        "#,
        )
        .unwrap();
        assert!(cfg.prior_mode().is_err());
        assert!(cfg.known_priors().is_err());
    }

    #[test]
    fn config_hash_is_stable_and_content_sensitive() {
        let a = parse_toml(MINIMAL).unwrap();
        let b = parse_toml(MINIMAL).unwrap();
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
        let mut c = a.clone();
        c.seed = 99;
        assert_ne!(a.sha256().unwrap(), c.sha256().unwrap());
    }

    #[test]
    fn noise_convention_switch_changes_the_effective_variance() {
        let mut cfg = parse_toml(MINIMAL).unwrap();
        assert_eq!(cfg.effective_noise_var(), 0.05);
        cfg.paper_sigma = true;
        assert_eq!(cfg.effective_noise_var(), 0.025);
    }
}

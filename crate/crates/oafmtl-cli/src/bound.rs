//! Convergence-bound audits: run quadratic training with η = 1/L, feed the
//! measured constants into the loss-gap bound, and log both curves.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use oafmtl::analysis::{theorem1_bound, BoundParams, BoundRound, BoundTask};
use oafmtl::harness::{run_training, ModelKind, Scheme, TrainRun};

use crate::config::{DataConfig, Resolved};
use crate::datasets;
use crate::output::{self, Table};

struct SeedBound {
    seed: u64,
    measured: Vec<f64>,
    rounds: Vec<BoundRound>,
    dominated: bool,
}

fn bound_scheme(resolved: &Resolved) -> Result<Scheme> {
    match resolved.config.bound.scheme.single() {
        Some(Scheme::Scheme2) => {
            bail!("bound.scheme: interference-blind recovery has no fixed-point model")
        }
        Some(s) => Ok(s),
        None => bail!("bound.scheme: pick one scheme, not `all`"),
    }
}

/// Bound inputs measured from a finished run.
fn bound_params(resolved: &Resolved, run: &TrainRun, initial_gap: f64) -> BoundParams {
    let cfg = &resolved.config;
    let tasks = run
        .constants
        .iter()
        .zip(cfg.tasks.iter())
        .map(|(c, t)| BoundTask {
            dim: t.dim,
            strong_convexity: c.strong_convexity,
            smoothness: c.smoothness,
            beta1: c.beta1_observed,
            beta2: cfg.bound.beta2,
            // Ideal aggregation never drops or distorts coordinates.
            sparsification_ratio: if run.scheme == Scheme::ErrorFree {
                0.0
            } else {
                c.sparsification_ratio
            },
        })
        .collect();
    let participation = run
        .records
        .iter()
        .map(|r| r.tasks.iter().map(|t| t.participation).collect())
        .collect();
    let fixed_point_mse = run
        .records
        .iter()
        .map(|r| {
            r.tasks
                .iter()
                .map(|t| t.se_fixed_point.unwrap_or(0.0))
                .collect()
        })
        .collect();
    BoundParams {
        tasks,
        initial_gap,
        participation,
        fixed_point_mse,
    }
}

fn run_seed(resolved: &Resolved, scheme: Scheme, seed: u64) -> Result<SeedBound> {
    let cfg = &resolved.config;
    let dataset = datasets::synthetic_dataset(cfg, seed)?;
    let mut setup = cfg.train_setup()?;
    setup.record_se_fixed_point = true;
    // The bound assumes the exact descent step η = 1/L.
    for (spec, task) in setup.specs.iter_mut().zip(dataset.tasks.iter()) {
        spec.learning_rate = 1.0 / task.smoothness()?;
    }
    let run = run_training(&setup, &dataset, scheme, cfg.rounds, seed)
        .with_context(|| format!("seed {seed}, scheme {scheme}"))?;

    let initial_gap = dataset
        .tasks
        .iter()
        .map(|t| {
            Ok(t.optimum_gap(&vec![0.0; t.dim()])?
                .expect("quadratic tasks know their optimum"))
        })
        .sum::<oafmtl::Result<f64>>()?;
    let measured: Vec<f64> = run
        .records
        .iter()
        .map(|r| {
            r.tasks
                .iter()
                .map(|t| t.optimum_gap.expect("quadratic tasks know their optimum"))
                .sum()
        })
        .collect();
    let rounds = theorem1_bound(&bound_params(resolved, &run, initial_gap), cfg.rounds)?;
    let dominated = measured
        .iter()
        .zip(rounds.iter())
        .all(|(&gap, b)| gap <= b.bound);
    Ok(SeedBound {
        seed,
        measured,
        rounds,
        dominated,
    })
}

pub fn run(resolved: &Resolved) -> Result<()> {
    let cfg = &resolved.config;
    if !matches!(cfg.data, DataConfig::Synthetic { .. }) {
        bail!("data.source: the bound audit needs synthetic quadratic tasks");
    }
    if let Some(t) = cfg.tasks.iter().position(|t| t.model != ModelKind::Quadratic) {
        bail!("task[{t}].model: the bound applies to quadratic tasks only");
    }
    let scheme = bound_scheme(resolved)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.jobs)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<SeedBound> = pool.install(|| {
        resolved
            .seeds
            .par_iter()
            .map(|&seed| run_seed(resolved, scheme, seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut table = Table::create(
        &resolved.out_dir,
        "bound.csv",
        &["seed", "round", "measured_gap", "bound", "upsilon_max", "contracting"],
    )?;
    for sb in &outputs {
        for (gap, b) in sb.measured.iter().zip(sb.rounds.iter()) {
            table.row([
                sb.seed.to_string(),
                output::u(b.round),
                output::f(*gap),
                output::f(b.bound),
                output::f(b.upsilon_max),
                output::b(b.contracting),
            ])?;
        }
    }
    let path = table.finish()?;
    output::write_manifest(resolved, "bound")?;

    for sb in &outputs {
        let verdict = if sb.dominated { "holds" } else { "VIOLATED" };
        let last = sb.rounds.last().map(|b| b.bound).unwrap_or(f64::NAN);
        let last_gap = sb.measured.last().copied().unwrap_or(f64::NAN);
        println!(
            "seed {}: bound {verdict} over {} rounds (final gap {last_gap:.3e} vs bound {last:.3e})",
            sb.seed,
            sb.rounds.len()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

//! End-to-end federated training runs over the fading channel, logged in
//! long format, plus the time-to-target table when accuracy is reported.

use anyhow::{Context, Result};
use rayon::prelude::*;

use oafmtl::harness::{run_training, FederatedDataset, ModelKind, Scheme, TrainRun};

use crate::config::{DataConfig, Resolved};
use crate::datasets;
use crate::output::{self, Table};

const TRAIN_COLUMNS: [&str; 24] = [
    "seed",
    "scheme",
    "round",
    "task",
    "test_metric",
    "train_loss",
    "grad_norm_sq",
    "recovery_err_sq",
    "e1_sq",
    "e2_sq",
    "e3_sq",
    "participation",
    "lemma1_ok",
    "max_sample_grad_sq",
    "prior_sparsity",
    "prior_active_variance",
    "se_fixed_point",
    "turbo_iterations",
    "turbo_converged",
    "optimum_gap",
    "scheduled_devices",
    "channel_blocks",
    "power_ok",
    "error_feedback_ok",
];

struct SeedRuns {
    seed: u64,
    runs: Vec<TrainRun>,
}

fn run_seed(
    resolved: &Resolved,
    shared: Option<&FederatedDataset>,
    schemes: &[Scheme],
    seed: u64,
) -> Result<SeedRuns> {
    let cfg = &resolved.config;
    let owned;
    let dataset = match shared {
        Some(d) => d,
        None => {
            owned = datasets::synthetic_dataset(cfg, seed)?;
            &owned
        }
    };
    let setup = cfg.train_setup()?;
    let runs = schemes
        .iter()
        .map(|&scheme| {
            run_training(&setup, dataset, scheme, cfg.rounds, seed)
                .with_context(|| format!("seed {seed}, scheme {scheme}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedRuns { seed, runs })
}

fn write_train_csv(resolved: &Resolved, outputs: &[SeedRuns]) -> Result<std::path::PathBuf> {
    let mut table = Table::create(&resolved.out_dir, "train.csv", &TRAIN_COLUMNS)?;
    for sr in outputs {
        for run in &sr.runs {
            for rec in &run.records {
                for t in &rec.tasks {
                    table.row([
                        sr.seed.to_string(),
                        run.scheme.label().to_string(),
                        output::u(rec.round),
                        output::u(t.task),
                        output::f(t.test_metric),
                        output::f(t.train_loss),
                        output::f(t.grad_norm_sq),
                        output::f(t.recovery_err_sq),
                        output::f(t.e1_sq),
                        output::f(t.e2_sq),
                        output::f(t.e3_sq),
                        output::f(t.participation),
                        output::b(t.lemma1_ok),
                        output::f(t.max_sample_grad_sq),
                        output::opt_f(t.prior_sparsity),
                        output::opt_f(t.prior_active_variance),
                        output::opt_f(t.se_fixed_point),
                        output::u(t.turbo_iterations),
                        output::b(t.turbo_converged),
                        output::opt_f(t.optimum_gap),
                        output::u(rec.scheduled_devices),
                        output::u(rec.channel_blocks),
                        output::b(rec.power_ok),
                        output::b(rec.error_feedback_ok),
                    ])?;
                }
            }
        }
    }
    table.finish()
}

/// Accuracy curve of one task over a run's rounds.
fn metric_curve(run: &TrainRun, task: usize) -> Vec<f64> {
    run.records.iter().map(|r| r.tasks[task].test_metric).collect()
}

fn write_tstar_csv(resolved: &Resolved, outputs: &[SeedRuns]) -> Result<std::path::PathBuf> {
    let cfg = &resolved.config;
    let n_tasks = cfg.tasks.len();
    let mut table = Table::create(
        &resolved.out_dir,
        "tstar.csv",
        &["seed", "scheme", "xi", "blocks", "reached"],
    )?;
    for sr in outputs {
        // Per-task best accuracy across every scheme in this seed's run.
        let xi_max: Vec<f64> = (0..n_tasks)
            .map(|n| {
                sr.runs
                    .iter()
                    .flat_map(|run| run.records.iter().map(move |r| r.tasks[n].test_metric))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for run in &sr.runs {
            let curves: Vec<Vec<f64>> = (0..n_tasks).map(|n| metric_curve(run, n)).collect();
            for &xi in &cfg.tstar_xi {
                let outcome = oafmtl::harness::t_star(&curves, xi, &xi_max, run.scheme)?;
                table.row([
                    sr.seed.to_string(),
                    run.scheme.label().to_string(),
                    output::f(xi),
                    outcome.blocks().map(output::u).unwrap_or_default(),
                    output::b(outcome.blocks().is_some()),
                ])?;
            }
        }
    }
    table.finish()
}

pub fn run(resolved: &Resolved) -> Result<()> {
    let cfg = &resolved.config;
    let schemes = cfg.scheme.schemes();
    // IDX data is seed-independent: load and validate it once up front.
    let shared = match &cfg.data {
        DataConfig::Idx { .. } => {
            let dataset = datasets::idx_dataset(cfg)?;
            cfg.train_setup()?.validate(&dataset)?;
            Some(dataset)
        }
        DataConfig::Synthetic { .. } => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.jobs)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<SeedRuns> = pool.install(|| {
        resolved
            .seeds
            .par_iter()
            .map(|&seed| run_seed(resolved, shared.as_ref(), &schemes, seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let train_path = write_train_csv(resolved, &outputs)?;
    let accuracy_everywhere = cfg.tasks.iter().all(|t| t.model == ModelKind::Logistic);
    let tstar_path = if accuracy_everywhere {
        Some(write_tstar_csv(resolved, &outputs)?)
    } else {
        None
    };
    output::write_manifest(resolved, "train")?;

    // Digest: median final test metric per scheme and task.
    for (si, &scheme) in schemes.iter().enumerate() {
        for n in 0..cfg.tasks.len() {
            let mut finals: Vec<f64> = outputs
                .iter()
                .filter_map(|sr| sr.runs[si].records.last().map(|r| r.tasks[n].test_metric))
                .collect();
            if finals.is_empty() {
                continue;
            }
            finals.sort_by(f64::total_cmp);
            let median = finals[finals.len() / 2];
            println!(
                "{scheme} task {n}: median final metric {median:.6} ({} seeds)",
                finals.len()
            );
        }
    }
    println!("wrote {}", train_path.display());
    if let Some(p) = tstar_path {
        println!("wrote {}", p.display());
    }
    Ok(())
}

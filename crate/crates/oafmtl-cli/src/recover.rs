//! One-shot recovery experiments: simulated MSE per iteration for the
//! concurrent receiver, the interference-blind baseline, and per-task time
//! division, with state-evolution predictions overlaid.

use anyhow::{Context, Result};
use rayon::prelude::*;

use oafmtl::analysis::{state_evolution, SeConfig, SeTask};
use oafmtl::prior::BgPrior;
use oafmtl::receiver::{m_turbo_cs_traced, PriorSpec, TurboOptions, TurboResult};
use oafmtl::simulate::synthesize_recovery;
use oafmtl::util::dist_sq;

use crate::config::Resolved;
use crate::output::{self, Table};

const METHOD_MTURBO: &str = "m_turbo_cs";
const METHOD_SCHEME2: &str = "scheme2";
const METHOD_TDM: &str = "tdm";

/// Per-iteration empirical MSEs of one method on one task.
struct MethodTrace {
    method: &'static str,
    task: usize,
    mse: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_mse: f64,
}

struct SeedOutput {
    seed: u64,
    traces: Vec<MethodTrace>,
}

fn trace_of(result: &TurboResult, task_in_result: usize) -> Vec<f64> {
    result
        .trace
        .iter()
        .filter(|r| r.task == task_in_result)
        .map(|r| r.empirical_mse.expect("truth was supplied"))
        .collect()
}

fn method_trace(
    method: &'static str,
    task: usize,
    result: &TurboResult,
    task_in_result: usize,
    truth: &[f64],
) -> MethodTrace {
    MethodTrace {
        method,
        task,
        mse: trace_of(result, task_in_result),
        iterations: result.iterations,
        converged: result.converged,
        final_mse: dist_sq(&result.estimates[task_in_result], truth) / truth.len() as f64,
    }
}

fn run_seed(
    seed: u64,
    priors: &[BgPrior],
    dims: &[usize],
    rows: usize,
    noise_var: f64,
    opts: &TurboOptions,
) -> Result<SeedOutput> {
    let inst = synthesize_recovery(priors, dims, rows, noise_var, seed)?;
    let spec = PriorSpec::Known(priors.to_vec());
    let mut traces = Vec::new();

    let joint = m_turbo_cs_traced(&inst.shared, &inst.ops, &spec, opts, Some(&inst.signals))?;
    for n in 0..dims.len() {
        traces.push(method_trace(
            METHOD_MTURBO,
            n,
            &joint,
            n,
            &inst.signals[n],
        ));
    }
    for n in 0..dims.len() {
        let blind = m_turbo_cs_traced(
            &inst.shared,
            std::slice::from_ref(&inst.ops[n]),
            &spec.select(n),
            opts,
            Some(std::slice::from_ref(&inst.signals[n])),
        )?;
        traces.push(method_trace(METHOD_SCHEME2, n, &blind, 0, &inst.signals[n]));
    }
    for n in 0..dims.len() {
        let solo = m_turbo_cs_traced(
            &inst.tdm[n],
            std::slice::from_ref(&inst.ops[n]),
            &spec.select(n),
            opts,
            Some(std::slice::from_ref(&inst.signals[n])),
        )?;
        traces.push(method_trace(METHOD_TDM, n, &solo, 0, &inst.signals[n]));
    }
    Ok(SeedOutput { seed, traces })
}

/// Predicted MSE per (task, iteration), padded with the last value so any
/// receiver iteration has a prediction even after the recursion settles.
fn se_predictions(cfg: &SeConfig, horizon: usize) -> Result<Vec<Vec<f64>>> {
    let out = state_evolution(cfg)?;
    let n_tasks = cfg.tasks.len();
    let mut per_task = vec![Vec::with_capacity(horizon); n_tasks];
    for rec in &out.trace {
        per_task[rec.task].push(rec.mmse);
    }
    for series in per_task.iter_mut() {
        let last = *series.last().expect("at least one iteration");
        while series.len() < horizon {
            series.push(last);
        }
    }
    Ok(per_task)
}

pub fn run(resolved: &Resolved) -> Result<()> {
    let cfg = &resolved.config;
    let priors = cfg.known_priors()?;
    let dims: Vec<usize> = cfg.tasks.iter().map(|t| t.dim).collect();
    let opts = cfg.turbo_options();
    let noise_var = cfg.effective_noise_var();

    // Predictions are seed-independent; compute them once. rel_tol = 0
    // keeps the recursion running for the full horizon so every receiver
    // iteration has a matching row.
    let se_tasks: Vec<SeTask> = dims
        .iter()
        .zip(priors.iter())
        .map(|(&dim, prior)| SeTask { dim, prior: *prior })
        .collect();
    let joint_cfg = SeConfig {
        max_iters: opts.max_iters,
        rel_tol: 0.0,
        paper_ratio: opts.paper_ratio,
        var_floor: opts.var_floor,
        var_ceil: opts.var_ceil,
        ..SeConfig::new(se_tasks.clone(), cfg.rows, noise_var)?
    };
    let joint_pred = se_predictions(&joint_cfg, opts.max_iters)?;
    let solo_pred: Vec<Vec<f64>> = se_tasks
        .iter()
        .map(|task| {
            let solo_cfg = SeConfig {
                max_iters: opts.max_iters,
                rel_tol: 0.0,
                paper_ratio: opts.paper_ratio,
                var_floor: opts.var_floor,
                var_ceil: opts.var_ceil,
                ..SeConfig::new(vec![task.clone()], cfg.rows, noise_var)?
            };
            Ok(se_predictions(&solo_cfg, opts.max_iters)?.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.jobs)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<SeedOutput> = pool.install(|| {
        resolved
            .seeds
            .par_iter()
            .map(|&seed| run_seed(seed, &priors, &dims, cfg.rows, noise_var, &opts))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut table = Table::create(
        &resolved.out_dir,
        "recover.csv",
        &["seed", "method", "task", "iteration", "mse", "predicted_mse"],
    )?;
    let mut summary = Table::create(
        &resolved.out_dir,
        "recover_summary.csv",
        &["seed", "method", "task", "iterations", "converged", "final_mse"],
    )?;
    for out in &outputs {
        for trace in &out.traces {
            for (i, &mse) in trace.mse.iter().enumerate() {
                let predicted = match trace.method {
                    METHOD_MTURBO => joint_pred[trace.task].get(i).copied(),
                    METHOD_TDM => solo_pred[trace.task].get(i).copied(),
                    _ => None,
                };
                table.row([
                    out.seed.to_string(),
                    trace.method.to_string(),
                    output::u(trace.task),
                    output::u(i + 1),
                    output::f(mse),
                    output::opt_f(predicted),
                ])?;
            }
            summary.row([
                out.seed.to_string(),
                trace.method.to_string(),
                output::u(trace.task),
                output::u(trace.iterations),
                output::b(trace.converged),
                output::f(trace.final_mse),
            ])?;
        }
    }
    let table_path = table.finish()?;
    summary.finish()?;
    output::write_manifest(resolved, "recover")?;

    // Converged-MSE digest per method (median over seeds, worst task).
    for method in [METHOD_MTURBO, METHOD_SCHEME2, METHOD_TDM] {
        let mut worst_per_seed: Vec<f64> = outputs
            .iter()
            .map(|out| {
                out.traces
                    .iter()
                    .filter(|t| t.method == method)
                    .map(|t| t.final_mse)
                    .fold(0.0f64, f64::max)
            })
            .collect();
        worst_per_seed.sort_by(f64::total_cmp);
        let median = worst_per_seed[worst_per_seed.len() / 2];
        println!("{method}: median converged MSE {median:.3e} (worst task, {} seeds)", outputs.len());
    }
    println!("wrote {}", table_path.display());
    Ok(())
}

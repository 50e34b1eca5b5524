//! State-evolution command: run the deterministic MSE recursion for the
//! configured tasks and emit its trace.

use anyhow::Result;

use oafmtl::analysis::{state_evolution, SeConfig, SeTask};

use crate::config::Resolved;
use crate::output::{self, Table};

pub fn run(resolved: &Resolved) -> Result<()> {
    let cfg = &resolved.config;
    let priors = cfg.known_priors()?;
    let tasks: Vec<SeTask> = cfg
        .tasks
        .iter()
        .zip(priors.iter())
        .map(|(t, prior)| SeTask {
            dim: t.dim,
            prior: *prior,
        })
        .collect();
    let se_cfg = SeConfig {
        max_iters: cfg.se.max_iters,
        rel_tol: cfg.se.rel_tol,
        paper_ratio: cfg.paper_ratio,
        var_floor: cfg.turbo.var_floor,
        var_ceil: cfg.turbo.var_ceil,
        var_init: cfg.turbo.var_init,
        ..SeConfig::new(tasks, cfg.rows, cfg.effective_noise_var())?
    };
    let out = state_evolution(&se_cfg)?;

    let mut table = Table::create(
        &resolved.out_dir,
        "se.csv",
        &["iteration", "task", "v_a", "v_b", "predicted_mse"],
    )?;
    for rec in &out.trace {
        table.row([
            output::u(rec.iter),
            output::u(rec.task),
            output::f(rec.v_a_pri),
            output::f(rec.v_b_pri),
            output::f(rec.mmse),
        ])?;
    }
    let path = table.finish()?;
    output::write_manifest(resolved, "se")?;

    for (n, &v) in out.fixed_point.iter().enumerate() {
        println!("task {n}: fixed point {v:.6e}");
    }
    println!(
        "{} iterations, converged: {}, diverged: {}",
        out.iterations, out.converged, out.diverged
    );
    println!("wrote {}", path.display());
    Ok(())
}

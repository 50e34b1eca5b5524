//! Human-readable documentation of every output file, printed by the
//! `schema` subcommand.

pub const SCHEMA_TEXT: &str = r#"Output files and columns
========================

manifest.json (every command)
  command, version, config_sha256, seeds, config — everything needed to
  reproduce the run. Rerunning the same command with the embedded config
  and seed list produces byte-identical CSV files, independent of --jobs.

recover.csv (recover)
  seed            master seed of the synthesized instance
  method          m_turbo_cs | scheme2 | tdm
  task            0-based task index
  iteration       1-based receiver iteration
  mse             empirical per-component squared error of that iteration's
                  estimate against the true signal
  predicted_mse   state-evolution prediction for the same iteration
                  (m_turbo_cs rows use the joint recursion, tdm rows the
                  single-task recursion; empty for scheme2, whose
                  interference-blind loop has no evolution model)

recover_summary.csv (recover)
  seed, method, task
  iterations      receiver iterations executed
  converged       whether the loop met its tolerance
  final_mse       per-component squared error of the returned estimate

se.csv (se)
  iteration       1-based recursion step
  task            0-based task index
  v_a             linear-stage prior variance entering the iteration
  v_b             denoiser-stage prior variance after the linear update
  predicted_mse   per-component MSE predicted for the denoised estimate

train.csv (train)
  seed, scheme, round, task
  test_metric         test accuracy (logistic) or loss gap to the optimum
                      (quadratic), after the round's update
  train_loss          global training loss after the update
  grad_norm_sq        squared norm of the exact aggregated gradient at the
                      round's start
  recovery_err_sq     squared error of the recovered aggregated gradient
  e1_sq, e2_sq, e3_sq squared norms of the sparsification, scheduling, and
                      recovery error components
  participation       scheduled fraction of the task's total samples
  lemma1_ok           per-round descent inequality held with L = 1/eta
  max_sample_grad_sq  largest per-sample squared gradient norm this round
  prior_sparsity, prior_active_variance
                      prior in effect at the recovery's returned iterate
                      (empty when the channel was unused)
  se_fixed_point      state-evolution MSE fixed point for that prior (only
                      when recording is enabled; bound runs always record)
  turbo_iterations, turbo_converged
                      receiver loop telemetry
  optimum_gap         loss gap to the analytic optimum (quadratic tasks)
  scheduled_devices, channel_blocks, power_ok, error_feedback_ok
                      round-level bookkeeping, repeated on each task row

tstar.csv (train; emitted only when every task reports accuracy)
  seed, scheme
  xi              target fraction of the per-task best accuracy; the best is
                  taken per seed across all schemes in the run
  blocks          channel blocks until every task reaches its target — the
                  slowest task for schemes that share each block, the sum of
                  per-task times for time division; empty when unreached
  reached         true/false

bound.csv (bound)
  seed, round
  measured_gap    total loss gap to the optima after the round's update
  bound           convergence-bound value capping that same gap
  upsilon_max     largest per-task contraction factor for the round
  contracting     true when upsilon_max < 1

Conventions
  Long format: one row per (seed, scheme, round, task) observation, in
  deterministic order (seed-major, then scheme, round, task).
  Floats use Rust's shortest round-trip decimal form; booleans are
  true/false; missing values are empty cells.
  The output directory is taken from --out, else the OAFMTL_OUT_DIR
  environment variable, else the config's out_dir.
  The bound command always runs quadratic tasks with eta = 1/L (honest
  smoothness from the data) and records the state-evolution fixed point.
"#;

//! Finite-difference verification of the task models: analytic gradients
//! against central differences of the loss, and the curvature constants
//! (strong convexity below, smoothness above) against numerical
//! Hessian-vector products.

use oafmtl::harness::{make_synthetic, ModelKind, SyntheticTaskConfig, TaskData};

fn quadratic_task(seed: u64) -> TaskData {
    let cfg = SyntheticTaskConfig {
        model: ModelKind::Quadratic,
        dim: 12,
        curvature_min: 0.4,
        curvature_max: 2.5,
        target_spread: 1.5,
        ..SyntheticTaskConfig::default()
    };
    make_synthetic(&cfg, 3, 4, 1, seed).unwrap()
}

fn logistic_task(seed: u64) -> TaskData {
    let cfg = SyntheticTaskConfig {
        model: ModelKind::Logistic,
        dim: 12, // 3 classes × 4 features
        classes: 3,
        class_separation: 1.0,
        within_class_noise: 0.8,
        regularization: 0.05,
        ..SyntheticTaskConfig::default()
    };
    make_synthetic(&cfg, 3, 6, 5, seed).unwrap()
}

/// A deterministic off-origin parameter point.
fn params_at(dim: usize, phase: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| 0.4 * (i as f64 * 0.73 + phase).sin() - 0.1)
        .collect()
}

fn check_gradient(task: &TaskData, phase: f64, tol: f64) {
    let dim = task.dim();
    let params = params_at(dim, phase);
    let grad = task.global_gradient(&params).unwrap();
    let eps = 1e-5;
    for i in 0..dim {
        let mut plus = params.clone();
        plus[i] += eps;
        let mut minus = params.clone();
        minus[i] -= eps;
        let fd =
            (task.global_loss(&plus).unwrap() - task.global_loss(&minus).unwrap()) / (2.0 * eps);
        assert!(
            (fd - grad[i]).abs() <= tol,
            "coordinate {i}: finite difference {fd} vs analytic {}",
            grad[i]
        );
    }
}

#[test]
fn quadratic_gradient_matches_central_differences() {
    check_gradient(&quadratic_task(101), 0.0, 1e-6);
    check_gradient(&quadratic_task(102), 2.4, 1e-6);
}

#[test]
fn logistic_gradient_matches_central_differences() {
    check_gradient(&logistic_task(103), 0.0, 1e-6);
    check_gradient(&logistic_task(104), 1.7, 1e-6);
}

/// `H·v ≈ (∇L(θ+εv) − ∇L(θ−εv)) / 2ε`.
fn hessian_vector_product(task: &TaskData, params: &[f64], v: &[f64], eps: f64) -> Vec<f64> {
    let plus: Vec<f64> = params.iter().zip(v.iter()).map(|(p, d)| p + eps * d).collect();
    let minus: Vec<f64> = params.iter().zip(v.iter()).map(|(p, d)| p - eps * d).collect();
    let gp = task.global_gradient(&plus).unwrap();
    let gm = task.global_gradient(&minus).unwrap();
    gp.iter()
        .zip(gm.iter())
        .map(|(a, b)| (a - b) / (2.0 * eps))
        .collect()
}

fn check_curvature_sandwich(task: &TaskData) {
    let dim = task.dim();
    let omega = task.strong_convexity().unwrap();
    let l = task.smoothness().unwrap();
    assert!(omega > 0.0 && l >= omega, "Ω = {omega}, L = {l}");
    let params = params_at(dim, 0.9);
    for probe in 0..6 {
        let u: Vec<f64> = (0..dim)
            .map(|i| ((i * (probe + 2)) as f64 * 0.911 + probe as f64).cos())
            .collect();
        let norm_sq: f64 = u.iter().map(|x| x * x).sum();
        let hu = hessian_vector_product(task, &params, &u, 1e-4);
        let quad_form: f64 = u.iter().zip(hu.iter()).map(|(a, b)| a * b).sum();
        let slack = 1e-6 * norm_sq + 1e-8;
        assert!(
            quad_form >= omega * norm_sq - slack,
            "probe {probe}: uᵀHu = {quad_form} below Ω‖u‖² = {}",
            omega * norm_sq
        );
        assert!(
            quad_form <= l * norm_sq + slack,
            "probe {probe}: uᵀHu = {quad_form} above L‖u‖² = {}",
            l * norm_sq
        );
    }
}

#[test]
fn quadratic_curvature_constants_bracket_the_hessian() {
    check_curvature_sandwich(&quadratic_task(105));
}

#[test]
fn logistic_curvature_constants_bracket_the_hessian() {
    check_curvature_sandwich(&logistic_task(106));
}

#[test]
fn quadratic_optimum_is_a_stationary_minimum() {
    let task = quadratic_task(107);
    let optimum = match &task {
        TaskData::Quadratic(q) => q.optimum.clone(),
        TaskData::Logistic(_) => unreachable!(),
    };
    let g = task.global_gradient(&optimum).unwrap();
    let gnorm_sq: f64 = g.iter().map(|x| x * x).sum();
    assert!(gnorm_sq <= 1e-24, "gradient at the optimum: ‖g‖² = {gnorm_sq}");

    // The recorded optimum loss matches the loss evaluated there, and every
    // other point sits above it.
    let gap_at_opt = task.optimum_gap(&optimum).unwrap().unwrap();
    assert!(gap_at_opt.abs() <= 1e-12, "gap at the optimum: {gap_at_opt}");
    for phase in [0.3, 1.1, 2.9, 4.2] {
        let gap = task.optimum_gap(&params_at(task.dim(), phase)).unwrap().unwrap();
        assert!(gap >= 0.0, "negative optimality gap {gap} at phase {phase}");
    }
}

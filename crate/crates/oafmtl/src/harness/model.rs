//! Task models for the training harness.
//!
//! Both model kinds are strongly convex with computable curvature, so the
//! assumptions behind the loss-gap bound (strong convexity, smoothness,
//! per-sample gradient envelopes) can be verified rather than assumed:
//!
//! - quadratic: per-sample loss `½ (θ−c)ᵀ H (θ−c)` with a shared diagonal
//!   `H`, whose exact optimum is the flat mean of all targets;
//! - logistic: multinomial softmax cross-entropy with an L2 term, on
//!   synthetic Gaussian clusters or ingested image data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{norm_sq, pairwise_sum};

/// Which loss family a task trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    Logistic,
}

/// Static description of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    /// Model dimension `d` (for logistic: classes × feature dim).
    pub dim: usize,
    /// Sparsification budget `k`.
    pub top_k: usize,
    pub model: ModelKind,
    /// L2 coefficient (logistic); ignored by the quadratic model.
    pub regularization: f64,
    pub learning_rate: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.top_k == 0 || self.top_k > self.dim {
            return Err(Error::invalid(format!(
                "task {}: need 1 <= top_k <= dim, got top_k={}, dim={}",
                self.task_id, self.top_k, self.dim
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "task {}: learning rate must be positive, got {}",
                self.task_id, self.learning_rate
            )));
        }
        if self.regularization < 0.0 || !self.regularization.is_finite() {
            return Err(Error::invalid(format!(
                "task {}: regularization must be non-negative, got {}",
                self.task_id, self.regularization
            )));
        }
        Ok(())
    }
}

/// A labeled feature set (row-major `count × feature_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub feature_dim: usize,
}

impl LabeledSet {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, feature_dim: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::DimensionMismatch {
                context: "labeled set features",
                expected: labels.len() * feature_dim,
                got: features.len(),
            });
        }
        Ok(LabeledSet {
            features,
            labels,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Quadratic task: every sample is a target vector `c`, the per-sample loss
/// is `½ Σ_i h_i (θ_i − c_i)²` with a shared diagonal curvature `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    pub curvature: Vec<f64>,
    /// `device_targets[m]` holds device m's samples, each of length `dim`.
    pub device_targets: Vec<Vec<Vec<f64>>>,
    /// Exact global minimizer (the flat mean of all targets).
    pub optimum: Vec<f64>,
    /// Loss value at the optimum.
    pub optimum_loss: f64,
}

/// Multinomial logistic task with per-sample loss
/// `CE(softmax(Wx), y) + (reg/2)‖W‖²`; parameters are `W` flattened
/// row-major (`classes × feature_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticTask {
    pub classes: usize,
    pub feature_dim: usize,
    pub regularization: f64,
    pub devices: Vec<LabeledSet>,
    pub test: LabeledSet,
}

/// One task's data in the harness.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    Quadratic(QuadraticTask),
    Logistic(LogisticTask),
}

/// `log(Σ exp(z))` and per-class softmax probabilities, computed stably.
fn softmax_stable(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits.iter()) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

impl LogisticTask {
    fn dim(&self) -> usize {
        self.classes * self.feature_dim
    }

    /// Per-sample cross-entropy and, if requested, the gradient of the
    /// unregularized term accumulated into `grad_acc`.
    fn sample_ce(&self, params: &[f64], x: &[f64], y: usize, mut grad_acc: Option<&mut [f64]>) -> f64 {
        let c = self.classes;
        let p = self.feature_dim;
        let mut logits = vec![0.0; c];
        for (cls, logit) in logits.iter_mut().enumerate() {
            let row = &params[cls * p..(cls + 1) * p];
            *logit = row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum();
        }
        let mut probs = vec![0.0; c];
        let lse = softmax_stable(&logits, &mut probs);
        if let Some(grad) = grad_acc.as_deref_mut() {
            for cls in 0..c {
                let coeff = probs[cls] - if cls == y { 1.0 } else { 0.0 };
                let row = &mut grad[cls * p..(cls + 1) * p];
                for (g, &xi) in row.iter_mut().zip(x.iter()) {
                    *g += coeff * xi;
                }
            }
        }
        lse - logits[y]
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        let p = self.feature_dim;
        let mut best = 0usize;
        let mut best_logit = f64::NEG_INFINITY;
        for cls in 0..self.classes {
            let row = &params[cls * p..(cls + 1) * p];
            let logit: f64 = row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum();
            if logit > best_logit {
                best_logit = logit;
                best = cls;
            }
        }
        best
    }
}

impl TaskData {
    pub fn dim(&self) -> usize {
        match self {
            TaskData::Quadratic(q) => q.curvature.len(),
            TaskData::Logistic(l) => l.dim(),
        }
    }

    pub fn num_devices(&self) -> usize {
        match self {
            TaskData::Quadratic(q) => q.device_targets.len(),
            TaskData::Logistic(l) => l.devices.len(),
        }
    }

    /// `K_nm`: device m's sample count.
    pub fn device_count(&self, device: usize) -> u64 {
        match self {
            TaskData::Quadratic(q) => q.device_targets[device].len() as u64,
            TaskData::Logistic(l) => l.devices[device].len() as u64,
        }
    }

    fn total_count(&self) -> u64 {
        (0..self.num_devices()).map(|m| self.device_count(m)).sum()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "model parameters",
                expected: self.dim(),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Full-batch gradient of device m's local empirical loss; zero when
    /// the device holds no samples.
    pub fn local_gradient(&self, device: usize, params: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        match self {
            TaskData::Quadratic(q) => {
                let samples = &q.device_targets[device];
                let mut grad = vec![0.0; q.curvature.len()];
                if samples.is_empty() {
                    return Ok(grad);
                }
                // Mean of H(θ − c) over samples = H(θ − mean c).
                for c in samples {
                    for (g, (&t, &ci)) in grad.iter_mut().zip(params.iter().zip(c.iter())) {
                        *g += t - ci;
                    }
                }
                let inv = 1.0 / samples.len() as f64;
                for (g, &h) in grad.iter_mut().zip(q.curvature.iter()) {
                    *g *= h * inv;
                }
                Ok(grad)
            }
            TaskData::Logistic(l) => {
                let set = &l.devices[device];
                let mut grad = vec![0.0; l.dim()];
                if set.is_empty() {
                    return Ok(grad);
                }
                for i in 0..set.len() {
                    l.sample_ce(params, set.sample(i), set.labels[i], Some(&mut grad));
                }
                let inv = 1.0 / set.len() as f64;
                for (g, &w) in grad.iter_mut().zip(params.iter()) {
                    *g = *g * inv + l.regularization * w;
                }
                Ok(grad)
            }
        }
    }

    /// Global empirical loss: the dataset-size-weighted average of local
    /// losses, which with `K_nm` = sample counts is the flat mean over all
    /// training samples (plus the L2 term once for logistic).
    pub fn global_loss(&self, params: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        match self {
            TaskData::Quadratic(q) => {
                let mut terms = Vec::new();
                for samples in &q.device_targets {
                    for c in samples {
                        let loss: f64 = q
                            .curvature
                            .iter()
                            .zip(params.iter().zip(c.iter()))
                            .map(|(&h, (&t, &ci))| 0.5 * h * (t - ci) * (t - ci))
                            .sum();
                        terms.push(loss);
                    }
                }
                if terms.is_empty() {
                    return Err(Error::EmptyInput("quadratic global loss"));
                }
                Ok(pairwise_sum(&terms) / terms.len() as f64)
            }
            TaskData::Logistic(l) => {
                let mut terms = Vec::new();
                for set in &l.devices {
                    for i in 0..set.len() {
                        terms.push(l.sample_ce(params, set.sample(i), set.labels[i], None));
                    }
                }
                if terms.is_empty() {
                    return Err(Error::EmptyInput("logistic global loss"));
                }
                let ce = pairwise_sum(&terms) / terms.len() as f64;
                Ok(ce + 0.5 * l.regularization * norm_sq(params))
            }
        }
    }

    /// Gradient of [`TaskData::global_loss`]: the dataset-size-weighted
    /// average of the local gradients.
    pub fn global_gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let total = self.total_count() as f64;
        if total == 0.0 {
            return Err(Error::EmptyInput("global gradient"));
        }
        let mut out = vec![0.0; self.dim()];
        for m in 0..self.num_devices() {
            let w = self.device_count(m) as f64 / total;
            if w == 0.0 {
                continue;
            }
            let g = self.local_gradient(m, params)?;
            for (o, &gi) in out.iter_mut().zip(g.iter()) {
                *o += w * gi;
            }
        }
        Ok(out)
    }

    /// Held-out quality metric: test accuracy for logistic (higher is
    /// better), loss gap to the exact optimum for quadratic (lower is
    /// better).
    pub fn test_metric(&self, params: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        match self {
            TaskData::Quadratic(q) => Ok(self.global_loss(params)? - q.optimum_loss),
            TaskData::Logistic(l) => {
                if l.test.is_empty() {
                    return Err(Error::EmptyInput("test set"));
                }
                let hits = (0..l.test.len())
                    .filter(|&i| l.predict(params, l.test.sample(i)) == l.test.labels[i])
                    .count();
                Ok(hits as f64 / l.test.len() as f64)
            }
        }
    }

    /// `L(θ) − L(θ⋆)` for tasks with a known optimum.
    pub fn optimum_gap(&self, params: &[f64]) -> Result<Option<f64>> {
        match self {
            TaskData::Quadratic(q) => Ok(Some(self.global_loss(params)? - q.optimum_loss)),
            TaskData::Logistic(_) => Ok(None),
        }
    }

    /// Largest squared per-sample gradient norm at `params` across all
    /// devices; the trajectory maximum of this quantity is an honest β₁.
    pub fn max_sample_grad_sq(&self, params: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        let mut max = 0.0f64;
        match self {
            TaskData::Quadratic(q) => {
                for samples in &q.device_targets {
                    for c in samples {
                        let sq: f64 = q
                            .curvature
                            .iter()
                            .zip(params.iter().zip(c.iter()))
                            .map(|(&h, (&t, &ci))| {
                                let g = h * (t - ci);
                                g * g
                            })
                            .sum();
                        max = max.max(sq);
                    }
                }
            }
            TaskData::Logistic(l) => {
                let mut grad = vec![0.0; l.dim()];
                for set in &l.devices {
                    for i in 0..set.len() {
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        l.sample_ce(params, set.sample(i), set.labels[i], Some(&mut grad));
                        for (g, &w) in grad.iter_mut().zip(params.iter()) {
                            *g += l.regularization * w;
                        }
                        max = max.max(norm_sq(&grad));
                    }
                }
            }
        }
        Ok(max)
    }

    /// Smoothness constant L of the global loss, from the data:
    /// the largest curvature entry for quadratic; for logistic,
    /// `½·λ_max(XᵀX/K) + reg` via power iteration on the feature
    /// second-moment operator (the softmax Hessian factor is at most ½).
    pub fn smoothness(&self) -> Result<f64> {
        match self {
            TaskData::Quadratic(q) => q
                .curvature
                .iter()
                .copied()
                .fold(None, |acc: Option<f64>, h| Some(acc.map_or(h, |a| a.max(h))))
                .ok_or(Error::EmptyInput("curvature")),
            TaskData::Logistic(l) => {
                let p = l.feature_dim;
                let total: usize = l.devices.iter().map(|s| s.len()).sum();
                if total == 0 {
                    return Err(Error::EmptyInput("smoothness data"));
                }
                // Power iteration on u ↦ (1/K) Σ_samples x (xᵀu).
                let mut u = vec![1.0 / (p as f64).sqrt(); p];
                let mut eig = 0.0;
                for _ in 0..100 {
                    let mut next = vec![0.0; p];
                    for set in &l.devices {
                        for i in 0..set.len() {
                            let x = set.sample(i);
                            let dot: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                            for (n, &xi) in next.iter_mut().zip(x.iter()) {
                                *n += dot * xi;
                            }
                        }
                    }
                    let inv = 1.0 / total as f64;
                    next.iter_mut().for_each(|v| *v *= inv);
                    let norm = norm_sq(&next).sqrt();
                    if norm == 0.0 {
                        eig = 0.0;
                        break;
                    }
                    eig = norm;
                    next.iter_mut().for_each(|v| *v /= norm);
                    u = next;
                }
                Ok(0.5 * eig + l.regularization)
            }
        }
    }

    /// Strong-convexity constant Ω of the global loss: the smallest
    /// curvature entry for quadratic, the L2 coefficient for logistic
    /// (cross-entropy itself is convex).
    pub fn strong_convexity(&self) -> Result<f64> {
        match self {
            TaskData::Quadratic(q) => q
                .curvature
                .iter()
                .copied()
                .fold(None, |acc: Option<f64>, h| Some(acc.map_or(h, |a| a.min(h))))
                .ok_or(Error::EmptyInput("curvature")),
            TaskData::Logistic(l) => Ok(l.regularization),
        }
    }
}

/// `θ^{t+1} = θ^t − η ĝ`.
pub fn global_step(params: &mut [f64], g_hat: &[f64], learning_rate: f64) -> Result<()> {
    if params.len() != g_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "global_step",
            expected: params.len(),
            got: g_hat.len(),
        });
    }
    for (p, &g) in params.iter_mut().zip(g_hat.iter()) {
        *p -= learning_rate * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_quadratic() -> TaskData {
        TaskData::Quadratic(QuadraticTask {
            curvature: vec![1.0, 1.0],
            device_targets: vec![
                vec![vec![1.0, 0.0]],
                vec![vec![3.0, 2.0]],
            ],
            optimum: vec![2.0, 1.0],
            optimum_loss: 1.0 + 1.0,
        })
    }

    #[test]
    fn quadratic_single_sample_gradient_is_displacement() {
        let task = tiny_quadratic();
        let g = task.local_gradient(0, &[2.0, 2.0]).unwrap();
        assert_eq!(g, vec![1.0, 2.0]);
    }

    #[test]
    fn quadratic_global_gradient_vanishes_at_the_mean() {
        let task = tiny_quadratic();
        let g = task.global_gradient(&[2.0, 1.0]).unwrap();
        assert!(norm_sq(&g) < 1e-28);
    }

    #[test]
    fn quadratic_constants_are_the_curvature_extremes() {
        let task = TaskData::Quadratic(QuadraticTask {
            curvature: vec![0.5, 2.0, 1.0],
            device_targets: vec![vec![vec![0.0, 0.0, 0.0]]],
            optimum: vec![0.0, 0.0, 0.0],
            optimum_loss: 0.0,
        });
        assert_eq!(task.strong_convexity().unwrap(), 0.5);
        assert_eq!(task.smoothness().unwrap(), 2.0);
    }

    #[test]
    fn empty_device_contributes_zero_gradient() {
        let task = TaskData::Quadratic(QuadraticTask {
            curvature: vec![1.0],
            device_targets: vec![vec![], vec![vec![4.0]]],
            optimum: vec![4.0],
            optimum_loss: 0.0,
        });
        assert_eq!(task.local_gradient(0, &[1.0]).unwrap(), vec![0.0]);
        assert_eq!(task.device_count(0), 0);
    }

    fn tiny_logistic() -> TaskData {
        // Two classes in 2-D, two separable clusters.
        let features = vec![1.0, 0.1, 0.9, -0.2, -1.0, 0.2, -1.1, 0.0];
        let labels = vec![0, 0, 1, 1];
        let set = LabeledSet::new(features, labels, 2).unwrap();
        TaskData::Logistic(LogisticTask {
            classes: 2,
            feature_dim: 2,
            regularization: 0.1,
            devices: vec![set.clone()],
            test: set,
        })
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let task = tiny_logistic();
        let params: Vec<f64> = (0..4).map(|i| 0.3 * (i as f64 + 1.0) - 0.5).collect();
        let grad = task.local_gradient(0, &params).unwrap();
        let eps = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += eps;
            let mut minus = params.clone();
            minus[i] -= eps;
            let fd = (task.global_loss(&plus).unwrap() - task.global_loss(&minus).unwrap())
                / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() <= 1e-6,
                "coordinate {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn logistic_learns_separable_clusters() {
        let task = tiny_logistic();
        let mut params = vec![0.0; 4];
        for _ in 0..200 {
            let g = task.global_gradient(&params).unwrap();
            global_step(&mut params, &g, 0.5).unwrap();
        }
        assert_eq!(task.test_metric(&params).unwrap(), 1.0);
        assert_eq!(task.strong_convexity().unwrap(), 0.1);
        assert!(task.smoothness().unwrap() > 0.1);
    }

    #[test]
    fn per_sample_gradient_envelope_dominates_each_sample() {
        let task = tiny_logistic();
        let params = vec![0.2, -0.1, 0.05, 0.4];
        let max_sq = task.max_sample_grad_sq(&params).unwrap();
        // The average gradient can never exceed the per-sample max.
        let avg = task.global_gradient(&params).unwrap();
        assert!(norm_sq(&avg) <= max_sq + 1e-15);
    }

    #[test]
    fn global_step_applies_the_update() {
        let mut params = vec![1.0, 1.0];
        global_step(&mut params, &[2.0, -2.0], 0.1).unwrap();
        assert_eq!(params, vec![0.8, 1.2]);
        global_step(&mut params, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(params, vec![0.8, 1.2]);
    }
}

//! Dataset construction from the run configuration: per-seed synthetic
//! tasks, or IDX files split across devices.

use anyhow::{bail, Result};

use oafmtl::harness::model::LogisticTask;
use oafmtl::harness::{
    ingest_idx, make_synthetic, FederatedDataset, LabeledSet, SyntheticTaskConfig, TaskData,
};
use oafmtl::seeds::{derive_seed, Stream};

use crate::config::{DataConfig, RunConfig};

/// Build this seed's synthetic dataset (one independent draw per task).
pub fn synthetic_dataset(cfg: &RunConfig, seed: u64) -> Result<FederatedDataset> {
    let DataConfig::Synthetic {
        devices,
        samples_per_device,
        test_samples,
        classes,
        class_separation,
        within_class_noise,
        curvature_min,
        curvature_max,
        target_spread,
    } = &cfg.data
    else {
        bail!("data.source: expected synthetic data");
    };
    let tasks = cfg
        .tasks
        .iter()
        .enumerate()
        .map(|(n, t)| {
            let task_cfg = SyntheticTaskConfig {
                model: t.model,
                dim: t.dim,
                classes: *classes,
                class_separation: *class_separation,
                within_class_noise: *within_class_noise,
                curvature_min: *curvature_min,
                curvature_max: *curvature_max,
                target_spread: *target_spread,
                regularization: t.regularization,
            };
            make_synthetic(
                &task_cfg,
                *devices,
                *samples_per_device,
                *test_samples,
                derive_seed(seed, Stream::Data, n as u64),
            )
        })
        .collect::<oafmtl::Result<Vec<_>>>()?;
    Ok(FederatedDataset::new(tasks)?)
}

/// Split a labeled set round-robin across `devices` (sample i goes to
/// device i mod devices), preserving order within each device.
fn partition(set: &LabeledSet, devices: usize) -> Result<Vec<LabeledSet>> {
    let p = set.feature_dim;
    let mut features = vec![Vec::new(); devices];
    let mut labels = vec![Vec::new(); devices];
    for i in 0..set.len() {
        let m = i % devices;
        features[m].extend_from_slice(set.sample(i));
        labels[m].push(set.labels[i]);
    }
    features
        .into_iter()
        .zip(labels)
        .map(|(f, l)| Ok(LabeledSet::new(f, l, p)?))
        .collect()
}

/// Load the configured IDX files into one dataset (identical across seeds).
pub fn idx_dataset(cfg: &RunConfig) -> Result<FederatedDataset> {
    let DataConfig::Idx { devices, tasks: paths } = &cfg.data else {
        bail!("data.source: expected idx data");
    };
    let mut tasks = Vec::with_capacity(paths.len());
    for (n, (task, p)) in cfg.tasks.iter().zip(paths.iter()).enumerate() {
        let (train, train_classes) = ingest_idx(&p.train_images, &p.train_labels)?;
        let (test, test_classes) = ingest_idx(&p.test_images, &p.test_labels)?;
        if train.feature_dim != test.feature_dim {
            bail!(
                "data.task[{n}]: train features ({}) and test features ({}) disagree",
                train.feature_dim,
                test.feature_dim
            );
        }
        let classes = train_classes.max(test_classes);
        if task.dim != classes * train.feature_dim {
            bail!(
                "task[{n}].dim: parameters are classes x features = {} x {} = {}, got {}",
                classes,
                train.feature_dim,
                classes * train.feature_dim,
                task.dim
            );
        }
        tasks.push(TaskData::Logistic(LogisticTask {
            classes,
            feature_dim: train.feature_dim,
            regularization: task.regularization,
            devices: partition(&train, *devices)?,
            test,
        }));
    }
    Ok(FederatedDataset::new(tasks)?)
}

//! End-to-end run on the toy tasks: three providers upload, then both
//! deployment modes are evaluated against the ground-truth rule.

use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::deploy::{self, InstanceOptions};
use crate::error::Result;
use crate::kernel::KernelConfig;
use crate::market::{EntryMeta, Pool};
use crate::models::{self, DEFAULT_RIDGE};
use crate::rkme::{mmd_sq, ReduceOptions};
use crate::synth::{make_test, make_toy, TestMode, ToyConfig};

pub const PROVIDER_NAMES: [&str; 3] = ["circle", "triangle", "square"];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub toy: ToyConfig,
    pub spec_kernel: KernelConfig,
    pub reduced_size: usize,
    pub model_kernel: KernelConfig,
    pub model_ridge: f64,
    /// Basis centers of each provider's compact classifier.
    pub model_centers: usize,
    pub test_size: usize,
    /// Provider the task-recurrent test set is drawn from.
    pub task_provider: usize,
    pub mixture: Vec<f64>,
    pub mimic_size: Option<usize>,
    pub seed: u64,
}

impl DemoConfig {
    pub fn with_seed(seed: u64) -> Self {
        DemoConfig {
            toy: ToyConfig { seed, ..Default::default() },
            spec_kernel: KernelConfig::gaussian(1.0).expect("valid gamma"),
            reduced_size: 5,
            model_kernel: KernelConfig::gaussian(2.0).expect("valid gamma"),
            model_ridge: DEFAULT_RIDGE,
            model_centers: 40,
            test_size: 400,
            task_provider: 0,
            mixture: vec![0.7, 0.3, 0.0],
            mimic_size: None,
            seed,
        }
    }
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig::with_seed(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    /// Held-out accuracy of each provider's model on its own distribution.
    pub local_accuracy: Vec<f64>,
    /// Squared MMD between each uploaded specification and its raw data.
    pub spec_mmd: Vec<f64>,
    pub task_selected: usize,
    pub task_expected: usize,
    pub task_accuracy: f64,
    pub task_mmd: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub raw_w: Vec<f64>,
    pub instance_accuracy: f64,
    /// Fraction of instance-recurrent points routed to the provider they came from.
    pub routing_accuracy: f64,
}

fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Builds the toy pool (in `root`, or in memory) and returns it with the
/// providers' raw datasets, which never enter the pool.
pub fn build_pool(cfg: &DemoConfig, root: Option<&Path>) -> Result<(Pool, Vec<Dataset>)> {
    let toy = make_toy(&cfg.toy)?;
    let mut pool = match root {
        Some(r) => Pool::create(r, cfg.spec_kernel)?,
        None => Pool::in_memory(cfg.spec_kernel)?,
    };
    let opts = ReduceOptions { seed: cfg.seed, ..Default::default() };
    for (i, data) in toy.providers.iter().enumerate() {
        let model = models::train_krc_compact(&cfg.model_kernel, data, cfg.model_ridge, cfg.model_centers, cfg.seed)?;
        let name = PROVIDER_NAMES.get(i).map_or_else(|| format!("provider{i}"), |s| s.to_string());
        pool.upload(&name, data, model, cfg.reduced_size, EntryMeta::new(&name, "toy inside/outside circle"), &opts)?;
    }
    Ok((pool, toy.providers))
}

pub fn run_demo(cfg: &DemoConfig, root: Option<&Path>) -> Result<DemoReport> {
    let (pool, raw) = build_pool(cfg, root)?;

    let mut local_accuracy = Vec::new();
    let mut spec_mmd = Vec::new();
    for (i, entry) in pool.entries().iter().enumerate() {
        let held_out = make_test(&cfg.toy, &TestMode::TaskRecurrent(i), cfg.test_size, cfg.seed ^ 0xA5A5 ^ i as u64)?;
        let pred = models::predict(&entry.model, &held_out.data.x)?;
        local_accuracy.push(accuracy(&pred, held_out.data.labels()?));
        spec_mmd.push(mmd_sq((&raw[i]).into(), (&entry.spec).into())?);
    }

    let task = make_test(&cfg.toy, &TestMode::TaskRecurrent(cfg.task_provider), cfg.test_size, cfg.seed.wrapping_add(1))?;
    let unlabeled = Dataset::unlabeled(task.data.x.clone())?;
    let tr = deploy::deploy_task_recurrent(&pool, &unlabeled)?;

    let mix = make_test(&cfg.toy, &TestMode::InstanceRecurrent(cfg.mixture.clone()), cfg.test_size, cfg.seed.wrapping_add(2))?;
    let unlabeled = Dataset::unlabeled(mix.data.x.clone())?;
    let opts = InstanceOptions { mimic_size: cfg.mimic_size, seed: cfg.seed, ..Default::default() };
    let ir = deploy::deploy_instance_recurrent(&pool, &unlabeled, &opts)?;
    let routed = ir.chosen.iter().zip(&mix.provider).filter(|(c, p)| c == p).count();

    Ok(DemoReport {
        local_accuracy,
        spec_mmd,
        task_selected: tr.chosen[0],
        task_expected: cfg.task_provider,
        task_accuracy: accuracy(&tr.predictions, task.data.labels()?),
        task_mmd: tr.per_entry_mmd,
        w_hat: ir.weights.w,
        raw_w: ir.weights.raw_w,
        instance_accuracy: accuracy(&ir.predictions, mix.data.labels()?),
        routing_accuracy: routed as f64 / mix.provider.len() as f64,
    })
}

//! Seeded Monte Carlo experiments over policies and materials, with CSV,
//! JSON and plain-text reports.

mod config;
mod report;
mod studies;

pub use config::{apply_overrides, set_path, ConfigError, ExperimentConfig};
pub use report::{
    format_table, read_results_csv, write_histogram_csv, write_outputs, write_results_csv,
    write_strategy_csv, SCHEMA_VERSION,
};
pub use studies::{
    grasp_height_histogram, strategy_comparison, HistogramRow, StaticIntervals, StrategyRow,
};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagsim::MaterialKind;
use crate::policy::{run_episode, EpisodeResult, FailureTag, PolicyKind};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of trial `i` for one (policy, material) cell. Depends only on its
/// arguments, so adding or reordering cells never changes other seeds.
pub fn episode_seed(base_seed: u64, policy: PolicyKind, material: MaterialKind, i: u32) -> u64 {
    let mut h = splitmix64(base_seed);
    h = splitmix64(h ^ fnv1a(policy.name()));
    h = splitmix64(h ^ fnv1a(material.name()));
    splitmix64(h ^ i as u64)
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u32, n: u32) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: u32,
    pub trials: u32,
    /// `None` when there were no trials.
    pub rate: Option<f64>,
    pub ci95: (f64, f64),
}

impl Rate {
    pub fn new(successes: u32, trials: u32) -> Self {
        Self {
            successes,
            trials,
            rate: (trials > 0).then(|| successes as f64 / trials as f64),
            ci95: wilson_interval(successes, trials),
        }
    }

    pub fn value(&self) -> f64 {
        self.rate.unwrap_or(0.0)
    }
}

/// Aggregates of one (policy, material) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub material: MaterialKind,
    pub n: u32,
    pub flatten: Rate,
    /// Among episodes that reached their layer-grasp stage.
    pub single_layer: Rate,
    pub full_success: Rate,
    pub mean_inserted_frac: f64,
    pub mean_contained_frac: f64,
    pub mean_actions: f64,
    pub mean_slip_iterations: f64,
    pub failure_histogram: BTreeMap<FailureTag, u32>,
}

impl CellSummary {
    pub fn from_records(
        policy: PolicyKind,
        material: MaterialKind,
        rows: &[&EpisodeResult],
    ) -> Self {
        let n = rows.len() as u32;
        let count =
            |f: &dyn Fn(&EpisodeResult) -> bool| rows.iter().filter(|r| f(r)).count() as u32;
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| {
            if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
            }
        };
        let mut failure_histogram: BTreeMap<FailureTag, u32> =
            FailureTag::ALL.iter().map(|&t| (t, 0)).collect();
        for r in rows {
            *failure_histogram.entry(r.failure_tag).or_insert(0) += 1;
        }
        Self {
            policy,
            material,
            n,
            flatten: Rate::new(count(&|r| r.flatten_success), n),
            single_layer: Rate::new(
                count(&|r| r.single_layer_success),
                count(&|r| r.grasp_attempted),
            ),
            full_success: Rate::new(count(&|r| r.full_success()), n),
            mean_inserted_frac: mean(&|r| r.objects_inserted as f64 / r.n_objects as f64),
            mean_contained_frac: mean(&|r| r.objects_contained as f64 / r.n_objects as f64),
            mean_actions: mean(&|r| r.flatten_actions as f64),
            mean_slip_iterations: mean(&|r| r.slip_iterations as f64),
            failure_histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub schema_version: u32,
    pub experiment: String,
    pub n_trials: u32,
    pub n_objects: u32,
    pub base_seed: u64,
    pub cells: Vec<CellSummary>,
}

impl SummaryTable {
    /// Groups records by (policy, material) in first-seen order.
    pub fn from_records(cfg: &ExperimentConfig, records: &[EpisodeResult]) -> Self {
        let mut keys: Vec<(PolicyKind, MaterialKind)> = Vec::new();
        for r in records {
            if !keys.contains(&(r.policy, r.material)) {
                keys.push((r.policy, r.material));
            }
        }
        let cells = keys
            .into_iter()
            .map(|(p, m)| {
                let rows: Vec<&EpisodeResult> = records
                    .iter()
                    .filter(|r| r.policy == p && r.material == m)
                    .collect();
                CellSummary::from_records(p, m, &rows)
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment.clone(),
            n_trials: cfg.n_trials,
            n_objects: cfg.n_objects,
            base_seed: cfg.base_seed,
            cells,
        }
    }

    pub fn cell(&self, policy: PolicyKind, material: MaterialKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.material == material)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<EpisodeResult>,
    pub summary: SummaryTable,
}

/// Runs every (policy, material, trial) episode on a worker pool and
/// returns the records in deterministic order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ConfigError> {
    cfg.validate()?;
    let policy_cfg = cfg.policy_config()?;
    let jobs: Vec<(PolicyKind, MaterialKind, u32)> = cfg
        .policies
        .iter()
        .flat_map(|&p| {
            cfg.materials
                .iter()
                .flat_map(move |&m| (0..cfg.n_trials).map(move |i| (p, m, i)))
        })
        .collect();
    let run = || -> Vec<EpisodeResult> {
        jobs.par_iter()
            .map(|&(p, m, i)| run_episode(p, m, &policy_cfg, episode_seed(cfg.base_seed, p, m, i)))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let records = pool.install(run);
    let summary = SummaryTable::from_records(cfg, &records);
    Ok(ExperimentOutput { records, summary })
}

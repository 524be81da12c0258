//! Experiment orchestration: JSON configs, parameter sweeps on a work pool,
//! CSV tables and run manifests.
//!
//! Grid points run in parallel but results are assembled in config order,
//! so the CSV (minus the timing column) is a deterministic function of the
//! config.

mod calcium;
mod common;
mod config;
mod isometry;
mod manifold;
mod output;
mod scaling;
mod vorticity;

use std::path::PathBuf;

pub use calcium::{estimate_traces, run_calcium_experiment, score_compressed, score_traces, CalciumScore};
pub use common::{load_dataset, Compressor, Dataset};
pub use config::{
    CalciumOptions, DatasetSpec, ExperimentConfig, ExperimentKind, ManifoldOptions, Method, ScalingOptions,
    VorticityOptions, VorticitySpec,
};
pub use isometry::run_isometry_sweep;
pub use manifold::{run_manifold_comparison, subsample};
pub use output::{read_manifest, write_outputs, IsometryRow, Manifest, SummaryRow, SweepResult, SweepRow, FAILURE_METRIC};
pub use scaling::{growth_per_doubling, minimal_measurements, run_scaling_study, ScalingPoint};
pub use vorticity::{classify_snapshots, run_vorticity_experiment};

use crate::error::{Result, RfError};

/// Work-pool size from `RFKIT_THREADS`; unset or 0 means one per core.
pub fn thread_count() -> Result<usize> {
    match std::env::var("RFKIT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| RfError::Config(format!("RFKIT_THREADS must be a count, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Runs the experiment named by the config on a dedicated work pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| RfError::Config(format!("cannot start work pool: {e}")))?;
    let mut result = pool.install(|| match config.experiment {
        ExperimentKind::Isometry => run_isometry_sweep(config),
        ExperimentKind::Calcium => run_calcium_experiment(config),
        ExperimentKind::Vorticity => run_vorticity_experiment(config),
        ExperimentKind::Manifold => run_manifold_comparison(config),
        ExperimentKind::Scaling => run_scaling_study(config),
    })?;
    if !config.metrics.is_empty() {
        result
            .rows
            .retain(|r| r.metric == FAILURE_METRIC || config.metrics.contains(&r.metric));
    }
    if let Some(bad) = result.rows.iter().find(|r| r.metric != FAILURE_METRIC && !r.value.is_finite()) {
        return Err(RfError::Numeric {
            point: 0,
            reason: format!("non-finite {} for {} at ratio {}", bad.metric, bad.method, bad.ratio),
        });
    }
    Ok(result)
}

/// Runs the experiment and writes its outputs; returns the result and the
/// manifest path.
pub fn run_and_write(config: &ExperimentConfig) -> Result<(SweepResult, PathBuf)> {
    let result = run_experiment(config)?;
    let threads = match thread_count()? {
        0 => rayon::current_num_threads(),
        t => t,
    };
    let manifest = write_outputs(config, &result, threads)?;
    Ok((result, manifest))
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// One measurement. `variant` names the sweep axis a row belongs to, e.g.
/// `ratio`, `noise=0.1` or `P=8`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: String,
    pub variant: String,
    pub method: String,
    pub ratio: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_time_ms: u64,
}

/// Marks a grid point that could not be evaluated; the only rows allowed to
/// carry a non-finite value.
pub const FAILURE_METRIC: &str = "failure";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryRow {
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub ratio: f64,
    pub delta: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub variant: String,
    pub method: String,
    pub ratio: f64,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Wide per-embedding isometry records, when the experiment computes them.
    pub isometry: Vec<IsometryRow>,
    /// Content hashes of intermediate matrices, keyed by grid point.
    pub hashes: BTreeMap<String, String>,
    /// Extra files (name, contents) written next to the CSV.
    pub sidecars: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct RowNoTiming<'a> {
    experiment: &'a str,
    variant: &'a str,
    method: &'a str,
    ratio: f64,
    seed: u64,
    metric: &'a str,
    value: f64,
}

impl SweepResult {
    pub fn values<'a>(
        &'a self,
        variant: &'a str,
        method: &'a str,
        ratio: f64,
        metric: &'a str,
    ) -> impl Iterator<Item = f64> + 'a {
        self.rows
            .iter()
            .filter(move |r| {
                r.variant == variant && r.method == method && r.ratio == ratio && r.metric == metric
            })
            .map(|r| r.value)
    }

    /// Mean of the matching rows, `None` when there are none.
    pub fn mean(&self, variant: &str, method: &str, ratio: f64, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self.values(variant, method, ratio, metric).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.metric == FAILURE_METRIC)
    }

    /// Mean and sample standard deviation per (variant, method, ratio,
    /// metric), in first-appearance order. Failure rows are skipped.
    pub fn summary(&self) -> Vec<SummaryRow> {
        // (variant, method, ratio bits, metric)
        type Key = (String, String, u64, String);
        let mut order: Vec<Key> = Vec::new();
        let mut groups: BTreeMap<Key, (String, f64, Vec<f64>)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.metric != FAILURE_METRIC) {
            let key = (r.variant.clone(), r.method.clone(), r.ratio.to_bits(), r.metric.clone());
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    (r.experiment.clone(), r.ratio, Vec::new())
                })
                .2
                .push(r.value);
        }
        order
            .into_iter()
            .map(|key| {
                let (experiment, ratio, v) = &groups[&key];
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    experiment: experiment.clone(),
                    variant: key.0,
                    method: key.1,
                    ratio: *ratio,
                    metric: key.3,
                    count: v.len(),
                    mean,
                    std,
                }
            })
            .collect()
    }

    /// The sweep table as CSV; without timing the output is a deterministic
    /// function of the config.
    pub fn to_csv(&self, with_timing: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if with_timing {
            for r in &self.rows {
                w.serialize(r)?;
            }
        } else {
            for r in &self.rows {
                w.serialize(RowNoTiming {
                    experiment: &r.experiment,
                    variant: &r.variant,
                    method: &r.method,
                    ratio: r.ratio,
                    seed: r.seed,
                    metric: &r.metric,
                    value: r.value,
                })?;
            }
        }
        to_string(w)
    }

    pub fn isometry_csv(&self) -> Result<String> {
        write_all(&self.isometry)
    }

    pub fn summary_csv(&self) -> Result<String> {
        write_all(&self.summary())
    }
}

fn write_all<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    to_string(w)
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub experiment: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub intermediate_hashes: BTreeMap<String, String>,
    pub failures: usize,
}

/// Writes the sweep CSV, summary, optional isometry table, sidecars and the
/// manifest into `config.output_dir`. Returns the manifest path.
pub fn write_outputs(config: &ExperimentConfig, result: &SweepResult, threads: usize) -> Result<PathBuf> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let mut put = |name: String, contents: &str| -> Result<()> {
        std::fs::write(dir.join(&name), contents)?;
        outputs.push(name);
        Ok(())
    };
    put(format!("{}.csv", config.id), &result.to_csv(true)?)?;
    put(format!("{}_summary.csv", config.id), &result.summary_csv()?)?;
    if !result.isometry.is_empty() {
        put(format!("{}_isometry.csv", config.id), &result.isometry_csv()?)?;
    }
    for (name, contents) in &result.sidecars {
        put(format!("{}_{name}", config.id), contents)?;
    }
    let manifest = Manifest {
        id: config.id.clone(),
        experiment: config.experiment.as_str().into(),
        config_sha256: config.hash(),
        config: config.clone(),
        seeds: config.seed_list(),
        versions: BTreeMap::from([
            ("rfkit".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("matrix_format".to_string(), "RFM1".to_string()),
        ]),
        threads,
        outputs,
        intermediate_hashes: result.hashes.clone(),
        failures: result.failures().count(),
    };
    let path = dir.join(format!("{}_manifest.json", config.id));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

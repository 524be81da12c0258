use rayon::prelude::*;

use super::common::{load_dataset, ratio_key, timed, Compressor, Dataset};
use super::config::{ExperimentConfig, ManifoldOptions, Method};
use super::output::{SweepResult, SweepRow, FAILURE_METRIC};
use crate::baselines::lle_embed;
use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;
use crate::metrics::{procrustes_distance, PairSampling, PairwiseDistances};
use crate::operator::RfOperator;
use crate::rng::{derive_seed, SplitMix64};

const PCA_STREAM: u64 = 1;
const RF_SUBSET_STREAM: u64 = 2;
const PAIR_STREAM: u64 = 3;

/// `round(fraction·k)` distinct sorted indices out of `0..k`.
pub fn subsample(k: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let take = ((fraction * k as f64).round() as usize).clamp(2.min(k), k);
    let mut idx: Vec<usize> = (0..k).collect();
    let mut rng = SplitMix64::new(seed);
    for i in 0..take {
        let j = i + rng.next_below((k - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(take);
    idx.sort_unstable();
    idx
}

fn sampling(opts: &ManifoldOptions, seed: u64) -> PairSampling {
    if opts.pair_samples == 0 {
        PairSampling::Exhaustive
    } else {
        PairSampling::Random {
            count: opts.pair_samples,
            seed: derive_seed(seed, PAIR_STREAM),
        }
    }
}

enum Job {
    Rf { ratio: f64, seed: u64 },
    Pca { ratio: f64, repeat: usize },
}

/// Rows from one job; failures are recorded in place of a metric.
type JobRows = Vec<(Method, f64, u64, &'static str, &'static str, f64)>;
/// Rows, optional (hash key, hash) and wall time of one job.
type JobOutput = (JobRows, Option<(String, String)>, u64);

/// RF against PCA on one dataset: isometry constants on random subsamples,
/// then LLE on the original and compressed data compared by Procrustes
/// distance.
pub fn run_manifold_comparison(config: &ExperimentConfig) -> Result<SweepResult> {
    let data = load_dataset(&config.dataset)?;
    manifold_on(config, &data)
}

pub(crate) fn manifold_on(config: &ExperimentConfig, data: &Dataset) -> Result<SweepResult> {
    let opts = &config.manifold;
    if !(opts.subsample_fraction > 0.0 && opts.subsample_fraction <= 1.0) {
        return Err(RfError::Config(format!(
            "subsample_fraction {} outside (0, 1]",
            opts.subsample_fraction
        )));
    }
    let x = &data.matrix;
    let k = x.cols();
    let mut result = SweepResult::default();
    let reference = if opts.compute_lle {
        match lle_embed(x, &opts.lle) {
            Ok(l) => Some(l),
            Err(e @ (RfError::Connectivity { .. } | RfError::Numeric { .. })) => {
                result.rows.push(SweepRow {
                    experiment: config.id.clone(),
                    variant: "lle".into(),
                    method: "original".into(),
                    ratio: 1.0,
                    seed: config.base_seed,
                    metric: FAILURE_METRIC.into(),
                    value: f64::NAN,
                    wall_time_ms: 0,
                });
                result.sidecars.insert("lle_failure.txt".into(), e.to_string());
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &ratio in &config.ratios {
            match method {
                Method::Rf => jobs.extend(config.seed_list().into_iter().map(|seed| Job::Rf { ratio, seed })),
                Method::Pca => {
                    let repeats = if opts.compute_delta { opts.pca_repeats } else { 0 }
                        .max(if reference.is_some() { opts.lle_repeats } else { 0 });
                    jobs.extend((0..repeats).map(|repeat| Job::Pca { ratio, repeat }));
                }
                Method::Lpf => {
                    return Err(RfError::Config("LPF is not a baseline for the manifold comparison".into()))
                }
            }
        }
    }

    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|job| {
            let (out, ms) = timed(|| -> Result<_> {
                let mut rows: JobRows = Vec::new();
                let mut hash = None;
                match *job {
                    Job::Rf { ratio, seed } => {
                        let op = RfOperator::for_ratio(x.rows(), ratio, seed)?;
                        let z = op.apply_batch(x)?;
                        hash = Some((format!("rf/{}/s{seed}", ratio_key(ratio)), z.content_hash()));
                        if opts.compute_delta {
                            let mut sum = 0.0;
                            for s in 0..opts.rf_subsets.max(1) {
                                let tag = derive_seed(derive_seed(seed, RF_SUBSET_STREAM), s as u64);
                                let idx = subsample(k, opts.subsample_fraction, tag);
                                let d = PairwiseDistances::new(&x.select_columns(&idx), sampling(opts, tag))?;
                                sum += d.isometry(&z.select_columns(&idx))?.delta;
                            }
                            rows.push((Method::Rf, ratio, seed, "delta", "delta", sum / opts.rf_subsets.max(1) as f64));
                        }
                        if let Some(l0) = &reference {
                            rows.push(lle_row(Method::Rf, ratio, seed, &z, l0, opts)?);
                        }
                    }
                    Job::Pca { ratio, repeat } => {
                        let tag = derive_seed(derive_seed(config.base_seed, PCA_STREAM), repeat as u64);
                        let idx = subsample(k, opts.subsample_fraction, tag);
                        let sub = x.select_columns(&idx);
                        let c = Compressor::build(Method::Pca, ratio, 0, data, &sub)?;
                        let r = repeat as u64;
                        if opts.compute_delta && repeat < opts.pca_repeats {
                            let d = PairwiseDistances::new(&sub, sampling(opts, tag))?;
                            rows.push((Method::Pca, ratio, r, "delta", "delta", d.isometry(&c.apply(&sub)?)?.delta));
                        }
                        if let (Some(l0), true) = (&reference, repeat < opts.lle_repeats) {
                            rows.push(lle_row(Method::Pca, ratio, r, &c.apply(x)?, l0, opts)?);
                        }
                    }
                }
                Ok((rows, hash))
            });
            out.map(|(rows, hash)| (rows, hash, ms))
        })
        .collect::<Result<_>>()?;

    for (rows, hash, ms) in outputs {
        if let Some((key, h)) = hash {
            result.hashes.insert(key, h);
        }
        for (method, ratio, seed, variant, metric, value) in rows {
            result.rows.push(SweepRow {
                experiment: config.id.clone(),
                variant: variant.into(),
                method: method.to_string(),
                ratio,
                seed,
                metric: metric.into(),
                value,
                wall_time_ms: ms,
            });
        }
    }
    // Group the isometry rows ahead of the LLE rows.
    result.rows.sort_by_key(|r| r.variant != "delta");
    Ok(result)
}

fn lle_row(
    method: Method,
    ratio: f64,
    seed: u64,
    y: &DataMatrix,
    reference: &DataMatrix,
    opts: &ManifoldOptions,
) -> Result<(Method, f64, u64, &'static str, &'static str, f64)> {
    match lle_embed(y, &opts.lle) {
        Ok(l) => Ok((method, ratio, seed, "lle", "procrustes", procrustes_distance(reference, &l, true)?)),
        Err(RfError::Connectivity { .. } | RfError::Numeric { .. }) => {
            Ok((method, ratio, seed, "lle", FAILURE_METRIC, f64::NAN))
        }
        Err(e) => Err(e),
    }
}

use rayon::prelude::*;

use super::common::{load_dataset, ratio_key, timed, Compressor, Dataset};
use super::config::{ExperimentConfig, Method};
use super::output::{IsometryRow, SweepResult, SweepRow};
use crate::error::Result;
use crate::metrics::{IsometryReport, PairSampling, PairwiseDistances};

struct Point {
    method: Method,
    ratio: f64,
    seed: u64,
}

/// Isometry constant of each method at each ratio and seed. LPF and PCA do
/// not depend on the seed; they are evaluated once per ratio and repeated
/// for every seed so the table stays rectangular.
pub fn run_isometry_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let data = load_dataset(&config.dataset)?;
    isometry_on(config, &data)
}

pub(crate) fn isometry_on(config: &ExperimentConfig, data: &Dataset) -> Result<SweepResult> {
    let sampling = match config.pair_samples {
        Some(count) => PairSampling::Random {
            count,
            seed: config.base_seed,
        },
        None => PairSampling::Exhaustive,
    };
    let dist = PairwiseDistances::new(&data.matrix, sampling)?;
    let seeds = config.seed_list();
    let mut points = Vec::new();
    for &method in &config.methods {
        for &ratio in &config.ratios {
            let seeds_here: &[u64] = if method == Method::Rf { &seeds } else { &seeds[..1] };
            for &seed in seeds_here {
                points.push(Point { method, ratio, seed });
            }
        }
    }
    let evaluated: Vec<(IsometryReport, usize, String, u64)> = points
        .par_iter()
        .map(|p| {
            let (out, ms) = timed(|| -> Result<_> {
                let c = Compressor::build(p.method, p.ratio, p.seed, data, &data.matrix)?;
                let y = c.apply(&data.matrix)?;
                Ok((dist.isometry(&y)?, c.m(), y.content_hash()))
            });
            out.map(|(rep, m, hash)| (rep, m, hash, ms))
        })
        .collect::<Result<_>>()?;

    let mut result = SweepResult::default();
    let n = data.matrix.rows();
    for (p, (rep, m, hash, ms)) in points.iter().zip(evaluated) {
        let seeds_here: &[u64] = if p.method == Method::Rf { &[p.seed] } else { &seeds };
        result
            .hashes
            .insert(format!("{}/{}/{}/s{}", data.name, p.method, ratio_key(p.ratio), p.seed), hash);
        for &seed in seeds_here {
            for (metric, value) in [
                ("delta", rep.delta),
                ("delta_lower", rep.delta_lower),
                ("delta_upper", rep.delta_upper),
            ] {
                result.rows.push(SweepRow {
                    experiment: config.id.clone(),
                    variant: data.name.clone(),
                    method: p.method.to_string(),
                    ratio: p.ratio,
                    seed,
                    metric: metric.into(),
                    value,
                    wall_time_ms: ms,
                });
            }
            result.isometry.push(IsometryRow {
                method: p.method.to_string(),
                n,
                m,
                ratio: p.ratio,
                delta: rep.delta,
                delta_lower: rep.delta_lower,
                delta_upper: rep.delta_upper,
                seed,
            });
        }
    }
    Ok(result)
}

use rayon::prelude::*;

use super::common::timed;
use super::config::{DatasetSpec, ExperimentConfig};
use super::output::{SweepResult, SweepRow};
use crate::error::{Result, RfError};
use crate::generators::{sine_manifold_matrix, uniform_times, SineManifoldSpec};
use crate::matrix::DataMatrix;
use crate::metrics::PairwiseDistances;
use crate::operator::RfOperator;

/// Smallest `m` found for one ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub m_star: usize,
    /// The target was not met even at `m = n`.
    pub censored: bool,
    pub probes: usize,
}

fn mean_delta(x: &DataMatrix, dist: &PairwiseDistances, m: usize, seeds: &[u64]) -> Result<f64> {
    let deltas: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let op = RfOperator::new(x.rows(), m, s)?;
            Ok(dist.isometry(&op.apply_batch(x)?)?.delta)
        })
        .collect::<Result<_>>()?;
    Ok(deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// Binary search for the smallest `m` whose seed-averaged isometry constant
/// is at most `target`, assuming the mean is monotone in `m`.
pub fn minimal_measurements(x: &DataMatrix, seeds: &[u64], target: f64) -> Result<ScalingPoint> {
    let n = x.rows();
    let dist = PairwiseDistances::exhaustive(x)?;
    let mut probes = 1;
    if mean_delta(x, &dist, n, seeds)? > target {
        return Ok(ScalingPoint {
            n,
            m_star: n,
            censored: true,
            probes,
        });
    }
    let (mut lo, mut hi) = (1, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        probes += 1;
        if mean_delta(x, &dist, mid, seeds)? <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(ScalingPoint {
        n,
        m_star: lo,
        censored: false,
        probes,
    })
}

/// Least-squares slope of `log2 m*` against `log2 n`, as a growth factor
/// per doubling of `n`.
pub fn growth_per_doubling(points: &[ScalingPoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.m_star as f64).log2()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| 2f64.powf(sxy / sxx))
}

/// `m*` for each sine-manifold cutoff in the scaling options. The dataset
/// supplies the sample count.
pub fn run_scaling_study(config: &ExperimentConfig) -> Result<SweepResult> {
    let DatasetSpec::Sine { samples, .. } = config.dataset else {
        return Err(RfError::Config("the scaling study needs a sine dataset".into()));
    };
    let opts = &config.scaling;
    if opts.f_c.is_empty() || !(opts.target_delta > 0.0) {
        return Err(RfError::Config("need cutoffs and a positive target".into()));
    }
    let seeds = config.seed_list();
    let mut result = SweepResult::default();
    let mut points = Vec::new();
    let mut row = |variant: String, ratio: f64, metric: &str, value: f64, ms: u64| {
        result.rows.push(SweepRow {
            experiment: config.id.clone(),
            variant,
            method: "rf".into(),
            ratio,
            seed: config.base_seed,
            metric: metric.into(),
            value,
            wall_time_ms: ms,
        })
    };
    for &f_c in &opts.f_c {
        let (p, ms) = timed(|| -> Result<_> {
            let x = sine_manifold_matrix(&SineManifoldSpec {
                f_c,
                t_samples: uniform_times(samples),
            })?;
            minimal_measurements(&x, &seeds, opts.target_delta)
        });
        let p = p?;
        let variant = format!("n={}", p.n);
        let ratio = p.n as f64 / p.m_star as f64;
        row(variant.clone(), ratio, "m_star", p.m_star as f64, ms);
        row(variant.clone(), ratio, "n", p.n as f64, ms);
        row(variant, ratio, "censored", f64::from(u8::from(p.censored)), ms);
        points.push(p);
    }
    if let Some(g) = growth_per_doubling(&points) {
        row("fit".into(), 0.0, "growth_per_doubling", g, 0);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_fit() {
        let pts = |ms: &[usize]| -> Vec<ScalingPoint> {
            ms.iter()
                .enumerate()
                .map(|(i, &m)| ScalingPoint {
                    n: 100 << i,
                    m_star: m,
                    censored: false,
                    probes: 0,
                })
                .collect()
        };
        assert!((growth_per_doubling(&pts(&[10, 20, 40])).unwrap() - 2.0).abs() < 1e-12);
        assert!((growth_per_doubling(&pts(&[10, 10, 10])).unwrap() - 1.0).abs() < 1e-12);
        assert!(growth_per_doubling(&pts(&[10])).is_none());
    }

    #[test]
    fn search_finds_threshold() {
        let x = sine_manifold_matrix(&SineManifoldSpec {
            f_c: 16,
            t_samples: uniform_times(30),
        })
        .unwrap();
        let seeds = [0, 1, 2];
        let p = minimal_measurements(&x, &seeds, 1.0 / 3.0).unwrap();
        assert!(!p.censored);
        let dist = PairwiseDistances::exhaustive(&x).unwrap();
        assert!(mean_delta(&x, &dist, p.m_star, &seeds).unwrap() <= 1.0 / 3.0);
        if p.m_star > 1 {
            assert!(mean_delta(&x, &dist, p.m_star - 1, &seeds).unwrap() > 1.0 / 3.0);
        }
    }

    #[test]
    fn full_sampling_always_meets_target() {
        let x = sine_manifold_matrix(&SineManifoldSpec {
            f_c: 4,
            t_samples: uniform_times(9),
        })
        .unwrap();
        let p = minimal_measurements(&x, &[0], 1e-9).unwrap();
        assert!(!p.censored);
    }
}

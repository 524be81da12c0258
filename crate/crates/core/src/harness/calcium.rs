use rayon::prelude::*;

use super::common::{ratio_key, timed, Compressor, Dataset};
use super::config::{CalciumOptions, DatasetSpec, ExperimentConfig, Method};
use super::output::{SweepResult, SweepRow};
use crate::error::{Result, RfError};
use crate::estimation::{estimate_trace_compressed, estimate_trace_original, EventDetector};
use crate::generators::{generate_cell_scene, CalciumParams, CellScene};
use crate::matrix::{Column, DataMatrix};
use crate::metrics::{f1_score, DetectionScore};

/// Detection scores for one compressed movie.
#[derive(Clone, Debug, PartialEq)]
pub struct CalciumScore {
    /// At the configured threshold.
    pub fixed: DetectionScore,
    /// Highest F1 over the threshold sweep.
    pub best_f1: f64,
    pub best_k_sigma: f64,
}

/// Per-cell trace estimates from a compressed movie and compressed
/// profiles. A profile the map sends to zero yields no trace.
pub fn estimate_traces(z: &DataMatrix, profiles_c: &DataMatrix) -> Result<Vec<Option<Vec<f64>>>> {
    (0..profiles_c.cols())
        .into_par_iter()
        .map(|c| {
            let est = match profiles_c.column(c) {
                Column::Complex(a) => estimate_trace_compressed(z, a),
                Column::Real(a) => estimate_trace_original(z, a),
            };
            match est {
                Ok(t) => Ok(Some(t)),
                Err(RfError::DegenerateProfile) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Pooled detection counts over all cells.
pub fn score_traces(
    traces: &[Option<Vec<f64>>],
    scene: &CellScene,
    detector: EventDetector,
    tol_frames: f64,
) -> Result<DetectionScore> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (trace, truth) in traces.iter().zip(&scene.events) {
        let detected: Vec<f64> = match trace {
            Some(t) => detector.detect(t)?.into_iter().map(|f| f as f64).collect(),
            None => Vec::new(),
        };
        let s = f1_score(&detected, truth, tol_frames);
        tp += s.tp;
        fp += s.fp;
        fn_ += s.fn_;
    }
    Ok(DetectionScore::from_counts(tp, fp, fn_))
}

/// Compress movie and profiles with the same map, estimate every trace,
/// detect events and score them.
pub fn score_compressed(
    compressor: &Compressor,
    scene: &CellScene,
    movie: &DataMatrix,
    opts: &CalciumOptions,
) -> Result<(CalciumScore, String)> {
    let z = compressor.apply(movie)?;
    let a = compressor.apply(&scene.profiles)?;
    let traces = estimate_traces(&z, &a)?;
    let fixed = score_traces(&traces, scene, EventDetector::new(opts.k_sigma, opts.refractory), opts.tol_frames)?;
    let (mut best_f1, mut best_k_sigma) = (fixed.f1, opts.k_sigma);
    for &k in &opts.k_sigma_sweep {
        let s = score_traces(&traces, scene, EventDetector::new(k, opts.refractory), opts.tol_frames)?;
        if s.f1 > best_f1 {
            best_f1 = s.f1;
            best_k_sigma = k;
        }
    }
    Ok((
        CalciumScore {
            fixed,
            best_f1,
            best_k_sigma,
        },
        z.content_hash(),
    ))
}

struct Variant {
    name: String,
    params: CalciumParams,
    ratios: Vec<f64>,
}

/// Event-detection F1 against ground truth, swept over compression ratio,
/// noise level and overlap probability. The scene is fixed by the dataset
/// seed; the config seeds vary the RF operator.
pub fn run_calcium_experiment(config: &ExperimentConfig) -> Result<SweepResult> {
    let DatasetSpec::Calcium(base) = &config.dataset else {
        return Err(RfError::Config("the calcium experiment needs a calcium dataset".into()));
    };
    let opts = &config.calcium;
    let mut variants = vec![Variant {
        name: "ratio".into(),
        params: base.clone(),
        ratios: config.ratios.clone(),
    }];
    for &noise in &opts.noise_levels {
        variants.push(Variant {
            name: format!("noise={noise}"),
            params: CalciumParams {
                noise_sigma: noise,
                ..base.clone()
            },
            ratios: vec![opts.sweep_ratio],
        });
    }
    for &overlap in &opts.overlap_levels {
        variants.push(Variant {
            name: format!("overlap={overlap}"),
            params: CalciumParams {
                overlap_prob: overlap,
                ..base.clone()
            },
            ratios: vec![opts.sweep_ratio],
        });
    }

    let seeds = config.seed_list();
    let mut result = SweepResult::default();
    for (vi, v) in variants.iter().enumerate() {
        let (scene, movie) = generate_cell_scene(&v.params)?;
        if vi == 0 {
            result.sidecars.insert("scene.json".into(), scene.to_json());
        }
        let data = Dataset {
            name: "calcium".into(),
            grid_shape: vec![v.params.height, v.params.width],
            matrix: movie,
        };
        let mut points = Vec::new();
        for &method in &config.methods {
            for &ratio in &v.ratios {
                let seeds_here: &[u64] = if method == Method::Rf { &seeds } else { &seeds[..1] };
                for &seed in seeds_here {
                    points.push((method, ratio, seed));
                }
            }
        }
        let scored: Vec<((CalciumScore, String), u64)> = points
            .par_iter()
            .map(|&(method, ratio, seed)| {
                let (out, ms) = timed(|| {
                    let c = Compressor::build(method, ratio, seed, &data, &data.matrix)?;
                    score_compressed(&c, &scene, &data.matrix, opts)
                });
                out.map(|o| (o, ms))
            })
            .collect::<Result<_>>()?;
        for (&(method, ratio, seed), ((score, hash), ms)) in points.iter().zip(scored) {
            result.hashes.insert(
                format!("{}/{method}/{}/s{seed}", v.name, ratio_key(ratio)),
                hash,
            );
            let seeds_here: &[u64] = if method == Method::Rf { &[seed] } else { &seeds };
            for &s in seeds_here {
                for (metric, value) in [
                    ("f1", score.fixed.f1),
                    ("precision", score.fixed.precision),
                    ("recall", score.fixed.recall),
                    ("f1_best", score.best_f1),
                    ("k_sigma_best", score.best_k_sigma),
                ] {
                    result.rows.push(SweepRow {
                        experiment: config.id.clone(),
                        variant: v.name.clone(),
                        method: method.to_string(),
                        ratio,
                        seed: s,
                        metric: metric.into(),
                        value,
                        wall_time_ms: ms,
                    });
                }
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentKind;

    /// A noiseless scene whose footprints are pairwise disjoint, so every
    /// estimated trace is exact.
    fn small() -> ExperimentConfig {
        let params = (0..)
            .map(|seed| CalciumParams {
                width: 32,
                height: 32,
                n_cells: 6,
                t_frames: 200,
                noise_sigma: 0.0,
                overlap_prob: 0.0,
                seed,
                ..CalciumParams::default()
            })
            .find(|p| {
                let (scene, _) = generate_cell_scene(p).unwrap();
                (0..6).all(|i| {
                    (0..i).all(|j| scene.profile(i).iter().zip(scene.profile(j)).all(|(a, b)| a * b == 0.0))
                })
            })
            .unwrap();
        let mut c = ExperimentConfig::new("ca", ExperimentKind::Calcium, DatasetSpec::Calcium(params));
        c.ratios = vec![1.0];
        c.seeds = 2;
        c.methods = vec![Method::Rf];
        c.calcium.noise_levels = vec![];
        c.calcium.overlap_levels = vec![];
        c
    }

    #[test]
    fn noiseless_uncompressed_is_perfect() {
        let r = run_calcium_experiment(&small()).unwrap();
        for v in r.values("ratio", "rf", 1.0, "f1") {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.rows.len(), 2 * 5);
        assert!(r.values("ratio", "rf", 1.0, "f1").count() == 2);
        assert!(r.sidecars.contains_key("scene.json"));
    }

    #[test]
    fn sweep_variants_present() {
        let mut c = small();
        c.methods = vec![Method::Rf, Method::Lpf];
        c.calcium.noise_levels = vec![0.1];
        c.calcium.overlap_levels = vec![0.5];
        c.calcium.sweep_ratio = 4.0;
        let r = run_calcium_experiment(&c).unwrap();
        assert_eq!(r.values("noise=0.1", "lpf", 4.0, "f1").count(), 2);
        assert_eq!(r.values("overlap=0.5", "rf", 4.0, "f1").count(), 2);
    }

    #[test]
    fn wrong_dataset_rejected() {
        let mut c = small();
        c.dataset = DatasetSpec::Sine { f_c: 4, samples: 4 };
        assert!(matches!(run_calcium_experiment(&c), Err(RfError::Config(_))));
    }
}

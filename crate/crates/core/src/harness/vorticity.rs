use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::common::{timed, vorticity_params, Compressor, Dataset};
use super::config::{DatasetSpec, ExperimentConfig, Method};
use super::output::{SweepResult, SweepRow, FAILURE_METRIC};
use crate::error::{Result, RfError};
use crate::estimation::{classify_original, CompressedTemplates, TemplateSet};
use crate::generators::{forcing_field, phase_grid, solve_vorticity, Grid, VorticityField};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, SplitMix64};
use crate::Complex64;

struct Variant {
    name: String,
    phases: usize,
    noise: f64,
    ratios: Vec<f64>,
}

/// True phase index of each trial for a candidate count.
fn draw_trials(base_seed: u64, phases: usize, trials: usize) -> Vec<usize> {
    let mut rng = SplitMix64::new(derive_seed(base_seed, phases as u64));
    (0..trials).map(|_| rng.next_below(phases as u64) as usize).collect()
}

fn add_noise(x: &DataMatrix, sigma: f64, seed: u64) -> DataMatrix {
    if sigma == 0.0 {
        return x.clone();
    }
    let mut rng = SplitMix64::new(seed);
    let v: Vec<f64> = x
        .as_real()
        .expect("real snapshots")
        .iter()
        .map(|w| {
            let g: f64 = StandardNormal.sample(&mut rng);
            w + sigma * g
        })
        .collect();
    DataMatrix::from_real(x.rows(), x.cols(), v).expect("same shape")
}

fn normalized(x: &DataMatrix) -> DataMatrix {
    let cols: Vec<Vec<Complex64>> = x
        .columns()
        .map(|c| {
            let norm = c.norm_sqr().sqrt();
            let s = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            c.to_complex().into_iter().map(|v| v * s).collect()
        })
        .collect();
    DataMatrix::from_complex_columns(x.rows(), &cols).expect("same shape")
}

/// Labels for every column of `snapshots` after compression.
pub fn classify_snapshots(
    compressor: &Compressor,
    templates: &DataMatrix,
    snapshots: &DataMatrix,
    normalize: bool,
) -> Result<Vec<usize>> {
    let z = compressor.apply(snapshots)?;
    match (compressor, normalize) {
        (Compressor::Rf(op), false) => {
            let ct = CompressedTemplates::new(op, &TemplateSet::indexed(templates.clone())?)?;
            (0..z.cols())
                .map(|j| ct.classify(z.complex_column(j).expect("complex output")))
                .collect()
        }
        _ => {
            let mut t = compressor.apply(templates)?;
            let mut z = z;
            if normalize {
                t = normalized(&t);
                z = normalized(&z);
            }
            let ts = TemplateSet::indexed(t)?;
            (0..z.cols()).map(|j| classify_original(z.column(j), &ts)).collect()
        }
    }
}

/// Phase classification of forced-flow snapshots from compressed data, swept
/// over compression ratio, noise level and candidate count. Each trial draws
/// its true phase uniformly; every snapshot of the trajectory is classified
/// against the compressed forcing templates.
pub fn run_vorticity_experiment(config: &ExperimentConfig) -> Result<SweepResult> {
    let DatasetSpec::Vorticity(spec) = &config.dataset else {
        return Err(RfError::Config("the vorticity experiment needs a vorticity dataset".into()));
    };
    if config.methods.contains(&Method::Pca) {
        return Err(RfError::Config("PCA is not a baseline for the vorticity experiment".into()));
    }
    let opts = &config.vorticity;
    let mut variants = vec![Variant {
        name: "ratio".into(),
        phases: opts.phases,
        noise: opts.noise,
        ratios: config.ratios.clone(),
    }];
    for &noise in &opts.noise_levels {
        variants.push(Variant {
            name: format!("noise={noise}"),
            phases: opts.phases,
            noise,
            ratios: vec![opts.sweep_ratio],
        });
    }
    for &p in &opts.phase_counts {
        variants.push(Variant {
            name: format!("P={p}"),
            phases: p,
            noise: opts.noise,
            ratios: vec![opts.sweep_ratio],
        });
    }
    if let Some(v) = variants.iter().find(|v| v.phases == 0) {
        return Err(RfError::Config(format!("{}: need at least one candidate phase", v.name)));
    }
    if opts.trials == 0 {
        return Err(RfError::Config("trials must be at least 1".into()));
    }

    // Solve every distinct (candidate count, phase index) trajectory once.
    let mut needed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in variants.iter().filter(|v| v.phases > 1) {
        let grid = phase_grid(v.phases);
        for i in draw_trials(config.base_seed, v.phases, opts.trials) {
            needed.insert((v.phases, i), grid[i]);
        }
    }
    let keys: Vec<(usize, usize)> = needed.keys().copied().collect();
    let solved: Vec<(std::result::Result<VorticityField, f64>, u64)> = keys
        .par_iter()
        .map(|k| {
            let (r, ms) = timed(|| solve_vorticity(&vorticity_params(spec, needed[k])));
            match r {
                Ok(f) => Ok((Ok(f), ms)),
                Err(RfError::Divergence { time }) => Ok((Err(time), ms)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let solutions: BTreeMap<(usize, usize), _> = keys.into_iter().zip(solved).collect();

    let grid = Grid::square(spec.grid);
    let seeds = config.seed_list();
    let mut result = SweepResult::default();
    let row = |variant: &str, method: &str, ratio: f64, seed: u64, metric: &str, value: f64, ms: u64| SweepRow {
        experiment: config.id.clone(),
        variant: variant.into(),
        method: method.into(),
        ratio,
        seed,
        metric: metric.into(),
        value,
        wall_time_ms: ms,
    };
    for (vi, v) in variants.iter().enumerate() {
        let truths = if v.phases > 1 {
            draw_trials(config.base_seed, v.phases, opts.trials)
        } else {
            vec![0; opts.trials]
        };
        for (t, &truth) in truths.iter().enumerate() {
            if let Some((Err(time), ms)) = solutions.get(&(v.phases, truth)) {
                result.rows.push(row(&v.name, "solver", 0.0, t as u64, FAILURE_METRIC, *time, *ms));
            }
        }
        let templates = {
            let cols: Vec<Vec<f64>> = phase_grid(v.phases)
                .iter()
                .map(|&p| forcing_field(&grid, p).as_real().expect("real").to_vec())
                .collect();
            DataMatrix::from_real_columns(grid.len(), &cols)?
        };
        let data = Dataset {
            name: "vorticity".into(),
            matrix: DataMatrix::zeros_real(grid.len(), 1),
            grid_shape: grid.shape(),
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
        let scored: Vec<(f64, u64)> = points
            .par_iter()
            .map(|&(method, ratio, seed)| {
                let (out, ms) = timed(|| -> Result<f64> {
                    if v.phases == 1 {
                        return Ok(0.0);
                    }
                    let c = Compressor::build(method, ratio, seed, &data, &data.matrix)?;
                    let (mut wrong, mut total) = (0usize, 0usize);
                    for (t, &truth) in truths.iter().enumerate() {
                        let Some((Ok(field), _)) = solutions.get(&(v.phases, truth)) else {
                            continue;
                        };
                        let noise_seed = derive_seed(derive_seed(seed, vi as u64), t as u64);
                        let noisy = add_noise(&field.omega, v.noise, noise_seed);
                        let labels = classify_snapshots(&c, &templates, &noisy, opts.normalize)?;
                        wrong += labels.iter().filter(|&&l| l != truth).count();
                        total += labels.len();
                    }
                    Ok(if total == 0 { f64::NAN } else { wrong as f64 / total as f64 })
                });
                out.map(|e| (e, ms))
            })
            .collect::<Result<_>>()?;
        for (&(method, ratio, seed), (err, ms)) in points.iter().zip(scored) {
            let seeds_here: &[u64] = if method == Method::Rf { &[seed] } else { &seeds };
            for &s in seeds_here {
                if err.is_nan() {
                    result.rows.push(row(&v.name, method.as_str(), ratio, s, FAILURE_METRIC, f64::NAN, ms));
                } else {
                    result.rows.push(row(&v.name, method.as_str(), ratio, s, "error_rate", err, ms));
                }
            }
        }
    }
    for ((p, i), (sol, _)) in &solutions {
        if let Ok(f) = sol {
            result
                .hashes
                .insert(format!("trajectory/P{p}/phase{i}"), f.omega.content_hash());
        }
    }
    Ok(result)
}

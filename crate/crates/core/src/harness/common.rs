use std::time::Instant;

use super::config::{DatasetSpec, Method, VorticitySpec};
use crate::baselines::{lpf_compress, pca_fit, LpfSpec, PcaModel};
use crate::error::{Result, RfError};
use crate::generators::{
    generate_cell_scene, ingest_matrix, place_cell_manifold, sine_manifold_matrix, solve_vorticity,
    uniform_times, Grid, SineManifoldSpec, VorticityParams,
};
use crate::matrix::DataMatrix;
use crate::operator::{reduced_dim, RfOperator};

/// Samples as columns, plus the spatial layout the LPF baseline needs.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub matrix: DataMatrix,
    pub grid_shape: Vec<usize>,
}

pub(crate) fn vorticity_params(spec: &VorticitySpec, phase: f64) -> VorticityParams {
    VorticityParams {
        grid: Grid::square(spec.grid),
        nu: spec.nu,
        phase,
        t_end: spec.t_end,
        dt_out: spec.dt_out,
        ..VorticityParams::default()
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let name = spec.label().to_string();
    let (matrix, grid_shape) = match spec {
        DatasetSpec::Sine { f_c, samples } => {
            let s = SineManifoldSpec {
                f_c: *f_c,
                t_samples: uniform_times(*samples),
            };
            (sine_manifold_matrix(&s)?, vec![s.n()])
        }
        DatasetSpec::Calcium(p) => {
            let (_, movie) = generate_cell_scene(p)?;
            (movie, vec![p.height, p.width])
        }
        DatasetSpec::Vorticity(v) => {
            let out = solve_vorticity(&vorticity_params(v, v.phase))?;
            let shape = out.grid.shape();
            (out.omega, shape)
        }
        DatasetSpec::PlaceCells(p) => {
            let (x, _) = place_cell_manifold(p)?;
            let n = x.rows();
            (x, vec![n])
        }
        DatasetSpec::Ingest { path, grid_shape } => {
            let x = ingest_matrix(path)?;
            let shape = grid_shape.clone().unwrap_or_else(|| vec![x.rows()]);
            (x, shape)
        }
    };
    Ok(Dataset {
        name,
        matrix,
        grid_shape,
    })
}

/// A fitted linear compression map.
#[derive(Clone, Debug)]
pub enum Compressor {
    Rf(RfOperator),
    Lpf(LpfSpec),
    /// Uncentered projection onto the principal axes, so the map is linear.
    Pca(PcaModel),
}

impl Compressor {
    /// RF uses `seed`; LPF ignores the data; PCA is fitted on `fit_data`
    /// with `m = round(n/ratio)` axes, capped by the sample count.
    pub fn build(method: Method, ratio: f64, seed: u64, data: &Dataset, fit_data: &DataMatrix) -> Result<Self> {
        let n = data.matrix.rows();
        Ok(match method {
            Method::Rf => Compressor::Rf(RfOperator::for_ratio(n, ratio, seed)?),
            Method::Lpf => Compressor::Lpf(LpfSpec::for_ratio(data.grid_shape.clone(), ratio)),
            Method::Pca => {
                let m = reduced_dim(n, ratio)?.min(fit_data.cols().saturating_sub(1)).max(1);
                Compressor::Pca(pca_fit(fit_data, m)?)
            }
        })
    }

    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        match self {
            Compressor::Rf(op) => op.apply_batch(x),
            Compressor::Lpf(spec) => lpf_compress(x, spec),
            Compressor::Pca(model) => {
                let real = x.to_real_stacked().to_nalgebra().expect("stacked view is real");
                if real.nrows() != model.mean.len() {
                    return Err(RfError::DimensionMismatch {
                        expected: model.mean.len(),
                        got: real.nrows(),
                    });
                }
                Ok(DataMatrix::from_nalgebra(&(model.components.transpose() * real)))
            }
        }
    }

    /// Output dimension (complex rows for RF).
    pub fn m(&self) -> usize {
        match self {
            Compressor::Rf(op) => op.m(),
            Compressor::Lpf(spec) => spec.output_len(),
            Compressor::Pca(model) => model.rank(),
        }
    }
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_millis() as u64)
}

pub(crate) fn ratio_key(ratio: f64) -> String {
    format!("r{ratio}")
}

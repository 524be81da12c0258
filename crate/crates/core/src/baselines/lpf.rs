use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::{Column, DataMatrix};
use crate::Complex64;

/// Gaussian blur followed by decimation on a 1-D or 2-D periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpfSpec {
    /// Decimation step per dimension.
    pub factor: usize,
    pub blur_sigma: f64,
    /// `[len]` or `[height, width]`; samples are stored row-major.
    pub grid_shape: Vec<usize>,
}

impl LpfSpec {
    /// Spec with the default blur `σ = factor / 2`.
    pub fn new(grid_shape: Vec<usize>, factor: usize) -> Self {
        Self {
            factor,
            blur_sigma: factor as f64 / 2.0,
            grid_shape,
        }
    }

    /// Per-dimension factor `round(ratio^(1/dims))`, at least 1.
    pub fn for_ratio(grid_shape: Vec<usize>, ratio: f64) -> Self {
        let dims = grid_shape.len().max(1) as f64;
        let factor = (ratio.powf(1.0 / dims).round() as usize).max(1);
        Self::new(grid_shape, factor)
    }

    pub fn ratio(&self) -> f64 {
        (self.factor as f64).powi(self.grid_shape.len() as i32)
    }

    pub fn input_len(&self) -> usize {
        self.grid_shape.iter().product()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.grid_shape.iter().map(|&d| d.div_ceil(self.factor)).collect()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    fn validate(&self, rows: usize) -> Result<()> {
        if self.grid_shape.is_empty() || self.grid_shape.len() > 2 {
            return Err(RfError::InvalidSpec(format!(
                "grid must be 1-D or 2-D, got {} dims",
                self.grid_shape.len()
            )));
        }
        if self.input_len() != rows {
            return Err(RfError::InvalidSpec(format!(
                "grid {:?} holds {} values but samples have {rows}",
                self.grid_shape,
                self.input_len()
            )));
        }
        if self.factor == 0 || self.grid_shape.iter().any(|&d| self.factor > d) {
            return Err(RfError::InvalidSpec(format!(
                "factor {} must be in [1, {}]",
                self.factor,
                self.grid_shape.iter().min().copied().unwrap_or(0)
            )));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(RfError::InvalidSpec(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        Ok(())
    }

    /// Normalized kernel taps for offsets `-r..=r`, `r = ceil(3σ)`.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (3.0 * self.blur_sigma).ceil() as i64;
        let mut k: Vec<f64> = (-r..=r)
            .map(|j| (-(j * j) as f64 / (2.0 * self.blur_sigma * self.blur_sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    }
}

/// Blurs along one axis at the requested output positions only.
/// `get(p)` reads position `p` of a line of length `len`.
fn blur_line(kernel: &[f64], len: usize, at: usize, get: impl Fn(usize) -> f64) -> f64 {
    let r = (kernel.len() / 2) as i64;
    let len_i = len as i64;
    kernel
        .iter()
        .enumerate()
        .map(|(t, w)| w * get((at as i64 + t as i64 - r).rem_euclid(len_i) as usize))
        .sum()
}

fn compress_plane(spec: &LpfSpec, kernel: &[f64], x: &[f64]) -> Vec<f64> {
    let f = spec.factor;
    match spec.grid_shape[..] {
        [len] => (0..len)
            .step_by(f)
            .map(|p| blur_line(kernel, len, p, |q| x[q]))
            .collect(),
        [h, w] => {
            // Horizontal pass on every row, kept columns only.
            let cols: Vec<usize> = (0..w).step_by(f).collect();
            let wc = cols.len();
            let mut tmp = vec![0.0; h * wc];
            for r in 0..h {
                let row = &x[r * w..(r + 1) * w];
                for (ci, &c) in cols.iter().enumerate() {
                    tmp[r * wc + ci] = blur_line(kernel, w, c, |q| row[q]);
                }
            }
            let mut out = Vec::with_capacity(h.div_ceil(f) * wc);
            for r in (0..h).step_by(f) {
                for ci in 0..wc {
                    out.push(blur_line(kernel, h, r, |q| tmp[q * wc + ci]));
                }
            }
            out
        }
        _ => unreachable!("validated"),
    }
}

/// Blurs and decimates every column; complex columns are filtered
/// component-wise.
pub fn lpf_compress(x: &DataMatrix, spec: &LpfSpec) -> Result<DataMatrix> {
    spec.validate(x.rows())?;
    let kernel = spec.kernel();
    let m = spec.output_len();
    match x.is_complex() {
        false => {
            let cols: Vec<Vec<f64>> = x
                .columns()
                .map(|c| match c {
                    Column::Real(v) => compress_plane(spec, &kernel, v),
                    Column::Complex(_) => unreachable!(),
                })
                .collect();
            DataMatrix::from_real_columns(m, &cols)
        }
        true => {
            let cols: Vec<Vec<Complex64>> = x
                .columns()
                .map(|c| {
                    let v = c.to_complex();
                    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
                    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
                    compress_plane(spec, &kernel, &re)
                        .into_iter()
                        .zip(compress_plane(spec, &kernel, &im))
                        .map(|(a, b)| Complex64::new(a, b))
                        .collect()
                })
                .collect();
            DataMatrix::from_complex_columns(m, &cols)
        }
    }
}

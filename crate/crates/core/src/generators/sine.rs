use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;
use crate::Complex64;

/// The complex exponential curve `t ↦ (e^{i2πkt})_{k=-f_c..=f_c}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineManifoldSpec {
    pub f_c: usize,
    pub t_samples: Vec<f64>,
}

impl SineManifoldSpec {
    pub fn n(&self) -> usize {
        2 * self.f_c + 1
    }
}

/// `K` evenly spaced times `j/K`.
pub fn uniform_times(k: usize) -> Vec<f64> {
    (0..k).map(|j| j as f64 / k as f64).collect()
}

pub fn sine_manifold(f_c: usize, t: f64) -> Vec<Complex64> {
    let f = f_c as i64;
    (-f..=f)
        .map(|k| {
            // Reduce k·t mod 1 first so large frequencies keep full precision.
            let turns = (k as f64 * t).rem_euclid(1.0);
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns)
        })
        .collect()
}

pub fn sine_manifold_matrix(spec: &SineManifoldSpec) -> Result<DataMatrix> {
    if spec.f_c == 0 {
        return Err(RfError::InvalidSpec("f_c must be at least 1".into()));
    }
    if let Some(t) = spec.t_samples.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(RfError::InvalidSpec(format!("sample time {t} outside [0, 1)")));
    }
    let cols: Vec<Vec<Complex64>> = spec
        .t_samples
        .iter()
        .map(|&t| sine_manifold(spec.f_c, t))
        .collect();
    DataMatrix::from_complex_columns(spec.n(), &cols)
}

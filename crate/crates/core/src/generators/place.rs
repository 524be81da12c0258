//! Place-cell population surrogate: a 2-D latent position on the unit square
//! read out by Gaussian tuning curves, giving a smooth 2-D manifold in
//! `ℝ^n_units`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceCellSpec {
    pub n_units: usize,
    pub samples: usize,
    /// Tuning-curve width, in units of the latent square.
    pub tuning_width: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlaceCellSpec {
    fn default() -> Self {
        Self {
            n_units: 200,
            samples: 1000,
            tuning_width: 0.08,
            noise_sigma: 0.03,
            seed: 0,
        }
    }
}

/// Returns the `n_units × samples` activity matrix and the latent positions.
pub fn place_cell_manifold(spec: &PlaceCellSpec) -> Result<(DataMatrix, Vec<[f64; 2]>)> {
    if spec.n_units == 0 || spec.samples < 2 {
        return Err(RfError::InvalidSpec(
            "need at least one unit and two samples".into(),
        ));
    }
    if !(spec.tuning_width > 0.0) || !(spec.noise_sigma >= 0.0) {
        return Err(RfError::InvalidSpec(
            "tuning_width must be positive and noise_sigma nonnegative".into(),
        ));
    }
    let mut pos_rng = SplitMix64::new(derive_seed(spec.seed, 1));
    let mut center_rng = SplitMix64::new(derive_seed(spec.seed, 2));
    let mut noise_rng = SplitMix64::new(derive_seed(spec.seed, 3));
    let latent: Vec<[f64; 2]> = (0..spec.samples)
        .map(|_| [pos_rng.next_f64(), pos_rng.next_f64()])
        .collect();
    let centers: Vec<[f64; 2]> = (0..spec.n_units)
        .map(|_| [center_rng.next_f64(), center_rng.next_f64()])
        .collect();
    let inv = 1.0 / (2.0 * spec.tuning_width * spec.tuning_width);
    let mut values = Vec::with_capacity(spec.n_units * spec.samples);
    for p in &latent {
        for c in &centers {
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            let noise: f64 = StandardNormal.sample(&mut noise_rng);
            values.push((-d2 * inv).exp() + spec.noise_sigma * noise);
        }
    }
    Ok((DataMatrix::from_real(spec.n_units, spec.samples, values)?, latent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = PlaceCellSpec {
            n_units: 20,
            samples: 30,
            ..PlaceCellSpec::default()
        };
        let (a, la) = place_cell_manifold(&spec).unwrap();
        let (b, lb) = place_cell_manifold(&spec).unwrap();
        assert_eq!((a.rows(), a.cols()), (20, 30));
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn noiseless_responses_peak_at_one() {
        let spec = PlaceCellSpec {
            n_units: 5,
            samples: 50,
            noise_sigma: 0.0,
            ..PlaceCellSpec::default()
        };
        let (x, _) = place_cell_manifold(&spec).unwrap();
        assert!(x.as_real().unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = PlaceCellSpec {
            samples: 1,
            ..PlaceCellSpec::default()
        };
        assert!(place_cell_manifold(&bad).is_err());
    }
}

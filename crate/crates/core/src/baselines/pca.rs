use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `n×m`, orthonormal columns in order of decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

fn real_view(x: &DataMatrix) -> DMatrix<f64> {
    x.to_real_stacked().to_nalgebra().expect("stacked view is real")
}

/// Fits the top `m` principal axes of the columns of `x`. Complex data is
/// handled through its `[re; im]` real view.
pub fn pca_fit(x: &DataMatrix, m: usize) -> Result<PcaModel> {
    let k = x.cols();
    if k < 2 {
        return Err(RfError::InsufficientData(format!(
            "PCA needs at least 2 samples, got {k}"
        )));
    }
    let mut data = real_view(x);
    let n = data.nrows();
    let max = n.min(k - 1);
    if m == 0 || m > max {
        return Err(RfError::InvalidRank { requested: m, max });
    }
    let mean = data.column_mean();
    for mut col in data.column_iter_mut() {
        col -= &mean;
    }
    let svd = data.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = DMatrix::zeros(n, m);
    let mut explained_variance = Vec::with_capacity(m);
    for (dst, &src) in order.iter().take(m).enumerate() {
        let mut c = u.column(src).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let peak = c.iter().cloned().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc });
        if peak < 0.0 {
            c.neg_mut();
        }
        components.set_column(dst, &c);
        let s = svd.singular_values[src];
        explained_variance.push(s * s / (k - 1) as f64);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projects centered columns onto the fitted components.
pub fn pca_apply(model: &PcaModel, x: &DataMatrix) -> Result<DataMatrix> {
    let mut data = real_view(x);
    if data.nrows() != model.mean.len() {
        return Err(RfError::DimensionMismatch {
            expected: model.mean.len(),
            got: data.nrows(),
        });
    }
    for mut col in data.column_iter_mut() {
        col -= &model.mean;
    }
    Ok(DataMatrix::from_nalgebra(&(model.components.transpose() * data)))
}

impl PcaModel {
    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    /// Maps scores back to the ambient space.
    pub fn reconstruct(&self, scores: &DataMatrix) -> Result<DataMatrix> {
        let s = scores.to_nalgebra().ok_or_else(|| {
            RfError::InvalidSpec("PCA scores must be real".into())
        })?;
        if s.nrows() != self.rank() {
            return Err(RfError::DimensionMismatch {
                expected: self.rank(),
                got: s.nrows(),
            });
        }
        let mut out = &self.components * s;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        Ok(DataMatrix::from_nalgebra(&out))
    }
}

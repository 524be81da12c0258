//! Inference directly on compressed measurements: per-cell trace estimation,
//! event detection and nearest-template classification.
//!
//! Two compressed estimators are provided. The simple one treats the
//! measurement noise as circularly symmetric and reduces to an inner product
//! with the compressed template. The whitened one handles real noise pushed
//! through the complex operator: it works on the stacked real form
//! `A = [Re Φ; Im Φ]` and weights by the pseudo-inverse of `A·Aᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Result, RfError};
use crate::matrix::{Column, DataMatrix};
use crate::operator::RfOperator;
use crate::Complex64;

/// Eigenvalues of `A·Aᵀ` below this fraction of the largest are discarded.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    templates: DataMatrix,
    labels: Vec<String>,
}

impl TemplateSet {
    pub fn new(templates: DataMatrix, labels: Vec<String>) -> Result<Self> {
        if templates.cols() == 0 {
            return Err(RfError::InsufficientData("template set is empty".into()));
        }
        if labels.len() != templates.cols() {
            return Err(RfError::DimensionMismatch {
                expected: templates.cols(),
                got: labels.len(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(RfError::InvalidSpec(format!("duplicate template label {label:?}")));
            }
        }
        if templates.columns().any(|c| c.norm_sqr() == 0.0) {
            return Err(RfError::DegenerateProfile);
        }
        Ok(Self { templates, labels })
    }

    /// Labels `"0"`, `"1"`, … in column order.
    pub fn indexed(templates: DataMatrix) -> Result<Self> {
        let labels = (0..templates.cols()).map(|i| i.to_string()).collect();
        Self::new(templates, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.templates.rows()
    }

    pub fn templates(&self) -> &DataMatrix {
        &self.templates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }
}

fn re_dot(col: Column<'_>, a: Column<'_>) -> f64 {
    match (col, a) {
        (Column::Real(x), Column::Real(y)) => x.iter().zip(y).map(|(u, v)| u * v).sum(),
        (Column::Real(x), Column::Complex(y)) => x.iter().zip(y).map(|(u, v)| u * v.re).sum(),
        (Column::Complex(x), Column::Real(y)) => x.iter().zip(y).map(|(u, v)| u.re * v).sum(),
        (Column::Complex(x), Column::Complex(y)) => {
            x.iter().zip(y).map(|(u, v)| u.re * v.re + u.im * v.im).sum()
        }
    }
}

fn project_columns(d: &DataMatrix, a: Column<'_>) -> Result<Vec<f64>> {
    if d.rows() != a.len() {
        return Err(RfError::DimensionMismatch {
            expected: d.rows(),
            got: a.len(),
        });
    }
    let norm = a.norm_sqr();
    if norm == 0.0 {
        return Err(RfError::DegenerateProfile);
    }
    Ok((0..d.cols())
        .into_par_iter()
        .map(|t| re_dot(d.column(t), a) / norm)
        .collect())
}

/// `ŝ = Dᵀa / ‖a‖²` in the original space.
pub fn estimate_trace_original(d: &DataMatrix, a: &[f64]) -> Result<Vec<f64>> {
    project_columns(d, Column::Real(a))
}

/// `ŝ_t = Re⟨z_t, a_c⟩ / ‖a_c‖²` on compressed frames.
pub fn estimate_trace_compressed(z: &DataMatrix, a_c: &[Complex64]) -> Result<Vec<f64>> {
    project_columns(z, Column::Complex(a_c))
}

/// Real stacked form of a dense operator and the pseudo-inverse of its Gram
/// matrix.
#[derive(Clone, Debug)]
pub struct StackedRealOperator {
    a: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
    pinv_tol: f64,
    rank: usize,
}

impl StackedRealOperator {
    pub fn from_operator(op: &RfOperator) -> Result<Self> {
        Self::from_dense(&op.dense_matrix()?, DEFAULT_PINV_TOL)
    }

    /// Builds from an explicit complex `m×n` matrix; rows need not be
    /// distinct.
    pub fn from_dense(phi: &DMatrix<Complex64>, pinv_tol: f64) -> Result<Self> {
        let (m, n) = phi.shape();
        if m == 0 || n == 0 {
            return Err(RfError::InvalidDimension("empty operator".into()));
        }
        let a = DMatrix::from_fn(2 * m, n, |r, c| {
            if r < m {
                phi[(r, c)].re
            } else {
                phi[(r - m, c)].im
            }
        });
        let gram = &a * a.transpose();
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let cutoff = pinv_tol * top;
        let mut rank = 0;
        let inv = DVector::from_iterator(
            2 * m,
            eig.eigenvalues.iter().map(|&l| {
                if l > cutoff && l > 0.0 {
                    rank += 1;
                    1.0 / l
                } else {
                    0.0
                }
            }),
        );
        let v = &eig.eigenvectors;
        let gram_pinv = v * DMatrix::from_diagonal(&inv) * v.transpose();
        Ok(Self {
            a,
            gram_pinv,
            pinv_tol,
            rank,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn gram_pinv(&self) -> &DMatrix<f64> {
        &self.gram_pinv
    }

    pub fn pinv_tol(&self) -> f64 {
        self.pinv_tol
    }

    /// Rank retained by the pseudo-inverse.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows() / 2
    }

    /// Maps `z ∈ ℂ^m` to `[Re z; Im z] ∈ ℝ^{2m}`.
    pub fn stack(&self, z: &[Complex64]) -> Result<DVector<f64>> {
        let m = self.m();
        if z.len() != m {
            return Err(RfError::DimensionMismatch {
                expected: m,
                got: z.len(),
            });
        }
        Ok(DVector::from_fn(2 * m, |r, _| {
            if r < m {
                z[r].re
            } else {
                z[r - m].im
            }
        }))
    }

    /// `A·x` for a real ambient vector.
    pub fn measure(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(RfError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(&self.a * DVector::from_column_slice(x))
    }

    fn column_as_stacked(&self, col: Column<'_>) -> Result<DVector<f64>> {
        match col {
            Column::Complex(z) => self.stack(z),
            Column::Real(y) if y.len() == self.a.nrows() => Ok(DVector::from_column_slice(y)),
            Column::Real(y) => Err(RfError::DimensionMismatch {
                expected: self.a.nrows(),
                got: y.len(),
            }),
        }
    }
}

/// Exact MLE under real Gaussian noise: `μ̂_t = y_tᵀ P (Aa) / (Aa)ᵀ P (Aa)`
/// with `P = (A·Aᵀ)⁺`.
pub fn estimate_trace_whitened(op: &RfOperator, z: &DataMatrix, a: &[f64]) -> Result<Vec<f64>> {
    estimate_trace_whitened_with(&StackedRealOperator::from_operator(op)?, z, a)
}

/// As [`estimate_trace_whitened`] with a prebuilt stacked operator. Columns
/// of `z` may be complex `m`-vectors or already-stacked real `2m`-vectors.
pub fn estimate_trace_whitened_with(
    stacked: &StackedRealOperator,
    z: &DataMatrix,
    a: &[f64],
) -> Result<Vec<f64>> {
    let aa = stacked.measure(a)?;
    let w = stacked.gram_pinv() * &aa;
    let denom = aa.dot(&w);
    let scale = aa.norm_squared() * stacked.gram_pinv().norm();
    if !(denom > 1e-12 * scale) {
        return Err(RfError::UnidentifiableProfile);
    }
    (0..z.cols())
        .map(|t| Ok(stacked.column_as_stacked(z.column(t))?.dot(&w) / denom))
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const RELATIVE_FLOOR: f64 = 1e-9;

/// Robust threshold detector: `median + k_sigma · 1.4826 · MAD`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventDetector {
    pub k_sigma: f64,
    /// Peaks closer than this many frames to the previous kept peak merge
    /// into it.
    pub refractory: usize,
}

impl Default for EventDetector {
    fn default() -> Self {
        Self {
            k_sigma: 3.0,
            refractory: 1,
        }
    }
}

impl EventDetector {
    pub fn new(k_sigma: f64, refractory: usize) -> Self {
        Self { k_sigma, refractory }
    }

    /// `None` for a constant trace. A sparse trace can have zero MAD without
    /// being constant, so the margin above the median never drops below
    /// `1e-9` of the largest deviation; rounding dust stays below threshold.
    pub fn threshold(&self, trace: &[f64]) -> Option<f64> {
        let mut v = trace.to_vec();
        let med = median(&mut v);
        let mut dev: Vec<f64> = trace.iter().map(|x| (x - med).abs()).collect();
        let range = dev.iter().cloned().fold(0.0, f64::max);
        if range == 0.0 {
            return None;
        }
        let mad = median(&mut dev);
        Some(med + (self.k_sigma * 1.4826 * mad).max(RELATIVE_FLOOR * range))
    }

    pub fn detect(&self, trace: &[f64]) -> Result<Vec<usize>> {
        if trace.len() < 2 {
            return Err(RfError::InsufficientData(format!(
                "trace needs at least 2 frames, got {}",
                trace.len()
            )));
        }
        if !(self.k_sigma > 0.0) {
            return Err(RfError::InvalidSpec(format!(
                "k_sigma must be positive, got {}",
                self.k_sigma
            )));
        }
        let Some(thr) = self.threshold(trace) else {
            return Ok(Vec::new());
        };
        let last = trace.len() - 1;
        let mut events: Vec<usize> = Vec::new();
        for t in 0..=last {
            let v = trace[t];
            // A plateau reports its first frame.
            let rising = t == 0 || v > trace[t - 1];
            let falling = t == last || v >= trace[t + 1];
            if v > thr && rising && falling {
                match events.last() {
                    Some(&p) if t - p < self.refractory => {}
                    _ => events.push(t),
                }
            }
        }
        Ok(events)
    }
}

pub fn detect_events(trace: &[f64], k_sigma: f64, refractory: usize) -> Result<Vec<usize>> {
    EventDetector::new(k_sigma, refractory).detect(trace)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        // Strict comparison keeps the lowest index on ties.
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Templates pushed through one operator, for repeated classification.
#[derive(Clone, Debug)]
pub struct CompressedTemplates {
    compressed: Vec<Vec<Complex64>>,
    m: usize,
}

impl CompressedTemplates {
    pub fn new(op: &RfOperator, templates: &TemplateSet) -> Result<Self> {
        let z = op.apply_batch(templates.templates())?;
        Ok(Self {
            compressed: (0..z.cols())
                .map(|j| z.complex_column(j).expect("complex output").to_vec())
                .collect(),
            m: op.m(),
        })
    }

    pub fn get(&self, i: usize) -> &[Complex64] {
        &self.compressed[i]
    }

    /// Index of the template minimizing `‖z − Φs_i‖²`.
    pub fn classify(&self, z: &[Complex64]) -> Result<usize> {
        if z.len() != self.m {
            return Err(RfError::DimensionMismatch {
                expected: self.m,
                got: z.len(),
            });
        }
        Ok(argmin(self.compressed.iter().map(|s| {
            z.iter().zip(s).map(|(a, b)| (a - b).norm_sqr()).sum()
        })))
    }
}

/// One-shot compressed classification; use [`CompressedTemplates`] to reuse
/// the compressed templates across many frames.
pub fn classify_compressed(z: &[Complex64], templates: &TemplateSet, op: &RfOperator) -> Result<usize> {
    CompressedTemplates::new(op, templates)?.classify(z)
}

/// Index of the template minimizing `‖x − s_i‖²` in the original space.
pub fn classify_original(x: Column<'_>, templates: &TemplateSet) -> Result<usize> {
    if x.len() != templates.dim() {
        return Err(RfError::DimensionMismatch {
            expected: templates.dim(),
            got: x.len(),
        });
    }
    let xv = x.to_complex();
    Ok(argmin(templates.templates().columns().map(|s| {
        let sv = s.to_complex();
        xv.iter().zip(&sv).map(|(a, b)| (a - b).norm_sqr()).sum()
    })))
}

/// Templates mapped through the stacked operator.
#[derive(Clone, Debug)]
pub struct WhitenedTemplates {
    measured: Vec<DVector<f64>>,
}

impl WhitenedTemplates {
    pub fn new(stacked: &StackedRealOperator, templates: &TemplateSet) -> Result<Self> {
        let measured = templates
            .templates()
            .columns()
            .map(|c| match c {
                Column::Real(s) => stacked.measure(s),
                Column::Complex(_) => Err(RfError::InvalidSpec(
                    "whitened classification needs real templates".into(),
                )),
            })
            .collect::<Result<_>>()?;
        Ok(Self { measured })
    }

    /// Index minimizing `(y − A s_i)ᵀ (A·Aᵀ)⁺ (y − A s_i)`.
    pub fn classify(&self, y: &DVector<f64>, stacked: &StackedRealOperator) -> Result<usize> {
        if y.len() != stacked.a().nrows() {
            return Err(RfError::DimensionMismatch {
                expected: stacked.a().nrows(),
                got: y.len(),
            });
        }
        let p = stacked.gram_pinv();
        Ok(argmin(self.measured.iter().map(|s| {
            let r = y - s;
            r.dot(&(p * &r))
        })))
    }
}

pub fn classify_whitened(
    y: &DVector<f64>,
    templates: &TemplateSet,
    stacked: &StackedRealOperator,
) -> Result<usize> {
    WhitenedTemplates::new(stacked, templates)?.classify(y, stacked)
}

//! The randomized filtering operator `Φ = S·F·D`.
//!
//! `D` flips signs, `F` is the unitary DFT and `S` keeps `m` of the `n`
//! frequencies. Outputs are multiplied by `sqrt(n/m)` so compressed squared
//! norms are unbiased estimates of the original ones.
//!
//! Construction is a pure function of `(n, m, seed)`:
//!
//! 1. SplitMix64 is seeded with `seed`. The first `n` outputs give the signs
//!    (`+1` when bit 63 is clear).
//! 2. The following outputs drive a partial Fisher–Yates shuffle of `0..n`
//!    of length `m`, with Lehmer range reduction.
//! 3. The `m` chosen frequencies are sorted ascending.
//!
//! Frequencies are drawn without replacement, and DC is not special-cased.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::{Column, DataMatrix};
use crate::rng::SplitMix64;

/// Largest `n` for which the dense `m×n` matrix may be materialized.
pub const ORACLE_LIMIT: usize = 4096;

const BLOB_VERSION: u32 = 1;

#[derive(Clone)]
pub struct RfOperator {
    n: usize,
    m: usize,
    seed: u64,
    signs: Vec<f64>,
    freq_indices: Vec<usize>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RfOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RfOperator")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("seed", &self.seed)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl PartialEq for RfOperator {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.m == other.m
            && self.seed == other.seed
            && self.scale.to_bits() == other.scale.to_bits()
            && self.signs == other.signs
            && self.freq_indices == other.freq_indices
    }
}

/// Regenerates the sign vector and sorted frequency set for `(n, m, seed)`.
pub fn draw_vectors(n: usize, m: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let signs = (0..n)
        .map(|_| if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.next_below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut freq_indices = pool[..m].to_vec();
    freq_indices.sort_unstable();
    (signs, freq_indices)
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(RfError::InvalidDimension("n must be at least 1".into()));
    }
    if m == 0 || m > n {
        return Err(RfError::InvalidDimension(format!(
            "m must satisfy 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(RfError::InvalidDimension(format!("n = {n} is too large")));
    }
    Ok(())
}

impl RfOperator {
    pub fn new(n: usize, m: usize, seed: u64) -> Result<Self> {
        check_dims(n, m)?;
        let (signs, freq_indices) = draw_vectors(n, m, seed);
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            n,
            m,
            seed,
            signs,
            freq_indices,
            scale: (n as f64 / m as f64).sqrt(),
            fft,
        })
    }

    /// Operator for a target compression ratio `n/m`, rounding `m` to the
    /// nearest integer and clamping it to `[1, n]`.
    pub fn for_ratio(n: usize, ratio: f64, seed: u64) -> Result<Self> {
        Self::new(n, reduced_dim(n, ratio)?, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn freq_indices(&self) -> &[usize] {
        &self.freq_indices
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Same operator with a different output scale.
    pub fn with_scale(&self, scale: f64) -> Self {
        Self {
            scale,
            ..self.clone()
        }
    }

    fn output_factor(&self) -> f64 {
        self.scale / (self.n as f64).sqrt()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(RfError::DimensionMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        self.fft.process_with_scratch(buf, scratch);
        let c = self.output_factor();
        for (o, &k) in out.iter_mut().zip(&self.freq_indices) {
            *o = buf[k] * c;
        }
    }

    fn apply_into(&self, x: Column<'_>, buf: &mut [Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        match x {
            Column::Real(v) => {
                for ((b, &xi), &s) in buf.iter_mut().zip(v).zip(&self.signs) {
                    *b = Complex64::new(xi * s, 0.0);
                }
            }
            Column::Complex(v) => {
                for ((b, &xi), &s) in buf.iter_mut().zip(v).zip(&self.signs) {
                    *b = xi * s;
                }
            }
        }
        self.transform(buf, scratch, out);
    }

    pub fn apply_column(&self, x: Column<'_>) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let mut buf = vec![Complex64::default(); self.n];
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        let mut out = vec![Complex64::default(); self.m];
        self.apply_into(x, &mut buf, &mut scratch, &mut out);
        Ok(out)
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_column(Column::Complex(x))
    }

    pub fn apply_real(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.apply_column(Column::Real(x))
    }

    /// Applies Φ to every column. Columns are independent, so the parallel
    /// result is identical to the serial one.
    pub fn apply_batch(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_len(x.rows())?;
        let k = x.cols();
        let mut out = vec![Complex64::default(); self.m * k];
        if k > 0 {
            let scratch_len = self.fft.get_inplace_scratch_len();
            out.par_chunks_mut(self.m).enumerate().for_each_init(
                || {
                    (
                        vec![Complex64::default(); self.n],
                        vec![Complex64::default(); scratch_len],
                    )
                },
                |(buf, scratch), (j, dst)| self.apply_into(x.column(j), buf, scratch, dst),
            );
        }
        DataMatrix::from_complex(self.m, k, out)
    }

    /// The explicit `m×n` matrix `scale·S·F·D`.
    pub fn dense_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.n > ORACLE_LIMIT {
            return Err(RfError::OracleTooLarge {
                n: self.n,
                limit: ORACLE_LIMIT,
            });
        }
        let n = self.n as u64;
        let c = self.output_factor();
        Ok(DMatrix::from_fn(self.m, self.n, |r, col| {
            // Reduce the exponent before converting to keep the phase exact.
            let k = self.freq_indices[r] as u64;
            twiddle((k * col as u64) % n, n) * (c * self.signs[col])
        }))
    }

    /// Reference path: materializes the dense matrix and multiplies.
    pub fn apply_dense_oracle(&self, x: Column<'_>) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let phi = self.dense_matrix()?;
        let xv = x.to_complex();
        Ok((0..self.m)
            .map(|r| (0..self.n).map(|c| phi[(r, c)] * xv[c]).sum())
            .collect())
    }

    /// Compact blob: vectors are regenerated from the seed on load.
    pub fn to_blob(&self) -> String {
        serde_json::to_string(&OperatorBlob {
            version: BLOB_VERSION,
            n: self.n,
            m: self.m,
            seed: self.seed,
            signs: None,
            freq_indices: None,
        })
        .expect("blob serializes")
    }

    /// Blob that also carries the explicit vectors for exchange with other
    /// implementations.
    pub fn to_blob_extended(&self) -> String {
        serde_json::to_string(&OperatorBlob {
            version: BLOB_VERSION,
            n: self.n,
            m: self.m,
            seed: self.seed,
            signs: Some(self.signs.iter().map(|&s| s as i64).collect()),
            freq_indices: Some(self.freq_indices.clone()),
        })
        .expect("blob serializes")
    }

    pub fn from_blob(blob: &str) -> Result<Self> {
        let parsed: OperatorBlob =
            serde_json::from_str(blob).map_err(|e| RfError::Corrupt(e.to_string()))?;
        if parsed.version != BLOB_VERSION {
            return Err(RfError::Corrupt(format!(
                "unsupported version {}, expected {BLOB_VERSION}",
                parsed.version
            )));
        }
        check_dims(parsed.n, parsed.m).map_err(|e| RfError::Corrupt(e.to_string()))?;
        let op = Self::new(parsed.n, parsed.m, parsed.seed)?;
        if let Some(signs) = parsed.signs {
            let expected: Vec<i64> = op.signs.iter().map(|&s| s as i64).collect();
            if signs != expected {
                return Err(RfError::Corrupt(
                    "explicit signs disagree with the seed".into(),
                ));
            }
        }
        if let Some(idx) = parsed.freq_indices {
            if idx != op.freq_indices {
                return Err(RfError::Corrupt(
                    "explicit frequency indices disagree with the seed".into(),
                ));
            }
        }
        Ok(op)
    }
}

/// `exp(-2πi·p/n)`, exact on quarter turns.
fn twiddle(p: u64, n: u64) -> Complex64 {
    if (4 * p).is_multiple_of(n) {
        return match 4 * p / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * p as f64 / n as f64)
}

/// `m = round(n / ratio)` clamped to `[1, n]`.
pub fn reduced_dim(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(RfError::InvalidDimension(format!(
            "compression ratio must be >= 1, got {ratio}"
        )));
    }
    Ok(((n as f64 / ratio).round() as usize).clamp(1, n.max(1)))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorBlob {
    version: u32,
    n: usize,
    m: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signs: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_indices: Option<Vec<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    fn random_real(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
    }

    #[test]
    fn golden_vectors_n64_m16_seed7() {
        // Frozen from an independent script of the SplitMix64 contract.
        #[rustfmt::skip]
        let signs: [i8; 64] = [
            1, 1, -1, -1, 1, 1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1,
            -1, 1, -1, -1, -1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1,
            1, 1, -1, -1, 1, -1, 1, 1, -1, -1, 1, 1, 1, 1, -1, -1,
            -1, -1, -1, 1, 1, 1, -1, 1, 1, 1, -1, -1, 1, 1, -1, 1,
        ];
        let idx = [1, 8, 23, 27, 29, 31, 35, 37, 40, 45, 49, 50, 51, 60, 61, 63];
        let op = RfOperator::new(64, 16, 7).unwrap();
        let got: Vec<i8> = op.signs().iter().map(|&s| s as i8).collect();
        assert_eq!(got, signs);
        assert_eq!(op.freq_indices(), &idx);
    }

    #[test]
    fn full_sampling_keeps_every_frequency() {
        let op = RfOperator::new(8, 8, 123).unwrap();
        assert_eq!(op.freq_indices(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(op.scale(), 1.0);
    }

    #[test]
    fn large_operator_builds() {
        let op = RfOperator::new(10001, 512, 1).unwrap();
        assert_eq!(op.freq_indices().len(), 512);
        assert!(op.freq_indices().windows(2).all(|w| w[0] < w[1]));
        assert!(*op.freq_indices().last().unwrap() < 10001);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        for (n, m) in [(0, 0), (4, 0), (4, 5)] {
            assert!(matches!(
                RfOperator::new(n, m, 0),
                Err(RfError::InvalidDimension(_))
            ));
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let op = RfOperator::new(16, 16, 5).unwrap();
        for k in 0..16 {
            let mut x = vec![0.0; 16];
            x[k] = 1.0;
            let y = op.apply_real(&x).unwrap();
            for (r, v) in y.iter().enumerate() {
                assert!((v.norm() - 0.25).abs() < 1e-14);
                // Frequency f of an impulse at k has phase -2πfk/n times sign_k.
                let f = op.freq_indices()[r] as f64;
                let expected = Complex64::from_polar(
                    0.25 * op.signs()[k],
                    -2.0 * std::f64::consts::PI * f * k as f64 / 16.0,
                );
                assert!((v - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn unitary_at_full_sampling() {
        let op = RfOperator::new(100, 100, 9).unwrap();
        let x = random_real(100, 1);
        let y = op.apply_real(&x).unwrap();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((nx - ny).abs() / nx < 1e-12);
    }

    #[test]
    fn fft_path_matches_oracle() {
        let op = RfOperator::new(256, 32, 11).unwrap();
        let x = random_real(256, 2);
        let fast = op.apply_real(&x).unwrap();
        let slow = op.apply_dense_oracle(Column::Real(&x)).unwrap();
        assert!(rel_err(&fast, &slow) < 1e-10);
    }

    #[test]
    fn oracle_unitary_dft_4() {
        let op = RfOperator::new(4, 4, 0).unwrap().with_signs_for_test(vec![1.0; 4]);
        let phi = op.dense_matrix().unwrap();
        let i = Complex64::new(0.0, 1.0);
        let w = [Complex64::new(1.0, 0.0), -i, Complex64::new(-1.0, 0.0), i];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(phi[(r, c)], w[(r * c) % 4] * 0.5);
            }
        }
    }

    #[test]
    fn oracle_constant_vector() {
        let op = RfOperator::new(4, 2, 0)
            .unwrap()
            .with_signs_for_test(vec![1.0; 4])
            .with_indices_for_test(vec![0, 2]);
        let y = op.apply_dense_oracle(Column::Real(&[1.0; 4])).unwrap();
        // Unitary DFT of ones is (2, 0, 0, 0); the sqrt(2) scale follows.
        let s = 2f64.sqrt();
        assert!((y[0] - Complex64::new(2.0 * s, 0.0)).norm() < 1e-15);
        assert!(y[1].norm() < 1e-15);
    }

    #[test]
    fn oracle_guard() {
        let op = RfOperator::new(ORACLE_LIMIT + 1, 4, 0).unwrap();
        assert!(matches!(
            op.dense_matrix(),
            Err(RfError::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn gram_identity() {
        let op = RfOperator::new(48, 12, 3).unwrap();
        let unit = op.with_scale(1.0).dense_matrix().unwrap();
        let g = &unit * unit.adjoint();
        let scaled = op.dense_matrix().unwrap();
        let gs = &scaled * scaled.adjoint();
        for r in 0..12 {
            for c in 0..12 {
                let e = if r == c { 1.0 } else { 0.0 };
                assert!((g[(r, c)] - Complex64::new(e, 0.0)).norm() < 1e-12);
                assert!((gs[(r, c)] - Complex64::new(4.0 * e, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_edge_cases() {
        let op = RfOperator::new(128, 16, 4).unwrap();
        let empty = op.apply_batch(&DataMatrix::zeros_real(128, 0)).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (16, 0));
        let x = random_real(128, 8);
        let single = DataMatrix::from_real(128, 1, x.clone()).unwrap();
        let out = op.apply_batch(&single).unwrap();
        assert_eq!(out.complex_column(0).unwrap(), op.apply_real(&x).unwrap());
    }

    #[test]
    fn batch_matches_oracle() {
        let op = RfOperator::new(128, 16, 21).unwrap();
        let cols: Vec<Vec<f64>> = (0..50).map(|j| random_real(128, 100 + j)).collect();
        let x = DataMatrix::from_real_columns(128, &cols).unwrap();
        let out = op.apply_batch(&x).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let slow = op.apply_dense_oracle(Column::Real(col)).unwrap();
            assert!(rel_err(out.complex_column(j).unwrap(), &slow) < 1e-10);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let op = RfOperator::new(8, 4, 0).unwrap();
        assert!(matches!(
            op.apply_real(&[0.0; 7]),
            Err(RfError::DimensionMismatch { expected: 8, got: 7 })
        ));
        assert!(op.apply_batch(&DataMatrix::zeros_real(9, 2)).is_err());
    }

    #[test]
    fn blob_round_trip() {
        let op = RfOperator::new(100, 10, 42).unwrap();
        assert_eq!(RfOperator::from_blob(&op.to_blob()).unwrap(), op);
        assert_eq!(RfOperator::from_blob(&op.to_blob_extended()).unwrap(), op);
    }

    #[test]
    fn blob_rejects_bad_input() {
        for blob in [
            r#"{"version":1,"n":4,"m":5,"seed":0}"#,
            r#"{"version":2,"n":4,"m":2,"seed":0}"#,
            r#"{"version":1,"n":4}"#,
            "not json",
        ] {
            assert!(
                matches!(RfOperator::from_blob(blob), Err(RfError::Corrupt(_))),
                "{blob}"
            );
        }
    }

    #[test]
    fn blob_with_mutated_sign_is_corrupt() {
        let op = RfOperator::new(16, 4, 5).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&op.to_blob_extended()).unwrap();
        let s = v["signs"][3].as_i64().unwrap();
        v["signs"][3] = serde_json::json!(-s);
        assert!(matches!(
            RfOperator::from_blob(&v.to_string()),
            Err(RfError::Corrupt(_))
        ));
    }

    #[test]
    fn ratio_rounding() {
        assert_eq!(reduced_dim(100, 1.0).unwrap(), 100);
        assert_eq!(reduced_dim(100, 3.0).unwrap(), 33);
        assert_eq!(reduced_dim(10, 1000.0).unwrap(), 1);
        assert!(reduced_dim(10, 0.5).is_err());
    }

    impl RfOperator {
        fn with_signs_for_test(mut self, signs: Vec<f64>) -> Self {
            self.signs = signs;
            self
        }

        fn with_indices_for_test(mut self, idx: Vec<usize>) -> Self {
            self.m = idx.len();
            self.scale = (self.n as f64 / self.m as f64).sqrt();
            self.freq_indices = idx;
            self
        }
    }
}

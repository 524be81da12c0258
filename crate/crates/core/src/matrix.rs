//! Dense column-major matrices and the `RFM1` on-disk format.
//!
//! Samples are stored as columns. Complex matrices keep `(re, im)` pairs,
//! which is also how they are laid out on disk.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Result, RfError};

pub const MAGIC: &[u8; 4] = b"RFM1";
const HEADER_LEN: usize = 4 + 4 + 4 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Real64,
    Complex64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::Real64 => 0,
            Dtype::Complex64 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::Real64),
            1 => Some(Dtype::Complex64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Borrowed view of one column.
#[derive(Clone, Copy, Debug)]
pub enum Column<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

impl Column<'_> {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(c) => c.len(),
            Column::Complex(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        match self {
            Column::Real(c) => c.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            Column::Complex(c) => c.to_vec(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        match self {
            Column::Real(c) => c.iter().map(|v| v * v).sum(),
            Column::Complex(c) => c.iter().map(|v| v.norm_sqr()).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: MatrixData,
}

impl Default for DataMatrix {
    fn default() -> Self {
        DataMatrix::zeros_real(0, 0)
    }
}

impl DataMatrix {
    pub fn from_real(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(RfError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: MatrixData::Real(values),
        })
    }

    pub fn from_complex(rows: usize, cols: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(RfError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: MatrixData::Complex(values),
        })
    }

    pub fn zeros_real(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: MatrixData::Real(vec![0.0; rows * cols]),
        }
    }

    pub fn zeros_complex(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: MatrixData::Complex(vec![Complex64::new(0.0, 0.0); rows * cols]),
        }
    }

    /// Builds a real matrix whose columns are the given vectors.
    pub fn from_real_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(RfError::DimensionMismatch {
                    expected: rows,
                    got: col.len(),
                });
            }
            values.extend_from_slice(col);
        }
        Self::from_real(rows, columns.len(), values)
    }

    pub fn from_complex_columns(rows: usize, columns: &[Vec<Complex64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(RfError::DimensionMismatch {
                    expected: rows,
                    got: col.len(),
                });
            }
            values.extend_from_slice(col);
        }
        Self::from_complex(rows, columns.len(), values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            MatrixData::Real(_) => Dtype::Real64,
            MatrixData::Complex(_) => Dtype::Complex64,
        }
    }

    pub fn is_complex(&self) -> bool {
        self.dtype() == Dtype::Complex64
    }

    pub fn data(&self) -> &MatrixData {
        &self.data
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            MatrixData::Real(v) => Some(v),
            MatrixData::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match &self.data {
            MatrixData::Real(_) => None,
            MatrixData::Complex(v) => Some(v),
        }
    }

    pub fn column(&self, j: usize) -> Column<'_> {
        assert!(j < self.cols, "column {j} out of range for {} columns", self.cols);
        let range = j * self.rows..(j + 1) * self.rows;
        match &self.data {
            MatrixData::Real(v) => Column::Real(&v[range]),
            MatrixData::Complex(v) => Column::Complex(&v[range]),
        }
    }

    pub fn real_column(&self, j: usize) -> Option<&[f64]> {
        match self.column(j) {
            Column::Real(c) => Some(c),
            Column::Complex(_) => None,
        }
    }

    pub fn complex_column(&self, j: usize) -> Option<&[Complex64]> {
        match self.column(j) {
            Column::Real(_) => None,
            Column::Complex(c) => Some(c),
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = Column<'_>> {
        (0..self.cols).map(move |j| self.column(j))
    }

    /// Selects a subset of columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> DataMatrix {
        match &self.data {
            MatrixData::Real(v) => {
                let mut out = Vec::with_capacity(self.rows * indices.len());
                for &j in indices {
                    out.extend_from_slice(&v[j * self.rows..(j + 1) * self.rows]);
                }
                DataMatrix::from_real(self.rows, indices.len(), out).expect("sizes agree")
            }
            MatrixData::Complex(v) => {
                let mut out = Vec::with_capacity(self.rows * indices.len());
                for &j in indices {
                    out.extend_from_slice(&v[j * self.rows..(j + 1) * self.rows]);
                }
                DataMatrix::from_complex(self.rows, indices.len(), out).expect("sizes agree")
            }
        }
    }

    /// Real view used by real-valued algorithms: complex columns are mapped
    /// to `[re; im]`, which preserves Euclidean geometry.
    pub fn to_real_stacked(&self) -> DataMatrix {
        match &self.data {
            MatrixData::Real(_) => self.clone(),
            MatrixData::Complex(v) => {
                let mut out = Vec::with_capacity(2 * v.len());
                for col in v.chunks(self.rows.max(1)).take(self.cols) {
                    out.extend(col.iter().map(|c| c.re));
                    out.extend(col.iter().map(|c| c.im));
                }
                DataMatrix::from_real(2 * self.rows, self.cols, out).expect("sizes agree")
            }
        }
    }

    pub fn to_complex(&self) -> DataMatrix {
        match &self.data {
            MatrixData::Real(v) => DataMatrix {
                rows: self.rows,
                cols: self.cols,
                data: MatrixData::Complex(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
            },
            MatrixData::Complex(_) => self.clone(),
        }
    }

    pub fn to_nalgebra(&self) -> Option<DMatrix<f64>> {
        self.as_real()
            .map(|v| DMatrix::from_column_slice(self.rows, self.cols, v))
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> DataMatrix {
        DataMatrix::from_real(m.nrows(), m.ncols(), m.as_slice().to_vec()).expect("sizes agree")
    }

    /// Scalar multiple (real factor), preserving dtype.
    pub fn scaled(&self, factor: f64) -> DataMatrix {
        let data = match &self.data {
            MatrixData::Real(v) => MatrixData::Real(v.iter().map(|x| x * factor).collect()),
            MatrixData::Complex(v) => MatrixData::Complex(v.iter().map(|x| x * factor).collect()),
        };
        DataMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        match &self.data {
            MatrixData::Real(v) => v.iter().all(|x| x.is_finite()),
            MatrixData::Complex(v) => v.iter().all(|x| x.re.is_finite() && x.im.is_finite()),
        }
    }

    /// Serializes to the `RFM1` byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let width = match self.dtype() {
            Dtype::Real64 => 8,
            Dtype::Complex64 => 16,
        };
        let mut out = Vec::with_capacity(HEADER_LEN + width * self.rows * self.cols);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.push(self.dtype().code());
        match &self.data {
            MatrixData::Real(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            MatrixData::Complex(v) => {
                for x in v {
                    out.extend_from_slice(&x.re.to_le_bytes());
                    out.extend_from_slice(&x.im.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses the `RFM1` byte layout. Non-finite payload values are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(RfError::parse(
                "byte 0",
                format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
            ));
        }
        if &bytes[..4] != MAGIC {
            return Err(RfError::parse("byte 0", "missing RFM1 magic"));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let dtype = Dtype::from_code(bytes[12])
            .ok_or_else(|| RfError::parse("byte 12", format!("unknown dtype code {}", bytes[12])))?;
        let scalars = rows * cols * if dtype == Dtype::Complex64 { 2 } else { 1 };
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != scalars * 8 {
            return Err(RfError::parse(
                format!("byte {HEADER_LEN}"),
                format!(
                    "payload holds {} bytes, header implies {}",
                    payload.len(),
                    scalars * 8
                ),
            ));
        }
        let mut values = Vec::with_capacity(scalars);
        for (k, chunk) in payload.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(RfError::parse(
                    format!("byte {}", HEADER_LEN + 8 * k),
                    "non-finite value",
                ));
            }
            values.push(v);
        }
        match dtype {
            Dtype::Real64 => DataMatrix::from_real(rows, cols, values),
            Dtype::Complex64 => DataMatrix::from_complex(
                rows,
                cols,
                values
                    .chunks_exact(2)
                    .map(|p| Complex64::new(p[0], p[1]))
                    .collect(),
            ),
        }
    }

    /// SHA-256 of the `RFM1` encoding, used to fingerprint intermediates.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn write_matrix(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&m.to_bytes())?;
    Ok(())
}

/// Parses numeric CSV where each row is one sample; the result holds samples
/// as columns.
pub fn parse_csv_samples(text: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field.parse().map_err(|_| {
                    RfError::parse(
                        format!("line {}, column {}", line + 1, c + 1),
                        format!("not a number: {field:?}"),
                    )
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(RfError::parse(
                        format!("line {}, column {}", line + 1, c + 1),
                        "non-finite value",
                    ))
                }
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(RfError::parse(
                    format!("line {}", line + 1),
                    format!("ragged row: {} fields, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        samples.push(row);
    }
    let rows = width.ok_or_else(|| RfError::parse("line 1", "no data rows"))?;
    DataMatrix::from_real_columns(rows, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfm1_layout_is_exact() {
        let m = DataMatrix::from_real(2, 1, vec![1.0, -2.5]).unwrap();
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"RFM1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(b[12], 0);
        assert_eq!(&b[13..21], &1.0f64.to_le_bytes());
        assert_eq!(&b[21..29], &(-2.5f64).to_le_bytes());
        assert_eq!(b.len(), 29);
    }

    #[test]
    fn complex_payload_is_interleaved() {
        let m = DataMatrix::from_complex(1, 1, vec![Complex64::new(3.0, 4.0)]).unwrap();
        let b = m.to_bytes();
        assert_eq!(b[12], 1);
        assert_eq!(&b[13..21], &3.0f64.to_le_bytes());
        assert_eq!(&b[21..29], &4.0f64.to_le_bytes());
        assert_eq!(DataMatrix::from_bytes(&b).unwrap(), m);
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut b = DataMatrix::zeros_real(3, 3).to_bytes();
        b.pop();
        assert!(matches!(DataMatrix::from_bytes(&b), Err(RfError::Parse { .. })));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let m = DataMatrix::from_real(1, 2, vec![0.0, f64::NAN]).unwrap();
        let err = DataMatrix::from_bytes(&m.to_bytes()).unwrap_err();
        assert!(err.to_string().contains("byte 21"), "{err}");
    }

    #[test]
    fn csv_rows_become_columns() {
        let m = parse_csv_samples("1,2\n3,4\n5,6\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.real_column(1).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn ragged_csv_names_the_line() {
        let err = parse_csv_samples("1,2\n3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn csv_rejects_nan() {
        assert!(parse_csv_samples("1,nan\n").is_err());
    }

    #[test]
    fn stacked_real_view_preserves_norms() {
        let m = DataMatrix::from_complex(
            2,
            1,
            vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)],
        )
        .unwrap();
        let r = m.to_real_stacked();
        assert_eq!(r.rows(), 4);
        assert_eq!(r.real_column(0).unwrap(), &[1.0, -3.0, 2.0, 0.5]);
        assert!((r.column(0).norm_sqr() - m.column(0).norm_sqr()).abs() < 1e-15);
    }
}

use std::fs;
use std::path::Path;

use crate::error::{Result, RfError};
use crate::matrix::{parse_csv_samples, DataMatrix, MAGIC};

/// Reads an `RFM1` file, or a numeric CSV with one sample per row.
pub fn ingest_matrix(path: &Path) -> Result<DataMatrix> {
    if !path.exists() {
        return Err(RfError::MissingPath(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(RfError::parse(format!("{}: byte 0", path.display()), "empty file"));
    }
    if bytes.starts_with(MAGIC) {
        return DataMatrix::from_bytes(&bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| RfError::parse(format!("byte {}", e.valid_up_to()), "neither RFM1 nor UTF-8 CSV"))?;
    parse_csv_samples(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::write_matrix;
    use crate::Complex64;

    #[test]
    fn rfm1_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.rfm");
        let m = DataMatrix::from_complex(
            2,
            2,
            vec![
                Complex64::new(0.1, -0.0),
                Complex64::new(1e-300, 3.0),
                Complex64::new(-7.25, 2.0),
                Complex64::new(0.0, 1.0 / 3.0),
            ],
        )
        .unwrap();
        write_matrix(&p, &m).unwrap();
        let back = ingest_matrix(&p).unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
    }

    #[test]
    fn empty_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, b"").unwrap();
        assert!(matches!(ingest_matrix(&p), Err(RfError::Parse { .. })));
    }

    #[test]
    fn csv_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "1,2\n3,4\n5,6\n").unwrap();
        let m = ingest_matrix(&p).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.as_real().unwrap(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            ingest_matrix(Path::new("/nonexistent/x.rfm")),
            Err(RfError::MissingPath(_))
        ));
    }
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::StayId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense per-note document vectors from one backend, row `i` belonging to
/// `stay_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T: Scalar = f32> {
    pub backend_id: String,
    pub stay_ids: Vec<StayId>,
    pub data: Array2<T>,
    /// Per-row truncation flags reported by the backend, when it has any.
    pub truncated: Option<Vec<bool>>,
}

/// JSON sidecar of the binary matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub backend_id: String,
    pub dimension: usize,
    pub count: usize,
    pub stay_ids: Vec<StayId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<Vec<bool>>,
    /// Column names, for feature frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

pub fn matrix_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(
        backend_id: impl Into<String>,
        stay_ids: Vec<StayId>,
        data: Array2<T>,
    ) -> Result<Self> {
        if stay_ids.len() != data.nrows() {
            return Err(Error::Dimension {
                expected: stay_ids.len(),
                actual: data.nrows(),
            });
        }
        // an empty matrix may come from an empty note list
        if data.ncols() == 0 && data.nrows() > 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingMatrix {
            backend_id: backend_id.into(),
            stay_ids,
            data,
            truncated: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn header(&self) -> MatrixHeader {
        MatrixHeader {
            backend_id: self.backend_id.clone(),
            dimension: self.dimension(),
            count: self.len(),
            stay_ids: self.stay_ids.clone(),
            truncated: self.truncated.clone(),
            columns: None,
        }
    }

    /// Writes `<stem>.bin` (little-endian f32, row-major) and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        write_matrix(stem, &self.header(), &self.data)
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let (header, data) = read_matrix(stem)?;
        Ok(EmbeddingMatrix {
            backend_id: header.backend_id,
            stay_ids: header.stay_ids,
            data,
            truncated: header.truncated,
        })
    }

    pub fn to_f64(&self) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix {
            backend_id: self.backend_id.clone(),
            stay_ids: self.stay_ids.clone(),
            data: self.data.mapv(|v| v.to_f64_lossy()),
            truncated: self.truncated.clone(),
        }
    }
}

pub fn write_matrix<T: Scalar>(stem: &Path, header: &MatrixHeader, data: &Array2<T>) -> Result<()> {
    let (bin, json) = matrix_paths(stem);
    let file = fs::File::create(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut out = BufWriter::new(file);
    for v in data.iter() {
        let f = v.to_f32().unwrap_or(f32::NAN);
        out.write_all(&f.to_le_bytes())
            .map_err(|e| Error::io(&bin, e))?;
    }
    out.flush().map_err(|e| Error::io(&bin, e))?;
    let text = serde_json::to_string_pretty(header)?;
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(())
}

pub fn read_matrix<T: Scalar>(stem: &Path) -> Result<(MatrixHeader, Array2<T>)> {
    let (bin, json) = matrix_paths(stem);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: MatrixHeader = serde_json::from_str(&text)?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = header.count * header.dimension * 4;
    if bytes.len() != expected {
        return Err(Error::Dimension {
            expected,
            actual: bytes.len(),
        });
    }
    if header.stay_ids.len() != header.count {
        return Err(Error::Dimension {
            expected: header.count,
            actual: header.stay_ids.len(),
        });
    }
    let values: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).unwrap())
        .collect();
    let data = Array2::from_shape_vec((header.count, header.dimension), values)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binary_layout_is_le_f32_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        let m = EmbeddingMatrix::new(
            "bow",
            vec!["a".into(), "b".into()],
            array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.5]],
        )
        .unwrap();
        m.write(&stem).unwrap();
        let bytes = std::fs::read(stem.with_extension("bin")).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[4..8], &2.0f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &6.5f32.to_le_bytes());
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(header["dimension"], 3);
        assert_eq!(header["count"], 2);
        assert_eq!(header["stay_ids"][1], "b");
        assert_eq!(EmbeddingMatrix::<f32>::read(&stem).unwrap(), m);
    }

    #[test]
    fn rejects_misaligned_or_non_finite() {
        assert!(EmbeddingMatrix::new("x", vec!["a".into()], array![[1.0f32], [2.0]]).is_err());
        assert!(EmbeddingMatrix::new("x", vec!["a".into()], array![[f32::NAN]]).is_err());
        assert!(EmbeddingMatrix::<f64>::new("x", vec!["a".into()], Array2::zeros((1, 0))).is_err());
        assert!(EmbeddingMatrix::<f64>::new("x", vec![], Array2::zeros((0, 0))).is_ok());
    }

    #[test]
    fn truncated_binary_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        let m = EmbeddingMatrix::new("x", vec!["a".into()], array![[1.0f64, 2.0]]).unwrap();
        m.write(&stem).unwrap();
        std::fs::write(stem.with_extension("bin"), [0u8; 4]).unwrap();
        assert!(EmbeddingMatrix::<f64>::read(&stem).is_err());
    }
}

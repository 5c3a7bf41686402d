//! Propagated target-node tensors and the `ELPT` binary format.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `ELPT`                           |
//! | 4      | 2    | version (u16) = 1                      |
//! | 6      | 2    | flags (u16), bit 0 = retention column  |
//! | 8      | 8    | rows (u64)                             |
//! | 16     | 8    | cols (u64)                             |
//! | 24     | 1    | dtype (u8), 0 = f32, 1 = f64           |
//! | 25     | ...  | row-major payload                      |
//!
//! When the retention flag is set, column 0 holds the retention ratio and
//! columns 1.. hold the label mass.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 4] = b"ELPT";
const VERSION: u16 = 1;
const FLAG_RETENTION: u16 = 1;
const HEADER_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedTensor {
    values: Matrix,
    has_retention: bool,
}

impl PropagatedTensor {
    pub fn new(values: Matrix, has_retention: bool) -> Self {
        assert!(
            !has_retention || values.cols() >= 1,
            "retention column requires at least one column"
        );
        Self { values, has_retention }
    }

    pub fn without_retention(values: Matrix) -> Self {
        Self::new(values, false)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Matrix {
        &mut self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn has_retention(&self) -> bool {
        self.has_retention
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    /// Retention column, if present.
    pub fn retention(&self) -> Option<Vec<f64>> {
        self.has_retention.then(|| self.values.column(0))
    }

    pub fn label_offset(&self) -> usize {
        usize::from(self.has_retention)
    }

    /// Label columns only.
    pub fn label_part(&self) -> Matrix {
        self.values.columns(self.label_offset(), self.values.cols())
    }

    pub fn to_bytes(&self, dtype: Dtype) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.data().len() * dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.has_retention { FLAG_RETENTION } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u64).to_le_bytes());
        out.push(dtype.code());
        match dtype {
            Dtype::F64 => self
                .values
                .data()
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Dtype::F32 => self
                .values
                .data()
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        if flags & !FLAG_RETENTION != 0 {
            return Err(Error::Format(format!("unknown flags {flags:#06x}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let dtype = match bytes[24] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            d => return Err(Error::Format(format!("unknown dtype {d}"))),
        };
        let count = rows
            .checked_mul(cols)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| Error::Format("shape overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if Some(payload.len()) != count.checked_mul(dtype.size()) {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {rows}x{cols} {dtype:?}",
                payload.len()
            )));
        }
        let data: Vec<f64> = match dtype {
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        let has_retention = flags & FLAG_RETENTION != 0;
        if has_retention && cols == 0 {
            return Err(Error::Format("retention flag set on a zero-column tensor".into()));
        }
        Ok(Self::new(
            Matrix::from_vec(rows as usize, cols as usize, data),
            has_retention,
        ))
    }
}

/// Sidecar metadata written next to every tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMetadata {
    pub strategy: String,
    pub plan: String,
    pub operator_kind: String,
    pub hop: usize,
    pub seed: Option<u64>,
    pub rows: usize,
    pub cols: usize,
    pub retention_column: bool,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_elpt(path: &Path, tensor: &PropagatedTensor, dtype: Dtype, meta: Option<&TensorMetadata>) -> Result<()> {
    fs::write(path, tensor.to_bytes(dtype)).map_err(|e| Error::io(path, e))?;
    if let Some(meta) = meta {
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
        fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

pub fn read_elpt(path: &Path) -> Result<PropagatedTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PropagatedTensor::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = PropagatedTensor::new(Matrix::from_rows(&[vec![1.0, 2.0]]), true);
        let b = t.to_bytes(Dtype::F64);
        assert_eq!(&b[0..4], b"ELPT");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..8], &[1, 0]);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        assert_eq!(b[24], 1);
        assert_eq!(b.len(), 25 + 16);
        assert_eq!(f64::from_le_bytes(b[25..33].try_into().unwrap()), 1.0);
    }

    #[test]
    fn f32_payload_narrows() {
        let t = PropagatedTensor::without_retention(Matrix::from_rows(&[vec![0.1]]));
        let back = PropagatedTensor::from_bytes(&t.to_bytes(Dtype::F32)).unwrap();
        assert_eq!(back.values().get(0, 0), 0.1f32 as f64);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let t = PropagatedTensor::without_retention(Matrix::zeros(2, 2));
        let mut b = t.to_bytes(Dtype::F64);
        assert!(PropagatedTensor::from_bytes(&b[..30]).is_err());
        b[0] = b'X';
        assert!(PropagatedTensor::from_bytes(&b).is_err());
        let mut b = t.to_bytes(Dtype::F64);
        b[24] = 9;
        assert!(PropagatedTensor::from_bytes(&b).is_err());
    }

    #[test]
    fn sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hop_1.elpt");
        let t = PropagatedTensor::without_retention(Matrix::zeros(1, 1));
        let meta = TensorMetadata {
            strategy: "plain".into(),
            plan: "metapath[rel]".into(),
            operator_kind: "metapath".into(),
            hop: 1,
            seed: None,
            rows: 1,
            cols: 1,
            retention_column: false,
            params: Default::default(),
            notes: vec![],
        };
        write_elpt(&p, &t, Dtype::F64, Some(&meta)).unwrap();
        let side: TensorMetadata = serde_json::from_str(&fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(side, meta);
        assert_eq!(read_elpt(&p).unwrap(), t);
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(
            (rows, cols, bits) in (0usize..6, 1usize..5).prop_flat_map(|(r, c)| {
                (Just(r), Just(c), proptest::collection::vec(any::<u64>(), r * c))
            }),
            retention: bool,
        ) {
            let data: Vec<f64> = bits.into_iter().map(f64::from_bits).collect();
            let t = PropagatedTensor::new(Matrix::from_vec(rows, cols, data), retention);
            let back = PropagatedTensor::from_bytes(&t.to_bytes(Dtype::F64)).unwrap();
            prop_assert_eq!(back.has_retention(), retention);
            let same = back.values().data().iter().zip(t.values().data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}

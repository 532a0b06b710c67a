//! `GSTN` raw tensors: magic, `u32` version, `u32` rank, `u64` dims, then
//! little-endian `f64` data in row-major order.

use std::path::Path;

use super::{push_f64s, Reader};
use crate::error::{KitError, Result};

pub const MAGIC: &[u8; 4] = b"GSTN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(KitError::Config(format!(
                "tensor dims {dims:?} hold {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        push_f64s(&mut out, &self.data);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        if r.take(4)? != MAGIC {
            return Err(KitError::format(path, "not a GSTN tensor"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(KitError::format(path, format!("unsupported GSTN version {version}")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| KitError::format(path, "tensor size overflow"))?;
        let data = r.f64s(n)?;
        r.finish()?;
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&super::read(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_exact_roundtrip() {
        let t = Tensor::new(vec![2, 3], vec![0.0, -1.5, f64::MIN_POSITIVE, 1e300, 0.1, -0.0]).unwrap();
        let bytes = t.encode();
        assert_eq!(&bytes[..4], b"GSTN");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 16 + 48);
        let back = Tensor::decode(&bytes, Path::new("t")).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.dims, vec![2, 3]);
        assert!(back.data[5].is_sign_negative());
    }

    #[test]
    fn rejects_corrupt() {
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().encode();
        assert!(Tensor::decode(&t[..t.len() - 1], Path::new("t")).is_err());
        let mut extra = t.clone();
        extra.push(0);
        assert!(Tensor::decode(&extra, Path::new("t")).is_err());
        assert!(Tensor::decode(b"GSTX", Path::new("t")).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0]).is_err());
    }
}

//! Versioned little-endian binary dataset file.
//!
//! Layout: magic `GNDS`, u32 version, u32 rank, rank × u64 dims, u64
//! classes, u64 count, count × dims f64 features, count × u64 labels, u8
//! normalization flag, then (if set) mean and scale as f64.

use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GNDS";
const VERSION: u32 = 1;

pub fn write_cache(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(32 + ds.features().len() * 8 + ds.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.feature_shape().len() as u32).to_le_bytes());
    for &d in ds.feature_shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(ds.classes() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for v in ds.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in ds.labels() {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    match ds.normalization() {
        None => out.push(0),
        Some(n) => {
            out.push(1);
            for v in n.mean.iter().chain(&n.scale) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Format("dataset cache: truncated".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(8).ok_or_else(|| Error::Format("dataset cache: bad size".into()))?)?
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("dataset cache: bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("dataset cache: unsupported version {version}")));
    }
    let rank = c.u32()? as usize;
    let shape = (0..rank).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let classes = c.u64()?;
    let count = c.u64()?;
    let len: usize = shape.iter().product();
    let features = c.f64s(count * len)?;
    let labels = (0..count).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let norm = match c.take(1)?[0] {
        0 => None,
        1 => Some(Normalization {
            mean: c.f64s(len)?,
            scale: c.f64s(len)?,
        }),
        f => return Err(Error::Format(format!("dataset cache: bad normalization flag {f}"))),
    };
    let mut ds = Dataset::new(features, labels, shape, classes)?;
    ds.normalization = norm;
    Ok(ds)
}

//! `RTEN` binary tensor files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"RTEN" | version: u8 = 1 | dtype: u8 (1 = f32, 2 = f64) | rank: u32
//! | rank x extent: u64 | row-major payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 4] = b"RTEN";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0x01,
            Dtype::F64 => 0x02,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode(tensor: &Tensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * tensor.rank() + dtype.width() * tensor.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype.tag());
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &e in tensor.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => {
            for &v in tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("truncated while reading {what}"))),
        }
    }
}

/// Decodes a tensor and reports the dtype it was stored with. `f32` payloads
/// are widened to `f64`.
pub fn decode(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = match cur.take(1, "dtype")?[0] {
        0x01 => Dtype::F32,
        0x02 => Dtype::F64,
        other => return Err(Error::Format(format!("unknown dtype tag {other:#04x}"))),
    };
    let rank = u32::from_le_bytes(cur.take(4, "rank")?.try_into().unwrap()) as usize;
    if rank > MAX_RANK {
        return Err(Error::Format(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let e = u64::from_le_bytes(cur.take(8, "extent")?.try_into().unwrap());
        shape.push(usize::try_from(e).map_err(|_| Error::Format(format!("extent {e} too large")))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let payload = cur.take(
        count
            .checked_mul(dtype.width())
            .ok_or_else(|| Error::Format("payload size overflows".into()))?,
        "payload",
    )?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - cur.pos
        )));
    }
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((tensor, dtype))
}

pub fn write(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(tensor, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<(Tensor, Dtype)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let bytes = encode(&t, Dtype::F64);
        assert_eq!(&bytes[..4], b"RTEN");
        assert_eq!(bytes[4], 0x01);
        assert_eq!(bytes[5], 0x02);
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..18], &2u64.to_le_bytes());
        assert_eq!(&bytes[18..26], &1u64.to_le_bytes());
        assert_eq!(&bytes[26..34], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 42);
    }

    #[test]
    fn f32_widens() {
        let t = Tensor::new(vec![3], vec![0.1, 1e10, -3.5]).unwrap();
        let (back, dtype) = decode(&encode(&t, Dtype::F32)).unwrap();
        assert_eq!(dtype, Dtype::F32);
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!(((a - b) / a).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::ones(&[2, 2]);
        let good = encode(&t, Dtype::F64);
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = good.clone();
        bad[5] = 0x07;
        assert!(decode(&bad).is_err());
        let mut long = good;
        long.push(0);
        assert!(decode(&long).is_err());
    }
}

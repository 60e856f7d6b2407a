//! `ASCW` weight files.
//!
//! Layout (little-endian): magic `ASCW`, version `u16`, entry count `u32`,
//! then per entry a `u16`-length-prefixed UTF-8 name, rank `u8`, each dim
//! as `u32`, and the row-major `f32` payload.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::Tensor;

pub const MAGIC: &[u8; 4] = b"ASCW";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an ASCW weight file")]
    BadMagic,
    #[error("unsupported ASCW version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed weight entry: {0}")]
    Malformed(String),
}

pub fn write_weights<W: Write>(mut w: W, entries: &[(&str, &Tensor<f32>)]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[t.shape().len() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>, WeightsError> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| WeightsError::Malformed(e.to_string()))?;
        let rank = read_array::<1, _>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_array(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let t = Tensor::new(shape, data).map_err(|e| WeightsError::Malformed(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes_are_fixed() {
        let t = Tensor::new(vec![2], vec![1.0f32, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &[("w", &t)]).unwrap();
        assert_eq!(&buf[..4], b"ASCW");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..10], &1u32.to_le_bytes());
        assert_eq!(&buf[10..12], &1u16.to_le_bytes());
        assert_eq!(buf[12], b'w');
        assert_eq!(buf[13], 1);
        assert_eq!(&buf[14..18], &2u32.to_le_bytes());
        assert_eq!(&buf[18..22], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 26);
        let back = read_weights(&buf[..]).unwrap();
        assert_eq!(back, vec![("w".to_string(), t)]);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(read_weights(&b"RIFF\x01\x00"[..]), Err(WeightsError::BadMagic)));
        let mut buf = b"ASCW".to_vec();
        buf.extend_from_slice(&7u16.to_le_bytes());
        assert!(matches!(read_weights(&buf[..]), Err(WeightsError::UnsupportedVersion(7))));
    }
}

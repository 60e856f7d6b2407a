//! "ASCF" feature cache: a fixed header followed by one record per clip.
//!
//! Header: `b"ASCF"`, version `u16`, frontend id `u8`, then F, T, C as
//! `u32`. Record: label `u8`, device tag as `u16` length + UTF-8, then
//! `F·T·C` little-endian `f32`. All integers little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{FrontendKind, SpectrogramTensor};

const MAGIC: &[u8; 4] = b"ASCF";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a feature cache (bad magic)")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed cache: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheHeader {
    pub frontend: FrontendKind,
    pub f: usize,
    pub t: usize,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub label: u8,
    pub device: String,
    pub features: SpectrogramTensor,
}

pub struct CacheWriter<W: Write> {
    w: W,
    header: CacheHeader,
}

impl<W: Write> CacheWriter<W> {
    pub fn new(mut w: W, header: CacheHeader) -> io::Result<Self> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[header.frontend.id()])?;
        for d in [header.f, header.t, header.c] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        Ok(Self { w, header })
    }

    pub fn write_record(&mut self, label: u8, device: &str, feat: &SpectrogramTensor) -> Result<(), CacheError> {
        if feat.shape() != [self.header.f, self.header.t, self.header.c] {
            return Err(CacheError::Malformed(format!(
                "record shape {:?} differs from header {:?}",
                feat.shape(),
                [self.header.f, self.header.t, self.header.c]
            )));
        }
        let tag = device.as_bytes();
        let len = u16::try_from(tag.len()).map_err(|_| CacheError::Malformed("device tag too long".into()))?;
        self.w.write_all(&[label])?;
        self.w.write_all(&len.to_le_bytes())?;
        self.w.write_all(tag)?;
        let mut bytes = Vec::with_capacity(feat.data.len() * 4);
        for v in &feat.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.w.write_all(&bytes)?;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.w.flush()?;
        Ok(self.w)
    }
}

pub struct CacheReader<R: Read> {
    r: R,
    pub header: CacheHeader,
}

fn read_exact<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

impl<R: Read> CacheReader<R> {
    pub fn new(mut r: R) -> Result<Self, CacheError> {
        let magic = read_exact::<4>(&mut r).map_err(|_| CacheError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CacheError::BadMagic);
        }
        let version = u16::from_le_bytes(read_exact(&mut r)?);
        if version != VERSION {
            return Err(CacheError::UnsupportedVersion(version));
        }
        let id = read_exact::<1>(&mut r)?[0];
        let frontend =
            FrontendKind::from_id(id).ok_or_else(|| CacheError::Malformed(format!("unknown frontend id {id}")))?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        }
        Ok(Self { r, header: CacheHeader { frontend, f: dims[0], t: dims[1], c: dims[2] } })
    }

    /// Next record, or `None` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<CacheRecord>, CacheError> {
        let mut label = [0u8; 1];
        if self.r.read(&mut label)? == 0 {
            return Ok(None);
        }
        let truncated = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => CacheError::Malformed("truncated record".into()),
            _ => CacheError::Io(e),
        };
        let len = u16::from_le_bytes(read_exact(&mut self.r).map_err(truncated)?) as usize;
        let mut tag = vec![0u8; len];
        self.r.read_exact(&mut tag).map_err(truncated)?;
        let device = String::from_utf8(tag).map_err(|e| CacheError::Malformed(e.to_string()))?;
        let CacheHeader { frontend, f, t, c } = self.header;
        let mut bytes = vec![0u8; f * t * c * 4];
        self.r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(Some(CacheRecord {
            label: label[0],
            device,
            features: SpectrogramTensor { data, f, t, c, frontend: Some(frontend) },
        }))
    }
}

impl<R: Read> Iterator for CacheReader<R> {
    type Item = Result<CacheRecord, CacheError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

pub fn write_cache(path: impl AsRef<Path>, header: CacheHeader, records: &[CacheRecord]) -> Result<(), CacheError> {
    let mut w = CacheWriter::new(BufWriter::new(File::create(path)?), header)?;
    for r in records {
        w.write_record(r.label, &r.device, &r.features)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<(CacheHeader, Vec<CacheRecord>), CacheError> {
    let reader = CacheReader::new(BufReader::new(File::open(path)?))?;
    let header = reader.header;
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, records))
}

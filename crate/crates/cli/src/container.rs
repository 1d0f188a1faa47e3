//! Binary record container shared by checkpoints and window caches.
//!
//! Layout: magic `SVAE`, format version (u32), then records up to the end
//! of the stream: name length (u32) and UTF-8 name, dtype tag (u8), rank (u32),
//! dims (u64 each) and the raw little-endian values. Bytes records have
//! rank 1.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SVAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a container file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("record `{name}`: {msg}")]
    Record { name: String, msg: String },
    #[error("truncated or unreadable container: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
    Bytes(Vec<u8>),
}

impl Payload {
    fn tag(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::U64(_) => 2,
            Payload::Bytes(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U64(v) => v.len(),
            Payload::Bytes(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u64>,
    pub payload: Payload,
}

impl Record {
    pub fn bytes(name: impl Into<String>, data: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len() as u64],
            payload: Payload::Bytes(data),
        }
    }

    pub fn u64(name: impl Into<String>, value: u64) -> Self {
        Self {
            name: name.into(),
            dims: vec![1],
            payload: Payload::U64(vec![value]),
        }
    }

    fn err(&self, msg: impl Into<String>) -> ContainerError {
        ContainerError::Record {
            name: self.name.clone(),
            msg: msg.into(),
        }
    }

    pub fn as_bytes(&self) -> Result<&[u8], ContainerError> {
        match &self.payload {
            Payload::Bytes(b) => Ok(b),
            _ => Err(self.err("expected a bytes record")),
        }
    }

    pub fn as_u64(&self) -> Result<u64, ContainerError> {
        match &self.payload {
            Payload::U64(v) if v.len() == 1 => Ok(v[0]),
            _ => Err(self.err("expected a single u64")),
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_records<W: Write>(w: &mut W, records: &[Record]) -> Result<(), ContainerError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for rec in records {
        let count: u64 = rec.dims.iter().product();
        if count as usize != rec.payload.len() {
            return Err(rec.err("dims do not match the number of values"));
        }
        w.write_all(&(rec.name.len() as u32).to_le_bytes())?;
        w.write_all(rec.name.as_bytes())?;
        w.write_all(&[rec.payload.tag()])?;
        w.write_all(&(rec.dims.len() as u32).to_le_bytes())?;
        for d in &rec.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        match &rec.payload {
            Payload::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            Payload::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            Payload::U64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            Payload::Bytes(v) => w.write_all(v)?,
        }
    }
    Ok(())
}

pub fn to_bytes(records: &[Record]) -> Result<Vec<u8>, ContainerError> {
    let mut out = Vec::new();
    write_records(&mut out, records)?;
    Ok(out)
}

const MAX_RANK: u32 = 8;

pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<Record>, ContainerError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(ContainerError::Version(version));
    }
    let mut records = Vec::new();
    loop {
        let mut first = [0u8; 4];
        let got = r.read(&mut first[..1])?;
        if got == 0 {
            break;
        }
        r.read_exact(&mut first[1..])?;
        let len = u32::from_le_bytes(first) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| ContainerError::Record {
            name: "?".into(),
            msg: "name is not UTF-8".into(),
        })?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let rank = read_u32(r)?;
        let bad = |msg: &str| ContainerError::Record {
            name: name.clone(),
            msg: msg.to_string(),
        };
        if rank > MAX_RANK {
            return Err(bad("rank too large"));
        }
        let dims = (0..rank)
            .map(|_| read_u64(r))
            .collect::<io::Result<Vec<u64>>>()?;
        let n = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("dims overflow"))? as usize;
        let width = match tag[0] {
            0 => 4,
            1 | 2 => 8,
            3 => 1,
            t => return Err(bad(&format!("unknown dtype tag {t}"))),
        };
        let mut raw = Vec::new();
        r.by_ref().take((n * width) as u64).read_to_end(&mut raw)?;
        if raw.len() != n * width {
            return Err(ContainerError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("record `{name}` is truncated"),
            )));
        }
        let payload = match tag[0] {
            0 => Payload::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            1 => Payload::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            2 => Payload::U64(
                raw.chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            _ => Payload::Bytes(raw),
        };
        records.push(Record {
            name,
            dims,
            payload,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record::bytes("config", b"a = 1\n".to_vec()),
            Record::u64("step", 42),
            Record {
                name: "w".into(),
                dims: vec![2, 3],
                payload: Payload::F32(vec![1.0, -2.5, 3.0, f32::MIN_POSITIVE, 0.0, 7.0]),
            },
            Record {
                name: "v".into(),
                dims: vec![1],
                payload: Payload::F64(vec![std::f64::consts::PI]),
            },
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = to_bytes(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"SVAE");
        let back = read_records(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, sample());
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = to_bytes(&sample()).unwrap();
        assert!(matches!(
            read_records(&mut &b"XXXX"[..]),
            Err(ContainerError::BadMagic)
        ));
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(
            read_records(&mut wrong.as_slice()),
            Err(ContainerError::Version(9))
        ));
        let cut = &bytes[..bytes.len() - 3];
        assert!(read_records(&mut &cut[..]).is_err());
    }

    #[test]
    fn mismatched_dims_refuse_to_write() {
        let rec = Record {
            name: "x".into(),
            dims: vec![3],
            payload: Payload::F32(vec![1.0]),
        };
        assert!(to_bytes(&[rec]).is_err());
    }
}

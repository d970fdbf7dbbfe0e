//! Versioned policy checkpoints.
//!
//! Layout (little-endian): magic `AERCK1`, `u32` kind, `u32` M, L, N, the
//! trunk and critic hidden widths as `u32` length-prefixed lists, the state
//! normalizer as `u64` length plus mean and std `f64` arrays, then a `u64`
//! parameter count and the flat `f64` parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::env::StateNormalizer;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"AERCK1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ActorCritic = 1,
    QNetwork = 2,
}

impl ModelKind {
    fn from_code(code: usize) -> Result<Self> {
        match code {
            1 => Ok(Self::ActorCritic),
            2 => Ok(Self::QNetwork),
            other => Err(Error::Shape(format!("unknown model kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_beams: usize,
    pub trunk: Vec<usize>,
    /// Empty for Q-networks.
    pub critic: Vec<usize>,
    pub normalizer: StateNormalizer,
    pub params: Vec<f64>,
}

fn put_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} exceeds u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s(out: &mut impl Write, values: &[f64]) -> Result<()> {
    out.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Input {
    inner: BufReader<File>,
    what: String,
}

impl Input {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated(self.what.clone()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn widths(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if n > 64 {
            return Err(Error::Shape(format!("{}: implausible layer count {n}", self.what)));
        }
        (0..n).map(|_| self.u32()).collect()
    }

    fn f64s(&mut self, limit: u64) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.bytes()?);
        if n > limit {
            return Err(Error::Shape(format!("{}: array length {n} exceeds {limit}", self.what)));
        }
        (0..n).map(|_| Ok(f64::from_le_bytes(self.bytes()?))).collect()
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        for v in [self.kind as usize, self.num_uavs, self.num_bs, self.num_beams] {
            put_u32(&mut out, v)?;
        }
        for list in [&self.trunk, &self.critic] {
            put_u32(&mut out, list.len())?;
            for &w in list {
                put_u32(&mut out, w)?;
            }
        }
        put_f64s(&mut out, &self.normalizer.mean)?;
        put_f64s(&mut out, &self.normalizer.std)?;
        put_f64s(&mut out, &self.params)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = Input {
            inner: BufReader::new(File::open(path)?),
            what: path.display().to_string(),
        };
        let magic: [u8; 6] = input.bytes()?;
        if magic != *CHECKPOINT_MAGIC {
            if magic[..5] == CHECKPOINT_MAGIC[..5] {
                return Err(Error::Version {
                    found: String::from_utf8_lossy(&magic[5..]).into_owned(),
                    expected: String::from_utf8_lossy(&CHECKPOINT_MAGIC[5..]).into_owned(),
                });
            }
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            });
        }
        let kind = ModelKind::from_code(input.u32()?)?;
        let (num_uavs, num_bs, num_beams) = (input.u32()?, input.u32()?, input.u32()?);
        let trunk = input.widths()?;
        let critic = input.widths()?;
        let dim = (3 * num_uavs * num_bs * num_beams) as u64;
        let mean = input.f64s(dim)?;
        let std = input.f64s(dim)?;
        if mean.len() as u64 != dim || std.len() as u64 != dim {
            return Err(Error::Shape(format!("{}: normalizer does not match dims", input.what)));
        }
        let params = input.f64s(1 << 32)?;
        let mut extra = [0u8; 1];
        if input.inner.read(&mut extra)? != 0 {
            return Err(Error::Shape(format!("{}: trailing bytes after payload", input.what)));
        }
        Ok(Self {
            kind,
            num_uavs,
            num_bs,
            num_beams,
            trunk,
            critic,
            normalizer: StateNormalizer { mean, std },
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            kind: ModelKind::ActorCritic,
            num_uavs: 1,
            num_bs: 1,
            num_beams: 2,
            trunk: vec![4, 3],
            critic: vec![2],
            normalizer: StateNormalizer {
                mean: vec![0.5, -1.0, f64::MIN_POSITIVE, 3.0, 1e300, -0.0],
                std: vec![1.0; 6],
            },
            params: vec![0.1, -2.5e-17, 7.0],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.normalizer.mean[5].to_bits(), (-0.0f64).to_bits());
        let bytes = std::fs::read(&path).unwrap();
        back.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn rejects_truncation_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        sample().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Truncated(_))));
        bytes[5] = b'9';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Version { .. })));
    }
}

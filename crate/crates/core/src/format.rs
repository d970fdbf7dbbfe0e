//! Little-endian binary containers shared by the dataset and beam-table files.
//!
//! Layout: a six-byte magic whose last byte is the format version, then
//! `count, M, L, N` as `u32`, then `count` fixed-size blocks of `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub count: usize,
    pub m: usize,
    pub l: usize,
    pub n: usize,
}

pub struct BlockWriter {
    out: BufWriter<File>,
}

impl BlockWriter {
    pub fn create(path: &Path, magic: &[u8; 6], header: Header) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(magic)?;
        for v in [header.count, header.m, header.l, header.n] {
            let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} exceeds u32")))?;
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(Self { out })
    }

    pub fn write_f32s(&mut self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        for v in values {
            self.out.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub struct BlockReader {
    input: BufReader<File>,
    what: String,
}

impl BlockReader {
    pub fn open(path: &Path, magic: &[u8; 6]) -> Result<(Self, Header)> {
        let mut input = BufReader::new(File::open(path)?);
        let what = path.display().to_string();
        let mut found = [0u8; 6];
        read_exact(&mut input, &mut found, &what)?;
        if found != *magic {
            if found[..5] == magic[..5] {
                return Err(Error::Version {
                    found: String::from_utf8_lossy(&found[5..]).into_owned(),
                    expected: String::from_utf8_lossy(&magic[5..]).into_owned(),
                });
            }
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            let mut b = [0u8; 4];
            read_exact(&mut input, &mut b, &what)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let header = Header {
            count: dims[0],
            m: dims[1],
            l: dims[2],
            n: dims[3],
        };
        if header.m == 0 || header.l == 0 || header.n == 0 {
            return Err(Error::Shape(format!("zero dimension in header {header:?}")));
        }
        Ok((Self { input, what }, header))
    }

    pub fn read_f32s(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 4];
        read_exact(&mut self.input, &mut buf, &self.what)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    /// Fails if bytes remain after the declared blocks.
    pub fn expect_eof(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.input.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::Shape(format!("{}: trailing bytes after payload", self.what))),
        }
    }
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(what.to_string()),
        _ => Error::Io(e),
    })
}

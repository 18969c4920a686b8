//! Little-endian binary container shared by the gallery and checkpoint file
//! formats. Readers track the byte offset so malformed files are reported
//! with the position of the offending field.

use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte {offset}: not a {expected} file")]
    BadMagic { offset: u64, expected: &'static str },
    #[error("unsupported format version {found} at byte {offset} (expected {expected})")]
    Version {
        offset: u64,
        found: u32,
        expected: u32,
    },
    #[error("truncated file at byte {offset} while reading {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("trailing bytes after byte {offset}")]
    TrailingBytes { offset: u64 },
    #[error("invalid field at byte {offset}: {what}")]
    Invalid { offset: u64, what: String },
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchMismatch { expected: String, found: String },
}

pub struct ByteWriter<W: Write> {
    inner: W,
    offset: u64,
}

impl<W: Write> ByteWriter<W> {
    pub fn new(inner: W) -> Self {
        ByteWriter { inner, offset: 0 }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) -> Result<(), FormatError> {
        self.inner.write_all(bytes)?;
        self.offset += bytes.len() as u64;
        Ok(())
    }

    pub fn write_u32(&mut self, v: u32) -> Result<(), FormatError> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_u64(&mut self, v: u64) -> Result<(), FormatError> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_f64(&mut self, v: f64) -> Result<(), FormatError> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn finish(mut self) -> Result<(), FormatError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub struct ByteReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub fn new(inner: R) -> Self {
        ByteReader { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn fill(&mut self, buf: &mut [u8], what: &'static str) -> Result<(), FormatError> {
        let at = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(FormatError::Truncated { offset: at, what })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn expect_magic(
        &mut self,
        magic: &[u8; 8],
        expected: &'static str,
    ) -> Result<(), FormatError> {
        let at = self.offset;
        let mut buf = [0u8; 8];
        self.fill(&mut buf, "magic")?;
        if &buf != magic {
            return Err(FormatError::BadMagic {
                offset: at,
                expected,
            });
        }
        Ok(())
    }

    pub fn expect_version(&mut self, expected: u32) -> Result<(), FormatError> {
        let at = self.offset;
        let found = self.read_u32("version")?;
        if found != expected {
            return Err(FormatError::Version {
                offset: at,
                found,
                expected,
            });
        }
        Ok(())
    }

    pub fn read_u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn read_u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf, what)?;
        Ok(u64::from_le_bytes(buf))
    }

    pub fn read_f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf, what)?;
        Ok(f64::from_le_bytes(buf))
    }

    pub fn read_f64_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, FormatError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.read_f64(what)?);
        }
        Ok(out)
    }

    /// Fails with `TrailingBytes` unless the stream is exhausted.
    pub fn expect_eof(&mut self) -> Result<(), FormatError> {
        let mut buf = [0u8; 1];
        match self.inner.read(&mut buf) {
            Ok(0) => Ok(()),
            Ok(_) => Err(FormatError::TrailingBytes {
                offset: self.offset,
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn invalid(&self, what: impl Into<String>) -> FormatError {
        FormatError::Invalid {
            offset: self.offset,
            what: what.into(),
        }
    }
}

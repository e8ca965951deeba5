//! OADF feature files.
//!
//! Layout (all little-endian):
//!
//! | bytes     | content                      |
//! |-----------|------------------------------|
//! | 0..4      | magic `OADF`                 |
//! | 4..8      | format version, `u32` (= 1)  |
//! | 8..12     | snippet count `T`, `u32`     |
//! | 12..16    | feature width `D`, `u32`     |
//! | 16..      | `T * D` `f32`, row-major     |
//!
//! The video id is the file stem.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"OADF";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 16;

/// Decoded contents of one feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub snippets: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureFile {
    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

pub fn encode(snippets: usize, dim: usize, data: &[f32]) -> Vec<u8> {
    assert_eq!(snippets * dim, data.len());
    let mut out = Vec::with_capacity(HEADER_BYTES + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(snippets as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write(path: &Path, snippets: usize, dim: usize, data: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    w.write_all(&encode(snippets, dim, data)).map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}

pub fn read(path: &Path) -> Result<FeatureFile> {
    let mut reader = OadfReader::open(path)?;
    let mut data = Vec::with_capacity(reader.snippets() * reader.dim());
    while let Some(row) = reader.next_snippet()? {
        data.extend_from_slice(&row);
    }
    Ok(FeatureFile {
        snippets: reader.snippets(),
        dim: reader.dim(),
        data,
    })
}

/// Incremental reader yielding one snippet at a time.
pub struct OadfReader<R> {
    inner: R,
    path: PathBuf,
    snippets: usize,
    dim: usize,
    consumed: usize,
}

impl OadfReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(CliError::io(path))?;
        Self::new(BufReader::new(f), path)
    }
}

impl<R: Read> OadfReader<R> {
    pub fn new(mut inner: R, path: &Path) -> Result<Self> {
        let mut header = [0u8; HEADER_BYTES];
        read_exact_or(&mut inner, &mut header, path, || {
            format!("truncated header: expected {HEADER_BYTES} bytes")
        })?;
        if &header[0..4] != MAGIC {
            return Err(CliError::format(path, format!("bad magic {:?}, expected \"OADF\"", &header[0..4])));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(CliError::format(path, format!("unsupported version {version}, expected {VERSION}")));
        }
        let snippets = word(8) as usize;
        let dim = word(12) as usize;
        if dim == 0 && snippets > 0 {
            return Err(CliError::format(path, "feature width D is 0"));
        }
        Ok(OadfReader {
            inner,
            path: path.to_path_buf(),
            snippets,
            dim,
            consumed: 0,
        })
    }

    pub fn snippets(&self) -> usize {
        self.snippets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total size a well-formed file with this header must have.
    pub fn expected_bytes(&self) -> usize {
        HEADER_BYTES + self.snippets * self.dim * 4
    }

    pub fn next_snippet(&mut self) -> Result<Option<Vec<f32>>> {
        if self.consumed == self.snippets {
            return Ok(None);
        }
        let mut buf = vec![0u8; self.dim * 4];
        let expected = self.expected_bytes();
        let t = self.consumed;
        read_exact_or(&mut self.inner, &mut buf, &self.path, || {
            format!("truncated at snippet {t}: expected {expected} bytes in total")
        })?;
        self.consumed += 1;
        Ok(Some(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        ))
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], path: &Path, msg: impl FnOnce() -> String) -> Result<()> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => Err(CliError::format(path, msg())),
        Err(e) => Err(CliError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.oadf");
        let data = vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, -0.0];
        write(&p, 3, 2, &data).unwrap();
        let f = read(&p).unwrap();
        assert_eq!((f.snippets, f.dim), (3, 2));
        assert_eq!(f.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        let err = read(&p).unwrap_err().to_string();
        assert!(err.contains("clip.oadf") && err.contains("40 bytes"), "{err}");

        let mut bad = bytes.clone();
        bad[4] = 2;
        std::fs::write(&p, &bad).unwrap();
        assert!(read(&p).unwrap_err().to_string().contains("version 2"));

        let mut bad = bytes;
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(read(&p).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn empty_file_has_zero_snippets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.oadf");
        write(&p, 0, 4, &[]).unwrap();
        let f = read(&p).unwrap();
        assert_eq!(f.snippets, 0);
        assert!(f.data.is_empty());
    }
}

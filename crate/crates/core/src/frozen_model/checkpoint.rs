//! Named-record binary container shared by model checkpoints and trained
//! prompt artifacts.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CTPTCKPT" | u32 version | u32 meta_len | meta (JSON, UTF-8)
//! u32 record_count
//! per record: u32 name_len | name | u32 ndim | u64 dims.. | f64 data..
//! 32-byte SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 8] = b"CTPTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub metadata: serde_json::Value,
    pub records: Vec<(String, Matrix)>,
}

impl RecordFile {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.records.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn take(&mut self, name: &str) -> Result<Matrix> {
        let i = self
            .records
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing record {name}")))?;
        Ok(self.records.remove(i).1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        let mut out = Vec::with_capacity(64 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, m) in &self.records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(Error::Format("file too short".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch (truncated or corrupted file)".into()));
        }
        let meta_len = r.u32()? as usize;
        let metadata = serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Format(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::Format("record name is not UTF-8".into()))?;
            let ndim = r.u32()?;
            if ndim != 2 {
                return Err(Error::Format(format!("record {name} has {ndim} dims, expected 2")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Format(format!("record {name} is too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            records.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after records".into()));
        }
        Ok(Self { metadata, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    b"BIGICKPT"
//! version  u32
//! meta     u64 length + UTF-8 text
//! step     u64
//! params   u32 count, each: name, value, adam m, adam v
//! extras   u32 count, each: name, value
//! digest   32-byte SHA-256 of everything above
//! ```
//!
//! A name is `u32 length + UTF-8`; a tensor is `u64 rows, u64 cols` followed
//! by `rows * cols` `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BIGICKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub store: ParamStore,
    /// Non-trainable tensors stored alongside the parameters.
    pub extras: Vec<(String, Tensor)>,
}

pub fn encode(metadata: &str, store: &ParamStore, extras: &[(&str, &Tensor)]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(metadata.len() as u64).to_le_bytes());
    buf.extend_from_slice(metadata.as_bytes());
    buf.extend_from_slice(&store.step().to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.params() {
        put_name(&mut buf, &p.name);
        put_tensor(&mut buf, &p.value);
        put_tensor(&mut buf, &p.m);
        put_tensor(&mut buf, &p.v);
    }
    buf.extend_from_slice(&(extras.len() as u32).to_le_bytes());
    for (name, t) in extras {
        put_name(&mut buf, name);
        put_tensor(&mut buf, t);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected version {VERSION})"
        )));
    }
    if bytes.len() < 12 + 32 {
        return Err(truncated());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint(
            "checksum mismatch (truncated or corrupted file)".into(),
        ));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let meta_len = r.u64()? as usize;
    let metadata =
        String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
    let step = r.u64()?;
    let mut store = ParamStore::new();
    for _ in 0..r.u32()? {
        let name = r.name()?;
        let value = r.tensor()?;
        let m = r.tensor()?;
        let v = r.tensor()?;
        store.add_with_moments(&name, value, m, v)?;
    }
    store.set_step(step);
    let mut extras = Vec::new();
    for _ in 0..r.u32()? {
        let name = r.name()?;
        extras.push((name, r.tensor()?));
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(Checkpoint {
        metadata,
        store,
        extras,
    })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn put_name(buf: &mut Vec<u8>, name: &str) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
    for x in t.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn truncated() -> Error {
    Error::Checkpoint("truncated file".into())
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
            .ok_or_else(truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(truncated)?;
        let raw = self.take(n.checked_mul(8).ok_or_else(truncated)?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::from_vec(rows, cols, data))
    }
}

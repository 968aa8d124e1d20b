//! `.mmvt` container encoding.
//!
//! ```text
//! "MMVT" | u32 version (=1) | u32 tensor count
//! per tensor: u16 name length | UTF-8 name | u8 ndim | u32 extent × ndim
//!             | u8 dtype (0 = f32) | u64 payload offset
//! payload:    little-endian f32 blobs, contiguous, in declaration order
//! ```
//!
//! All integers are little-endian and offsets are absolute byte positions.
//! Tensors are written with trailing unit extents dropped (at least one
//! extent is kept) and are padded back to four extents with trailing 1s on
//! load, so `[n, 1, 1, 1]` vectors round-trip as rank-1 records.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::WeightStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MMVT";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: not an .mmvt file")]
    BadMagic,
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated file while reading {0}")]
    Truncated(String),
    #[error("tensor '{0}': extents overflow or exceed the payload")]
    DimOverflow(String),
    #[error("tensor '{name}': rank {ndim} is not in 1..=4")]
    BadRank { name: String, ndim: u8 },
    #[error("tensor '{0}': zero extent")]
    ZeroExtent(String),
    #[error("tensor '{name}': unsupported dtype tag {tag}")]
    UnsupportedDtype { name: String, tag: u8 },
    #[error("tensor '{0}': payload offset does not follow the previous tensor")]
    BadOffset(String),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("duplicate tensor name '{0}'")]
    DuplicateName(String),
    #[error("tensor name '{0}' is longer than 65535 bytes")]
    NameTooLong(String),
    #[error("{0} trailing bytes after the last payload")]
    TrailingBytes(usize),
}

fn stored_rank(dims: &[usize; 4]) -> usize {
    let mut r = 4;
    while r > 1 && dims[r - 1] == 1 {
        r -= 1;
    }
    r
}

pub fn encode(store: &WeightStore) -> Result<Vec<u8>, FormatError> {
    let mut header_len = 12usize;
    for (name, t) in store.iter() {
        if name.len() > u16::MAX as usize {
            return Err(FormatError::NameTooLong(name.to_string()));
        }
        header_len += 2 + name.len() + 1 + 4 * stored_rank(&t.dims()) + 1 + 8;
    }
    let payload_len: usize = store.iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(header_len + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    let mut offset = header_len as u64;
    for (name, t) in store.iter() {
        let dims = t.dims();
        let rank = stored_rank(&dims);
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank as u8);
        for &d in &dims[..rank] {
            let d = u32::try_from(d).map_err(|_| FormatError::DimOverflow(name.to_string()))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(DTYPE_F32);
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64 * 4;
    }
    for (_, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FormatError::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<WeightStore, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic").map_err(|_| FormatError::BadMagic)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")? as usize;

    let mut records: Vec<(String, [usize; 4], u64, usize)> = Vec::new();
    for i in 0..count {
        let ctx = alloc::format!("header of tensor {i}");
        let name_len = r.u16(&ctx)? as usize;
        let name = core::str::from_utf8(r.take(name_len, &ctx)?)
            .map_err(|_| FormatError::BadName)?
            .to_string();
        let ndim = r.u8(&ctx)?;
        if !(1..=4).contains(&ndim) {
            return Err(FormatError::BadRank { name, ndim });
        }
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(ndim as usize) {
            *d = r.u32(&ctx)? as usize;
        }
        if dims.contains(&0) {
            return Err(FormatError::ZeroExtent(name));
        }
        let tag = r.u8(&ctx)?;
        if tag != DTYPE_F32 {
            return Err(FormatError::UnsupportedDtype { name, tag });
        }
        let offset = r.u64(&ctx)?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| FormatError::DimOverflow(name.clone()))?;
        records.push((name, dims, offset, numel));
    }

    let mut store = WeightStore::new();
    let mut expected = r.pos as u64;
    for (name, dims, offset, numel) in records {
        if offset != expected {
            return Err(FormatError::BadOffset(name));
        }
        r.pos = offset as usize;
        let raw = r.take(numel * 4, &alloc::format!("payload of '{name}'"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        expected = offset + numel as u64 * 4;
        let t = Tensor::new(dims, data).map_err(|_| FormatError::DimOverflow(name.clone()))?;
        if !store.insert(name.clone(), t) {
            return Err(FormatError::DuplicateName(name));
        }
    }
    if r.pos < bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(store)
}

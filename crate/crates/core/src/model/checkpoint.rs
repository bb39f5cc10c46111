//! `LPNW` checkpoint files.
//!
//! ```text
//! "LPNW"                      4 bytes magic
//! version: u16 = 1
//! count:   u16                number of tensors
//! count × {
//!     name_len: u8, name: [u8; name_len]
//!     rank: u8, dims: [u32; rank]
//!     data: [f32; product(dims)]
//! }
//! crc32: u32                  IEEE CRC-32 of every preceding byte
//! ```
//!
//! All integers and reals are little-endian.

use std::fs;
use std::path::Path;

use super::params::ModelParams;
use super::spec::{Architecture, ModelSpec};
use crate::error::{CheckpointError, Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LPNW";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    let named = params.named_tensors();
    let count = u16::try_from(named.len())
        .map_err(|_| Error::Input(format!("{} tensors exceed u16", named.len())))?;
    let mut buf = Vec::with_capacity(params.scalar_count() * 4 + 1024);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, t) in named {
        let name_len = u8::try_from(name.len())
            .map_err(|_| Error::Input(format!("tensor name {name} longer than 255 bytes")))?;
        buf.push(name_len);
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &d in t.dims() {
            let d = u32::try_from(d).map_err(|_| Error::Input(format!("{name}: dim {d} > u32")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Bytes reserved for the trailing checksum.
    limit: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.limit {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into named tensors. Magic and version are checked
/// first, then the structure (truncation, trailing bytes), then the CRC.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..bytes.len().min(4)].to_vec()).into());
    }
    let mut r = Reader {
        buf: bytes,
        pos: 4,
        limit: bytes.len().saturating_sub(4).max(4),
    };
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let count = r.u16()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| {
            CheckpointError::LayoutMismatch(format!("{name}: dims {dims:?} overflow"))
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&dims, data)
            .map_err(|e| CheckpointError::LayoutMismatch(format!("{name}: {e}")))?;
        out.push((name, t));
    }
    if bytes.len() < r.pos + 4 {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed: 4,
            len: bytes.len(),
        }
        .into());
    }
    if bytes.len() > r.pos + 4 {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos - 4).into());
    }
    let stored = u32::from_le_bytes(bytes[r.pos..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..r.pos]);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed }.into());
    }
    Ok(out)
}

pub fn save_weights(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and validates it against `spec`.
pub fn load_weights(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelParams::from_named(spec, decode_checkpoint(&bytes)?)
}

impl Architecture {
    /// Loads a checkpoint and identifies which known architecture it fits.
    pub fn load_any(path: impl AsRef<Path>) -> Result<(Architecture, ModelParams<f32>)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let named = decode_checkpoint(&bytes)?;
        for arch in Architecture::ALL {
            if let Ok(p) = ModelParams::from_named(&arch.spec(), named.clone()) {
                return Ok((arch, p));
            }
        }
        Err(CheckpointError::UnknownArchitecture.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_reduced, init_params};

    fn sample() -> Vec<u8> {
        encode_checkpoint(&init_params(&build_reduced(), 3).unwrap()).unwrap()
    }

    fn err(bytes: &[u8]) -> CheckpointError {
        match decode_checkpoint(bytes) {
            Err(Error::Checkpoint(e)) => e,
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn header_layout() {
        let b = sample();
        assert_eq!(&b[..4], &[0x4C, 0x50, 0x4E, 0x57]);
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u16::from_le_bytes([b[6], b[7]]), 20);
        assert_eq!(b[8] as usize, "conv1_1.kernel".len());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = build_reduced();
        let p = init_params::<f32>(&spec, 3).unwrap();
        let bytes = encode_checkpoint(&p).unwrap();
        let back = ModelParams::from_named(&spec, decode_checkpoint(&bytes).unwrap()).unwrap();
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn distinct_corruption_errors() {
        let b = sample();
        let mut bad = b.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(err(&bad), CheckpointError::BadMagic(_)));

        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(err(&bad), CheckpointError::UnsupportedVersion(2)));

        assert!(matches!(
            err(&b[..b.len() - 10]),
            CheckpointError::Truncated { .. }
        ));
        assert!(matches!(err(&b[..6]), CheckpointError::Truncated { .. }));

        let mut bad = b.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(
            err(&bad),
            CheckpointError::ChecksumMismatch { .. }
        ));

        let mut bad = b.clone();
        bad.push(0);
        assert!(matches!(err(&bad), CheckpointError::TrailingBytes(1)));
    }
}

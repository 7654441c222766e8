//! Binary snapshot files: `ABPF`, version, `nx ny ntheta` (u32 LE), then
//! the values as f64 LE in theta-fastest order.

use std::io::{Read, Write};
use std::path::Path;

use super::{Field3, GridSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ABPF";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(f: &Field3) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * f.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in [f.grid.nx, f.grid.ny, f.grid.ntheta] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in &f.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Field3> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ABPF header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let grid = GridSpec::new(word(8) as usize, word(12) as usize, word(16) as usize)?;
    let body = &bytes[20..];
    if body.len() != 8 * grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: body.len() / 8,
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field3::from_values(grid, values)
}

pub fn write(path: &Path, f: &Field3) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode(f))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Field3> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let grid = GridSpec::new(4, 6, 8).unwrap();
        let f = Field3::from_fn(grid, |x, y, t| x + 10.0 * y + 100.0 * t);
        let bytes = encode(&f);
        assert_eq!(&bytes[..4], b"ABPF");
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 6);
        // second stored value is theta index 1 at the origin
        let v1 = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(v1, 100.0 * grid.htheta());
        assert_eq!(decode(&bytes).unwrap(), f);
    }

    #[test]
    fn rejects_truncated() {
        let grid = GridSpec::cubic(4).unwrap();
        let bytes = encode(&Field3::zeros(grid));
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode(b"NOPE").is_err());
    }
}

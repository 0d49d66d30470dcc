//! Binary field container.
//!
//! Layout, all little-endian: magic `TFLD`, version `u16`, dim `u8`, n `u32`,
//! components `u8`, then `components · n^dim` `f64` physical samples in
//! row-major order, one component after another.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::TorusField;
use crate::grid::TorusGrid;

pub const MAGIC: &[u8; 4] = b"TFLD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 1;

pub fn to_bytes(f: &TorusField) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len() * f.components());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(g.dim() as u8);
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.push(f.components() as u8);
    for c in f.physical() {
        for x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<TorusField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected TFLD".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = bytes[6] as usize;
    let n = u32::from_le_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]) as usize;
    let comps = bytes[11] as usize;
    let grid = TorusGrid::new(dim, n).map_err(|e| Error::Format(format!("header: {e}")))?;
    if comps == 0 {
        return Err(Error::Format("zero components".into()));
    }
    let want = HEADER_LEN + 8 * comps * grid.len();
    if bytes.len() != want {
        return Err(Error::Format(format!("expected {want} bytes, found {}", bytes.len())));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let components = data.chunks_exact(grid.len()).map(|c| c.to_vec()).collect();
    TorusField::from_physical(grid, components)
}

pub fn write(f: &TorusField, mut w: impl Write) -> Result<()> {
    w.write_all(&to_bytes(f))?;
    Ok(())
}

pub fn read(mut r: impl Read) -> Result<TorusField> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save(f: &TorusField, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(f))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TorusField> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = TorusField::from_fn(g, 2, |x| [x[0].sin(), x[1], 0.0]);
        let b = to_bytes(&f);
        assert_eq!(&b[..12], &[b'T', b'F', b'L', b'D', 1, 0, 2, 16, 0, 0, 0, 2]);
        assert_eq!(b.len(), 12 + 8 * 2 * 256);
        let x1 = f64::from_le_bytes(b[12 + 8..20 + 8].try_into().unwrap());
        assert_eq!(x1.to_bits(), f.component(0)[1].to_bits());
    }

    #[test]
    fn round_trip_and_rejects_garbage() {
        let g = TorusGrid::new(3, 16).unwrap();
        let f = TorusField::from_fn(g, 3, |x| [x[2].cos(), x[0].sin(), 1.0]);
        let back = from_bytes(&to_bytes(&f)).unwrap();
        assert_eq!(to_bytes(&back), to_bytes(&f));
        let mut bad = to_bytes(&f);
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
        assert!(from_bytes(&to_bytes(&f)[..100]).is_err());
    }
}

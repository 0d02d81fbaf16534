//! Basis file: an 8-byte magic, a little-endian `u32` version, `N` and `p` as
//! little-endian `u64`, then the `N × p` matrix column-major as little-endian
//! `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use conproj_core::basis::ReducedBasis;
use nalgebra::DMatrix;

pub const MAGIC: &[u8; 8] = b"CPBASIS\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8;

pub fn encode_basis(basis: &ReducedBasis) -> Vec<u8> {
    let phi = basis.phi();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * phi.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(phi.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(phi.ncols() as u64).to_le_bytes());
    // nalgebra stores column-major already.
    for v in phi.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_basis(bytes: &[u8]) -> Result<ReducedBasis> {
    ensure!(bytes.len() >= HEADER_LEN, "basis file truncated: {} bytes", bytes.len());
    ensure!(&bytes[..8] == MAGIC, "not a basis file (bad magic)");
    let version = u32::from_le_bytes(bytes[8..12].try_into()?);
    if version != VERSION {
        bail!("unsupported basis file version {version}");
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into()?) as usize;
    let p = u64::from_le_bytes(bytes[20..28].try_into()?) as usize;
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_mul(8))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .context("basis dimensions overflow")?;
    ensure!(
        bytes.len() == expected,
        "basis file holds {} bytes, header {n} x {p} needs {expected}",
        bytes.len()
    );
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect::<Vec<_>>();
    Ok(ReducedBasis::from_matrix(DMatrix::from_vec(n, p, data))?)
}

pub fn write_basis(path: &Path, basis: &ReducedBasis) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&encode_basis(basis))?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<ReducedBasis> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .with_context(|| format!("opening basis file {} (run `offline` first?)", path.display()))?
        .read_to_end(&mut bytes)?;
    decode_basis(&bytes).with_context(|| format!("reading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReducedBasis {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ReducedBasis::from_matrix(DMatrix::from_column_slice(3, 2, &[h, h, 0.0, 0.0, 0.0, 1.0])).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let b = sample();
        let back = decode_basis(&encode_basis(&b)).unwrap();
        assert_eq!(back.phi(), b.phi());
    }

    #[test]
    fn header_layout() {
        let bytes = encode_basis(&sample());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 28 + 6 * 8);
        let first = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(first, std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = encode_basis(&sample());
        assert!(decode_basis(&bytes[..20]).is_err());
        assert!(decode_basis(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_basis(&bytes).is_err());
    }
}

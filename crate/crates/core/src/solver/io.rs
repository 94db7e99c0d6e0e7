//! Flat binary snapshot format for grid fields.
//!
//! Layout: a 64-byte header — magic `LIOUGRD1`, version `u32`, `n_r` `u32`,
//! `n_theta` `u32`, `N` `u32`, `tau` `f64`, zero padding — followed by
//! `n_r · n_theta` little-endian `f64` values, radial index outermost.
//! Grid radii and the rest of the metadata travel in the JSON sidecar.

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 8] = b"LIOUGRD1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GridHeader {
    pub version: u32,
    pub n_r: u32,
    pub n_theta: u32,
    pub n: u32,
    pub tau: f64,
}

pub fn write_grid(w: &mut impl Write, header: &GridHeader, values: &[f64]) -> io::Result<()> {
    assert_eq!(values.len(), header.n_r as usize * header.n_theta as usize);
    let mut buf = [0u8; HEADER_LEN];
    buf[0..8].copy_from_slice(MAGIC);
    buf[8..12].copy_from_slice(&header.version.to_le_bytes());
    buf[12..16].copy_from_slice(&header.n_r.to_le_bytes());
    buf[16..20].copy_from_slice(&header.n_theta.to_le_bytes());
    buf[20..24].copy_from_slice(&header.n.to_le_bytes());
    buf[24..32].copy_from_slice(&header.tau.to_le_bytes());
    w.write_all(&buf)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> io::Result<(GridHeader, Vec<f64>)> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf)?;
    if &buf[0..8] != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let header = GridHeader {
        version: u32_at(8),
        n_r: u32_at(12),
        n_theta: u32_at(16),
        n: u32_at(20),
        tau: f64::from_le_bytes(buf[24..32].try_into().unwrap()),
    };
    if header.version != VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported version {}", header.version),
        ));
    }
    let count = header.n_r as usize * header.n_theta as usize;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let header = GridHeader { version: VERSION, n_r: 3, n_theta: 4, n: 2, tau: 1.5 };
        let values: Vec<f64> = (0..12).map(|k| k as f64 * 0.25 - 1.0).collect();
        let mut buf = Vec::new();
        write_grid(&mut buf, &header, &values).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 12 * 8);
        let (h2, v2) = read_grid(&mut buf.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(v2, values);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = vec![0u8; HEADER_LEN];
        buf[0..8].copy_from_slice(b"NOTAGRID");
        assert!(read_grid(&mut buf.as_slice()).is_err());
    }
}

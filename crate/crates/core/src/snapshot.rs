//! Binary field snapshots.
//!
//! A snapshot is an ASCII header line
//!
//! ```text
//! LANSA1 <n> <domain_length> <phys|spec>
//! ```
//!
//! followed by little-endian `f64` data, component-major with x fastest.
//! Spectral snapshots store interleaved real/imaginary pairs in FFT order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Grid, PhysicalField, SpectralField};

const MAGIC: &str = "LANSA1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    fn tag(self) -> &'static str {
        match self {
            Representation::Physical => "phys",
            Representation::Spectral => "spec",
        }
    }
}

/// Header of a snapshot file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub n: usize,
    pub domain_length: f64,
    pub representation: Representation,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn write_header(w: &mut impl Write, grid: &Grid, rep: Representation) -> Result<()> {
    // `{:?}` prints the shortest string that round-trips the f64
    writeln!(w, "{MAGIC} {} {:?} {}", grid.n(), grid.spec().domain_length, rep.tag())?;
    Ok(())
}

pub fn read_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let parts: Vec<&str> = line.trim_end_matches('\n').split(' ').collect();
    if parts.len() != 4 || parts[0] != MAGIC {
        return format_err(format!("bad snapshot header {:?}", line.trim_end()));
    }
    let n = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad grid size {:?}", parts[1])))?;
    let domain_length = parts[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad domain length {:?}", parts[2])))?;
    let representation = match parts[3] {
        "phys" => Representation::Physical,
        "spec" => Representation::Spectral,
        other => return format_err(format!("unknown representation {other:?}")),
    };
    Ok(Header {
        n,
        domain_length,
        representation,
    })
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("snapshot data truncated".into()),
        _ => Error::Io(e),
    })?;
    let mut rest = Vec::new();
    if r.read_to_end(&mut rest)? != 0 {
        return format_err("trailing bytes after snapshot data");
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn check_header(h: &Header, grid: &Grid, rep: Representation) -> Result<()> {
    if h.representation != rep {
        return format_err(format!("expected a {} snapshot, found {}", rep.tag(), h.representation.tag()));
    }
    if h.n != grid.n() || h.domain_length != grid.spec().domain_length {
        return format_err(format!(
            "snapshot grid n={} L={} does not match n={} L={}",
            h.n,
            h.domain_length,
            grid.n(),
            grid.spec().domain_length
        ));
    }
    Ok(())
}

pub fn write_physical(path: &Path, f: &PhysicalField) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + f.values().len() * 8);
    write_header(&mut buf, f.grid(), Representation::Physical)?;
    for v in f.values().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn write_spectral(path: &Path, f: &SpectralField) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + f.coeffs().len() * 16);
    write_header(&mut buf, f.grid(), Representation::Spectral)?;
    for c in f.coeffs().iter() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_physical(path: &Path, grid: &Arc<Grid>) -> Result<PhysicalField> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let h = read_header(&mut r)?;
    check_header(&h, grid, Representation::Physical)?;
    let n = grid.n();
    let data = read_f64s(&mut r, 3 * n * n * n)?;
    let values = Array4::from_shape_vec((3, n, n, n), data).expect("length checked");
    PhysicalField::from_values(grid, values)
}

/// Read spectral coefficients as stored. The result is not flagged
/// divergence-free; project it before using it as a state.
pub fn read_spectral(path: &Path, grid: &Arc<Grid>) -> Result<SpectralField> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let h = read_header(&mut r)?;
    check_header(&h, grid, Representation::Spectral)?;
    let n = grid.n();
    let data = read_f64s(&mut r, 6 * n * n * n)?;
    let coeffs: Vec<Complex64> = data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    SpectralField::from_coeffs(grid, Array4::from_shape_vec((3, n, n, n), coeffs).expect("length checked"))
}

/// Read either representation as a spectral field.
pub fn read_any(path: &Path, grid: &Arc<Grid>) -> Result<SpectralField> {
    let mut r = BufReader::new(fs::File::open(path)?);
    match read_header(&mut r)?.representation {
        Representation::Spectral => read_spectral(path, grid),
        Representation::Physical => crate::spectral::to_spectral(&read_physical(path, grid)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_physical, random_solenoidal};
    use crate::spectral::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn physical_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(GridSpec::new(4, 0.1, 1)).unwrap();
        let f = random_physical(&g, &mut ChaCha8Rng::seed_from_u64(1));
        let p = dir.path().join("f.bin");
        write_physical(&p, &f).unwrap();
        let back = read_physical(&p, &g).unwrap();
        assert_eq!(back.values(), f.values());
        let bytes = std::fs::read(&p).unwrap();
        let header = format!("LANSA1 4 {:?} phys\n", std::f64::consts::TAU);
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + 3 * 64 * 8);
        // x fastest: the second value is the point (x = h, y = 0, z = 0)
        let second = f64::from_le_bytes(bytes[header.len() + 8..header.len() + 16].try_into().unwrap());
        assert_eq!(second, f.values()[[0, 0, 0, 1]]);
    }

    #[test]
    fn spectral_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(GridSpec::new(8, 0.1, 1)).unwrap();
        let f = random_solenoidal(&g, &mut ChaCha8Rng::seed_from_u64(2));
        let p = dir.path().join("f.bin");
        write_spectral(&p, &f).unwrap();
        assert_eq!(read_spectral(&p, &g).unwrap().coeffs(), f.coeffs());
    }

    #[test]
    fn rejects_wrong_grid_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let g4 = Grid::new(GridSpec::new(4, 0.1, 1)).unwrap();
        let g8 = Grid::new(GridSpec::new(8, 0.1, 1)).unwrap();
        let p = dir.path().join("f.bin");
        write_physical(&p, &PhysicalField::zeros(&g4)).unwrap();
        assert!(matches!(read_physical(&p, &g8), Err(Error::Format(_))));
        assert!(matches!(read_spectral(&p, &g4), Err(Error::Format(_))));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_physical(&p, &g4), Err(Error::Format(_))));
        std::fs::write(&p, b"NOPE 4 1 phys\n").unwrap();
        assert!(matches!(read_physical(&p, &g4), Err(Error::Format(_))));
    }
}

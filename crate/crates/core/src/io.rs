//! Binary dump formats for density fields and particle ensembles.
//!
//! Both formats are little-endian with a four-byte magic and a version
//! word, and store all floating-point data as f64. Field values follow
//! the grid's flat layout (first axis slowest). Readers validate magic,
//! version, and shape before touching the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{DensityField, GapGrid, GridError};
use crate::particles::{Ensemble, ParticleError};
use crate::scalar::Scalar;

const FIELD_MAGIC: &[u8; 4] = b"RNWL";
const ENSEMBLE_MAGIC: &[u8; 4] = b"RNWP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed dump: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
}

/// Formats a scalar with 17 significant digits, enough to round-trip f64.
pub fn format_float17<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<(), IoError> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<(), IoError> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<(), IoError> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, IoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, IoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, IoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(), IoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(IoError::Format(format!(
            "bad magic {:?}, expected {:?}",
            b, magic
        )));
    }
    let v = read_u32(r)?;
    if v != VERSION {
        return Err(IoError::Format(format!(
            "unsupported version {v}, expected {VERSION}"
        )));
    }
    Ok(())
}

/// Writes a density field dump.
pub fn write_field<T: Scalar, W: Write>(
    w: &mut W,
    field: &DensityField<T>,
) -> Result<(), IoError> {
    let grid = field.grid();
    w.write_all(FIELD_MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, grid.times() as u32)?;
    write_u32(w, grid.cells_per_axis() as u32)?;
    write_f64(w, grid.cell_width().to_f64_lossy())?;
    for &v in field.values() {
        write_f64(w, v.to_f64_lossy())?;
    }
    Ok(())
}

/// Reads a density field dump.
pub fn read_field<T: Scalar, R: Read>(r: &mut R) -> Result<DensityField<T>, IoError> {
    expect_magic(r, FIELD_MAGIC)?;
    let n = read_u32(r)? as usize;
    let m = read_u32(r)? as usize;
    let h = T::from_f64_lossy(read_f64(r)?);
    let grid = GapGrid::new(n, m, h)?;
    let mut values = Vec::with_capacity(grid.num_cells());
    for _ in 0..grid.num_cells() {
        values.push(T::from_f64_lossy(read_f64(r)?));
    }
    Ok(DensityField::from_values(grid, values)?)
}

/// Writes an ensemble dump.
pub fn write_ensemble<T: Scalar, W: Write>(
    w: &mut W,
    ens: &Ensemble<T>,
) -> Result<(), IoError> {
    w.write_all(ENSEMBLE_MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, ens.dim() as u32)?;
    write_u64(w, ens.len() as u64)?;
    write_f64(w, ens.time().to_f64_lossy())?;
    write_u64(w, ens.seed())?;
    for &a in ens.flat_ages() {
        write_f64(w, a.to_f64_lossy())?;
    }
    Ok(())
}

/// Reads an ensemble dump.
pub fn read_ensemble<T: Scalar, R: Read>(r: &mut R) -> Result<Ensemble<T>, IoError> {
    expect_magic(r, ENSEMBLE_MAGIC)?;
    let dim = read_u32(r)? as usize;
    let count = read_u64(r)? as usize;
    let time = T::from_f64_lossy(read_f64(r)?);
    let seed = read_u64(r)?;
    let total = count
        .checked_mul(dim)
        .ok_or_else(|| IoError::Format("ensemble size overflows".into()))?;
    if total > (1usize << 33) {
        return Err(IoError::Format(format!(
            "ensemble of {count} states in dimension {dim} is too large"
        )));
    }
    let mut ages = Vec::with_capacity(total);
    for _ in 0..total {
        ages.push(T::from_f64_lossy(read_f64(r)?));
    }
    Ok(Ensemble::new(dim, ages, time, seed)?)
}

/// Saves a field dump to a file.
pub fn save_field<T: Scalar>(path: &Path, field: &DensityField<T>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)?;
    Ok(w.flush()?)
}

/// Loads a field dump from a file, rejecting trailing bytes.
pub fn load_field<T: Scalar>(path: &Path) -> Result<DensityField<T>, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let field = read_field(&mut r)?;
    ensure_eof(&mut r)?;
    Ok(field)
}

/// Saves an ensemble dump to a file.
pub fn save_ensemble<T: Scalar>(path: &Path, ens: &Ensemble<T>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ensemble(&mut w, ens)?;
    Ok(w.flush()?)
}

/// Loads an ensemble dump from a file, rejecting trailing bytes.
pub fn load_ensemble<T: Scalar>(path: &Path) -> Result<Ensemble<T>, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let ens = read_ensemble(&mut r)?;
    ensure_eof(&mut r)?;
    Ok(ens)
}

fn ensure_eof<R: Read>(r: &mut R) -> Result<(), IoError> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(IoError::Format("trailing bytes after dump".into())),
    }
}

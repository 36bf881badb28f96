//! `CHF1` field snapshots: magic, `u32` nx, ny, `f64` lx, ly, then `nx * ny`
//! `f64` values with `y` outer and `x` inner, all little-endian.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{GridSpec, ScalarField};
use crate::error::{ChcError, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CHF1";

pub fn write_snapshot<W: Write>(mut w: W, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(28 + 8 * g.n_cells());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u32).to_le_bytes());
    buf.extend_from_slice(&g.lx.to_le_bytes());
    buf.extend_from_slice(&g.ly.to_le_bytes());
    for v in field.values().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(ChcError::Format(format!("bad snapshot magic {magic:?}")));
    }
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let lx = read_f64(&mut r)?;
    let ly = read_f64(&mut r)?;
    let grid = GridSpec::new(nx, ny, lx, ly)?;
    let mut values = Vec::with_capacity(grid.n_cells());
    for _ in 0..grid.n_cells() {
        values.push(read_f64(&mut r)?);
    }
    let values = Array2::from_shape_vec(grid.shape(), values)
        .map_err(|e| ChcError::Format(e.to_string()))?;
    ScalarField::from_values(grid, values)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

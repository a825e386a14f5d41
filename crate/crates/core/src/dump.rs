//! Raw field dumps: `NLCH`, version byte, then little-endian `u32` dim,
//! `u32` n per axis, `f64` length per axis, `f64` time and the node values
//! with axis 0 fastest.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

pub const MAGIC: &[u8; 4] = b"NLCH";
pub const VERSION: u8 = 1;

pub fn write_field(mut out: impl Write, u: &ScalarField, t: f64) -> Result<()> {
    let g = u.grid();
    let mut buf = Vec::with_capacity(5 + 4 + 12 * g.dim() + 8 + 8 * u.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for _ in 0..g.dim() {
        buf.extend_from_slice(&(g.n() as u32).to_le_bytes());
    }
    for _ in 0..g.dim() {
        buf.extend_from_slice(&g.length().to_le_bytes());
    }
    buf.extend_from_slice(&t.to_le_bytes());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Dump("truncated file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

fn take_f64(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().unwrap()))
}

/// Reads a dump, returning the field and its time stamp.
pub fn read_field(mut input: impl Read) -> Result<(ScalarField, f64)> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut bytes = data.as_slice();
    if take(&mut bytes, 4)? != MAGIC {
        return Err(Error::Dump("bad magic".into()));
    }
    let version = take(&mut bytes, 1)?[0];
    if version != VERSION {
        return Err(Error::Dump(format!("unsupported version {version}")));
    }
    let dim = take_u32(&mut bytes)? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    let ns: Vec<usize> = (0..dim)
        .map(|_| take_u32(&mut bytes).map(|v| v as usize))
        .collect::<Result<_>>()?;
    let lengths: Vec<f64> = (0..dim)
        .map(|_| take_f64(&mut bytes))
        .collect::<Result<_>>()?;
    if ns.iter().any(|&n| n != ns[0]) || lengths.iter().any(|&l| l != lengths[0]) {
        return Err(Error::Dump("only square grids are supported".into()));
    }
    let t = take_f64(&mut bytes)?;
    let grid = Grid::new(dim, ns[0], lengths[0])?;
    let count = grid.node_count();
    if bytes.len() != 8 * count {
        return Err(Error::Dump(format!(
            "expected {} value bytes, found {}",
            8 * count,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ScalarField::new(grid, values)?, t))
}

//! Binary field snapshots.
//!
//! Layout (all little-endian):
//!
//! | offset | type   | content                        |
//! |--------|--------|--------------------------------|
//! | 0      | [u8;8] | magic `LLGFLD01`               |
//! | 8      | u64    | spatial dimension `d`          |
//! | 16     | u64    | nodes per axis `N`             |
//! | 24     | u64    | time intervals `M`             |
//! | 32     | f64    | final time `T`                 |
//! | 40     | u64    | component count (always 3)     |
//! | 48     | f64[]  | `3 * N^d * (M + 1)` values     |
//!
//! Values are ordered component-fastest, then x, y, z, then t. Fields held
//! in double-double are rounded to `f64` on write.

use std::io::{Read, Write};

use crate::field::{SpaceTimeField, VectorField};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::scalar::Real;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LLGFLD01";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub dim: u64,
    pub n: u64,
    pub steps: u64,
    pub t_final: f64,
    pub components: u64,
}

/// Decoded snapshot. A single-slice snapshot (`M = 0`) holds a spatial
/// field such as the initial data.
#[derive(Clone, Debug)]
pub struct Snapshot<S> {
    pub header: SnapshotHeader,
    pub slices: Vec<VectorField<S>>,
}

impl<S: Real> Snapshot<S> {
    pub fn into_space_time(self) -> Result<SpaceTimeField<S>> {
        let tgrid = TimeGrid::new(self.header.t_final, self.header.steps as usize)?;
        SpaceTimeField::from_slices(tgrid, self.slices)
    }

    pub fn grid(&self) -> SpaceGrid {
        self.slices[0].grid
    }
}

pub fn write_snapshot<S: Real, W: Write>(w: W, field: &SpaceTimeField<S>) -> Result<()> {
    write_slices(w, &field.slices, field.tgrid.steps() as u64, field.tgrid.t_final())
}

/// Writes a single spatial field with `M = 0`, `T = 0`.
pub fn write_field_snapshot<S: Real, W: Write>(w: W, field: &VectorField<S>) -> Result<()> {
    write_slices(w, std::slice::from_ref(field), 0, 0.0)
}

fn write_slices<S: Real, W: Write>(mut w: W, slices: &[VectorField<S>], steps: u64, t_final: f64) -> Result<()> {
    let g = slices[0].grid;
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    w.write_all(&steps.to_le_bytes())?;
    w.write_all(&t_final.to_le_bytes())?;
    w.write_all(&3u64.to_le_bytes())?;
    let mut buf = Vec::with_capacity(24 * g.len());
    for slice in slices {
        buf.clear();
        for v in &slice.values {
            for x in v {
                buf.extend_from_slice(&x.to_f64().to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<S: Real, R: Read>(mut r: R) -> Result<Snapshot<S>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let header = SnapshotHeader {
        dim: read_u64(&mut r)?,
        n: read_u64(&mut r)?,
        steps: read_u64(&mut r)?,
        t_final: read_f64(&mut r)?,
        components: read_u64(&mut r)?,
    };
    if header.components != 3 {
        return Err(Error::Snapshot(format!("expected 3 components, found {}", header.components)));
    }
    let grid = SpaceGrid::new(header.dim as usize, header.n as usize)?;
    let count = header.steps as usize + 1;
    let mut slices = Vec::with_capacity(count);
    let mut buf = vec![0u8; 24 * grid.len()];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Snapshot(format!("truncated data: {e}")))?;
        let values = buf
            .chunks_exact(24)
            .map(|ch| {
                let f = |o: usize| S::from_f64(f64::from_le_bytes(ch[o..o + 8].try_into().unwrap()));
                [f(0), f(8), f(16)]
            })
            .collect();
        slices.push(VectorField { grid, values });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Snapshot("trailing bytes after field data".into()));
    }
    Ok(Snapshot { header, slices })
}

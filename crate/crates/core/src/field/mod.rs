//! Vector-field containers and pointwise algebra.
//!
//! The magnetization is always 3-valued, also on 2D grids.

mod snapshot;

pub use snapshot::{read_snapshot, write_field_snapshot, write_snapshot, Snapshot, SnapshotHeader};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{SpaceGrid, TimeGrid};
use crate::scalar::{Lane, Real};
use crate::{Error, Result};

pub type Vec3<S> = [S; 3];

#[inline]
pub fn cross3<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn dot3<S: Real>(a: Vec3<S>, b: Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Physical constants of the LLG equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    /// Gilbert damping `alpha > 0`.
    pub alpha: f64,
    /// Exchange constant `C_e > 0`.
    pub c_e: f64,
}

impl PhysicsParams {
    pub fn new(alpha: f64, c_e: f64) -> Result<Self> {
        let p = Self { alpha, c_e };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.c_e > 0.0 && self.c_e.is_finite()) {
            return Err(Error::InvalidParameter(format!("c_e must be positive, got {}", self.c_e)));
        }
        Ok(())
    }
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self { alpha: 1.0, c_e: 1.0 }
    }
}

/// Real-valued grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<S> {
    pub grid: SpaceGrid,
    pub values: Vec<S>,
}

impl<S: Real> ScalarField<S> {
    pub fn zeros(grid: SpaceGrid) -> Self {
        Self { grid, values: vec![S::zero(); grid.len()] }
    }

    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut([S; 3]) -> S) -> Self {
        let values = (0..grid.len()).map(|i| f(node_coords(grid, i))).collect();
        Self { grid, values }
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }
}

/// Cell-centre coordinates of flat node `i` (unused axes are 0).
pub fn node_coords<S: Real>(grid: SpaceGrid, i: usize) -> [S; 3] {
    let idx = grid.multi(i);
    let mut x = [S::zero(); 3];
    for a in 0..grid.dim() {
        x[a] = grid.coord(idx[a]);
    }
    x
}

/// A 3-vector at every node of a [`SpaceGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<S> {
    pub grid: SpaceGrid,
    pub values: Vec<Vec3<S>>,
}

impl<S: Real> VectorField<S> {
    pub fn zeros(grid: SpaceGrid) -> Self {
        Self { grid, values: vec![[S::zero(); 3]; grid.len()] }
    }

    pub fn constant(grid: SpaceGrid, v: Vec3<S>) -> Self {
        Self { grid, values: vec![v; grid.len()] }
    }

    pub fn from_values(grid: SpaceGrid, values: Vec<Vec3<S>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut([S; 3]) -> Vec3<S>) -> Self {
        let values = (0..grid.len()).map(|i| f(node_coords(grid, i))).collect();
        Self { grid, values }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn cross(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| cross3(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn dot(&self, other: &Self) -> Result<ScalarField<S>> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| dot3(a, b)).collect();
        Ok(ScalarField { grid: self.grid, values })
    }

    /// `a * self + b * other`
    pub fn combine(&self, a: S, other: &Self, b: S) -> Result<Self> {
        self.check(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x.scale(a).fma(b, y))
            .collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.norm_sqr().sqrt()))
    }

    pub fn modulus_deviation(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |m, v| m.max((v.norm_sqr().sqrt() - S::one()).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn cast<T: Real>(&self) -> VectorField<T> {
        VectorField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.map(|x| T::from_f64(x.to_f64()))).collect(),
        }
    }
}

/// A [`VectorField`] at each of the `M + 1` nodes of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField<S> {
    pub tgrid: TimeGrid,
    pub slices: Vec<VectorField<S>>,
}

impl<S: Real> SpaceTimeField<S> {
    pub fn zeros(grid: SpaceGrid, tgrid: TimeGrid) -> Self {
        Self { tgrid, slices: vec![VectorField::zeros(grid); tgrid.nodes()] }
    }

    /// The same field at every time node.
    pub fn replicate(field: &VectorField<S>, tgrid: TimeGrid) -> Self {
        Self { tgrid, slices: vec![field.clone(); tgrid.nodes()] }
    }

    pub fn from_slices(tgrid: TimeGrid, slices: Vec<VectorField<S>>) -> Result<Self> {
        if slices.len() != tgrid.nodes() {
            return Err(Error::DimensionMismatch { expected: tgrid.nodes(), got: slices.len() });
        }
        let grid = slices[0].grid;
        if slices.iter().any(|s| s.grid != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { tgrid, slices })
    }

    pub fn from_fn(grid: SpaceGrid, tgrid: TimeGrid, f: impl Fn(S, [S; 3]) -> Vec3<S> + Sync) -> Self {
        let slices = (0..tgrid.nodes())
            .map(|n| {
                let t = tgrid.time::<S>(n);
                VectorField::from_fn(grid, |x| f(t, x))
            })
            .collect();
        Self { tgrid, slices }
    }

    pub fn grid(&self) -> SpaceGrid {
        self.slices[0].grid
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid() != other.grid() || self.tgrid != other.tgrid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `a * self + b * other`, slice by slice.
    pub fn combine(&self, a: S, other: &Self, b: S) -> Result<Self> {
        self.check(other)?;
        let slices = self
            .slices
            .par_iter()
            .zip(other.slices.par_iter())
            .map(|(x, y)| x.combine(a, y, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tgrid: self.tgrid, slices })
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: S, other: &Self) -> Result<()> {
        self.check(other)?;
        self.slices.par_iter_mut().zip(other.slices.par_iter()).for_each(|(x, y)| {
            for (u, &v) in x.values.iter_mut().zip(&y.values) {
                *u = u.fma(a, v);
            }
        });
        Ok(())
    }

    pub fn scaled(&self, a: S) -> Self {
        let slices = self
            .slices
            .iter()
            .map(|s| VectorField { grid: s.grid, values: s.values.iter().map(|v| v.scale(a)).collect() })
            .collect();
        Self { tgrid: self.tgrid, slices }
    }

    /// `max over D_T of | |m| - 1 |`
    pub fn modulus_deviation(&self) -> S {
        self.slices.iter().fold(S::zero(), |m, s| m.max(s.modulus_deviation()))
    }

    pub fn max_abs(&self) -> S {
        self.slices.iter().fold(S::zero(), |m, s| m.max(s.max_abs()))
    }

    /// Slice-wise max-norm of `self - other`.
    pub fn slice_gaps(&self, other: &Self) -> Result<Vec<S>> {
        self.check(other)?;
        Ok(self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| {
                a.values
                    .iter()
                    .zip(&b.values)
                    .fold(S::zero(), |m, (&x, &y)| m.max(x.minus(y).norm_sqr().sqrt()))
            })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.is_finite())
    }

    pub fn values(&self) -> Vec<Vec<Vec3<S>>> {
        self.slices.iter().map(|s| s.values.clone()).collect()
    }

    pub fn cast<T: Real>(&self) -> SpaceTimeField<T> {
        SpaceTimeField { tgrid: self.tgrid, slices: self.slices.iter().map(|s| s.cast()).collect() }
    }
}

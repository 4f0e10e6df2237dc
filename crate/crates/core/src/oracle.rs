//! Independent time-stepper used as a baseline
//!
//! Classical RK4 on the method of lines with the 5/7-point finite-difference
//! Laplacian (mirror ghosts), optionally projected back to `|m| = 1` after
//! every step. Shares no code with the spectral heat solve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{cross3, dot3, PhysicsParams, SpaceTimeField, Vec3, VectorField};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::scalar::{Lane, Real};
use crate::{Error, Result};

/// Fraction of `h²/C_e` used when no step is given.
pub const DEFAULT_DT_FACTOR: f64 = 0.2;
/// Explicit diffusion stability margin.
pub const MAX_DT_FACTOR: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleScheme {
    #[default]
    Rk4Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// substep size; `0.2 h²/C_e` when absent
    #[serde(default)]
    pub dt_oracle: Option<f64>,
    #[serde(default = "yes")]
    pub renormalize: bool,
    #[serde(default)]
    pub scheme: OracleScheme,
}

fn yes() -> bool {
    true
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { dt_oracle: None, renormalize: true, scheme: OracleScheme::Rk4Projected }
    }
}

impl OracleConfig {
    pub fn max_dt(grid: SpaceGrid, params: &PhysicsParams) -> f64 {
        let h = 1.0 / grid.n() as f64;
        MAX_DT_FACTOR * h * h / params.c_e
    }

    /// Substep actually requested, validated against the stability bound.
    pub fn step_size(&self, grid: SpaceGrid, params: &PhysicsParams) -> Result<f64> {
        let bound = Self::max_dt(grid, params);
        let dt = self.dt_oracle.unwrap_or(bound * DEFAULT_DT_FACTOR / MAX_DT_FACTOR);
        if !(dt > 0.0) || dt > bound {
            return Err(Error::InvalidParameter(format!(
                "dt_oracle = {dt} outside (0, {bound}] (0.25 h^2 / C_e)"
            )));
        }
        Ok(dt)
    }
}

/// Finite-difference Laplacian with mirror ghosts.
pub fn fd_laplacian<S: Real>(grid: SpaceGrid, values: &[Vec3<S>]) -> Vec<Vec3<S>> {
    let n = grid.n();
    let inv_h2 = S::from_usize(n * n);
    let two = S::from_f64(2.0);
    (0..values.len())
        .into_par_iter()
        .map(|f| {
            let mut acc = [S::zero(); 3];
            for axis in 0..grid.dim() {
                let stride = grid.stride(axis);
                let i = (f / stride) % n;
                let lo = if i == 0 { values[f] } else { values[f - stride] };
                let hi = if i + 1 == n { values[f] } else { values[f + stride] };
                acc = acc.plus(hi.plus(lo).minus(values[f].scale(two)));
            }
            acc.scale(inv_h2)
        })
        .collect()
}

/// `½ ∫ |∇m|²` with face differences; the Lyapunov functional of the
/// semi-discrete flow.
pub fn exchange_energy<S: Real>(grid: SpaceGrid, values: &[Vec3<S>]) -> S {
    let n = grid.n();
    let mut sum = S::zero();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        for f in 0..values.len() {
            if (f / stride) % n + 1 < n {
                sum += values[f + stride].minus(values[f]).norm_sqr();
            }
        }
    }
    // h^d * sum / h² / 2
    let h: S = grid.spacing();
    sum * grid.cell_volume::<S>() / (h * h) / S::from_f64(2.0)
}

/// `m_t` solving `m_t - alpha m x m_t = -C_e m x Δm` nodewise.
pub fn llg_rhs<S: Real>(m: &VectorField<S>, params: &PhysicsParams) -> VectorField<S> {
    let lap = fd_laplacian(m.grid, &m.values);
    VectorField { grid: m.grid, values: rhs_from_lap(&m.values, &lap, params) }
}

fn rhs_from_lap<S: Real>(m: &[Vec3<S>], lap: &[Vec3<S>], params: &PhysicsParams) -> Vec<Vec3<S>> {
    let alpha = S::from_f64(params.alpha);
    let ce = S::from_f64(params.c_e);
    m.par_iter()
        .zip(lap)
        .map(|(&m, &l)| {
            // (I - alpha [m]x)^{-1} b = (b + alpha m x b + alpha² (m·b) m) / (1 + alpha² |m|²)
            let b = cross3(m, l).scale(-ce);
            let mb = dot3(m, b);
            let num = b.plus(cross3(m, b).scale(alpha)).plus(m.scale(alpha * alpha * mb));
            num.scale(S::one() / (S::one() + alpha * alpha * m.norm_sqr()))
        })
        .collect()
}

/// Largest nodewise gap between both sides of
/// `alpha m_t + m x m_t = C_e Δm - C_e (m·Δm) m`, with `m_t` from [`llg_rhs`].
pub fn llg2_discrepancy<S: Real>(m: &VectorField<S>, params: &PhysicsParams) -> S {
    let lap = fd_laplacian(m.grid, &m.values);
    let mt = rhs_from_lap(&m.values, &lap, params);
    let alpha = S::from_f64(params.alpha);
    let ce = S::from_f64(params.c_e);
    let mut worst = S::zero();
    for ((&m, &l), &v) in m.values.iter().zip(&lap).zip(&mt) {
        let lhs = v.scale(alpha).plus(cross3(m, v));
        let rhs = l.scale(ce).minus(m.scale(ce * dot3(m, l)));
        worst = worst.max(lhs.minus(rhs).norm_sqr().sqrt());
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleStats {
    pub dt: f64,
    pub substeps_per_interval: usize,
    /// exchange energy at every output node
    pub energy: Vec<f64>,
    /// largest single-step energy increase (0 when monotone)
    pub max_energy_increase: f64,
}

/// Integrates from `m0` and samples at the time nodes.
pub fn evolve<S: Real>(
    m0: &VectorField<S>,
    tgrid: TimeGrid,
    params: &PhysicsParams,
    cfg: &OracleConfig,
) -> Result<(SpaceTimeField<S>, OracleStats)> {
    params.validate()?;
    let grid = m0.grid;
    let dt_max = cfg.step_size(grid, params)?;
    let interval = tgrid.dt::<f64>();
    let substeps = (interval / dt_max).ceil().max(1.0) as usize;
    let dt = interval / substeps as f64;
    let h = S::from_f64(dt);
    let half = S::from_f64(0.5);
    let sixth = S::from_f64(1.0 / 6.0);

    let mut cur = m0.values.clone();
    let mut slices = vec![m0.clone()];
    let mut energy = vec![exchange_energy(grid, &cur).to_f64()];
    let mut prev_e = energy[0];
    let mut max_increase = 0.0f64;
    let f = |v: &[Vec3<S>]| rhs_from_lap(v, &fd_laplacian(grid, v), params);
    let shift = |v: &[Vec3<S>], k: &[Vec3<S>], a: S| -> Vec<Vec3<S>> {
        v.iter().zip(k).map(|(x, y)| x.plus(y.scale(a))).collect()
    };

    for n in 1..tgrid.nodes() {
        for s in 0..substeps {
            let k1 = f(&cur);
            let k2 = f(&shift(&cur, &k1, half * h));
            let k3 = f(&shift(&cur, &k2, half * h));
            let k4 = f(&shift(&cur, &k3, h));
            let two = S::from_f64(2.0);
            cur.par_iter_mut().enumerate().for_each(|(i, x)| {
                let incr = k1[i].plus(k2[i].scale(two)).plus(k3[i].scale(two)).plus(k4[i]);
                *x = x.plus(incr.scale(h * sixth));
                if cfg.renormalize {
                    *x = x.scale(S::one() / x.norm_sqr().sqrt());
                }
            });
            if cur.iter().any(|v| !(v.norm_sqr().to_f64() <= 4.0)) {
                let t = ((n - 1) * substeps + s + 1) as f64 * dt;
                return Err(Error::OracleBlowUp(t));
            }
            let e = exchange_energy(grid, &cur).to_f64();
            max_increase = max_increase.max(e - prev_e);
            prev_e = e;
        }
        energy.push(prev_e);
        slices.push(VectorField { grid, values: cur.clone() });
    }
    let field = SpaceTimeField::from_slices(tgrid, slices)?;
    Ok((field, OracleStats { dt, substeps_per_interval: substeps, energy, max_energy_increase: max_increase }))
}

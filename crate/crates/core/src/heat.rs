//! Linear vector heat problem
//!
//! ```text
//! L ∂_t w - C_e Δw = r  in (0,T) x D,   ∂_n w = 0,   w(0) = 0
//! ```
//!
//! solved exactly in space: in the cosine basis every mode `k` decouples
//! into the 3×3 system `L w_k' + C_e lambda_k w_k = r_k`, which is stepped
//! in time with a direct closed-form solve per step.
//!
//! Schemes (`mu = dt C_e lambda_k`):
//!
//! - implicit Euler: `(L + mu) w^{n+1} = L w^n + dt r^{n+1}`
//! - Crank–Nicolson: `(L + mu/2) w^{n+1} = (L - mu/2) w^n + dt (r^n + r^{n+1})/2`
//! - BDF2 (first step implicit Euler):
//!   `(3/2 L + mu) w^{n+1} = L (2 w^n - w^{n-1}/2) + dt r^{n+1}`

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{PhysicsParams, SpaceTimeField, Vec3, VectorField};
use crate::grid::{BackwardStencil, CosineBasis, SpaceGrid, TimeGrid};
use crate::norms::{spacetime_pair_coeffs, spectral_slices};
use crate::residual::{mat_vec, LOperator, TimeStencil};
use crate::scalar::{c, Lane, Real};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatScheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
    Bdf2,
}

impl HeatScheme {
    /// The backward difference this scheme applies to `w`, if it is a
    /// backward-difference scheme.
    pub fn backward_stencil(self) -> Option<BackwardStencil> {
        match self {
            HeatScheme::ImplicitEuler => Some(BackwardStencil::Bdf1),
            HeatScheme::Bdf2 => Some(BackwardStencil::Bdf2),
            HeatScheme::CrankNicolson => None,
        }
    }

    /// Residual time stencil consistent with this scheme.
    pub fn residual_stencil(self) -> TimeStencil {
        match self.backward_stencil() {
            Some(b) => TimeStencil::Backward(b),
            None => TimeStencil::Centered,
        }
    }

    /// Nominal order of accuracy in `dt`.
    pub fn order(self) -> usize {
        match self {
            HeatScheme::ImplicitEuler => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSolveConfig {
    #[serde(default)]
    pub scheme: HeatScheme,
}

/// Steps one mode through the whole time grid. `r[n]` is the forcing
/// coefficient at node `n`; returns `w[n]` for `n = 0..=M`.
fn solve_mode<S: Real>(
    lop: &LOperator<S>,
    mu: S,
    dt: S,
    scheme: HeatScheme,
    r: impl Fn(usize) -> Vec3<S>,
    steps: usize,
) -> Result<Vec<Vec3<S>>> {
    let mut w = Vec::with_capacity(steps + 1);
    w.push([S::zero(); 3]);
    let half = c::<S>(0.5);
    match scheme {
        HeatScheme::ImplicitEuler => {
            let inv = lop.shifted_inverse(S::one(), mu)?;
            for n in 0..steps {
                let rhs = lop.apply(w[n]).plus(r(n + 1).scale(dt));
                w.push(mat_vec(&inv, rhs));
            }
        }
        HeatScheme::CrankNicolson => {
            let inv = lop.shifted_inverse(S::one(), mu * half)?;
            for n in 0..steps {
                let explicit = lop.apply(w[n]).minus(w[n].scale(mu * half));
                let rhs = explicit.plus(r(n).plus(r(n + 1)).scale(dt * half));
                w.push(mat_vec(&inv, rhs));
            }
        }
        HeatScheme::Bdf2 => {
            let first = lop.shifted_inverse(S::one(), mu)?;
            let inv = lop.shifted_inverse(c(1.5), mu)?;
            for n in 0..steps {
                let next = if n == 0 {
                    mat_vec(&first, r(1).scale(dt))
                } else {
                    let hist = w[n].scale(c(2.0)).minus(w[n - 1].scale(half));
                    mat_vec(&inv, lop.apply(hist).plus(r(n + 1).scale(dt)))
                };
                w.push(next);
            }
        }
    }
    Ok(w)
}

/// Heat solve on cosine coefficient slices (`coeffs[n][mode]`).
pub fn heat_solve_coeffs<S: Real>(
    basis: &CosineBasis<S>,
    tgrid: &TimeGrid,
    coeffs: &[Vec<Vec3<S>>],
    lop: &LOperator<S>,
    params: &PhysicsParams,
    cfg: &HeatSolveConfig,
) -> Result<Vec<Vec<Vec3<S>>>> {
    params.validate()?;
    if coeffs.len() != tgrid.nodes() {
        return Err(Error::DimensionMismatch { expected: tgrid.nodes(), got: coeffs.len() });
    }
    let modes = basis.grid().len();
    if let Some(bad) = coeffs.iter().find(|c| c.len() != modes) {
        return Err(Error::DimensionMismatch { expected: modes, got: bad.len() });
    }
    let dt = tgrid.dt::<S>();
    let ce = S::from_f64(params.c_e);
    let steps = tgrid.steps();
    let per_mode: Vec<Vec<Vec3<S>>> = basis
        .eigenvalues()
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            if coeffs.iter().all(|slice| slice[k] == [S::zero(); 3]) {
                return Ok(vec![[S::zero(); 3]; steps + 1]);
            }
            solve_mode(lop, dt * ce * lambda, dt, cfg.scheme, |n| coeffs[n][k], steps)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![vec![[S::zero(); 3]; modes]; steps + 1];
    for (k, series) in per_mode.into_iter().enumerate() {
        for (n, v) in series.into_iter().enumerate() {
            out[n][k] = v;
        }
    }
    Ok(out)
}

/// Solves `L ∂_t w - C_e Δw = r`, `w(0) = 0`, `∂_n w = 0`.
pub fn heat_solve<S: Real>(
    r: &SpaceTimeField<S>,
    lop: &LOperator<S>,
    params: &PhysicsParams,
    basis: &CosineBasis<S>,
    cfg: &HeatSolveConfig,
) -> Result<SpaceTimeField<S>> {
    let coeffs = spectral_slices(basis, r)?;
    let w = heat_solve_coeffs(basis, &r.tgrid, &coeffs, lop, params, cfg)?;
    let slices = w
        .par_iter()
        .map(|cf| Ok(VectorField { grid: basis.grid(), values: basis.inverse_values(cf)? }))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::from_slices(r.tgrid, slices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyStatus {
    Measured,
    /// `r = 0`, ratio undefined
    SkippedZeroForcing,
}

/// `||w||_{H^{1,2}} / ||r||_{L²(D_T)}`, the stability constant of the
/// heat solve. The linear power of `||r||` is the dimensionally consistent
/// reading of the estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatEnergyReport {
    pub status: EnergyStatus,
    pub w_norm: f64,
    pub r_norm: f64,
    pub ratio: Option<f64>,
}

pub fn heat_energy_check<S: Real>(
    w: &SpaceTimeField<S>,
    r: &SpaceTimeField<S>,
    basis: &CosineBasis<S>,
) -> Result<HeatEnergyReport> {
    if w.grid() != r.grid() || w.tgrid != r.tgrid {
        return Err(Error::GridMismatch);
    }
    let rc = spectral_slices(basis, r)?;
    let r_norm = spacetime_pair_coeffs(basis, &r.tgrid, &rc, 0)?.norm.to_f64();
    let wc = spectral_slices(basis, w)?;
    let w_norm = spacetime_pair_coeffs(basis, &w.tgrid, &wc, 1)?.norm.to_f64();
    if r_norm == 0.0 {
        return Ok(HeatEnergyReport { status: EnergyStatus::SkippedZeroForcing, w_norm, r_norm, ratio: None });
    }
    Ok(HeatEnergyReport { status: EnergyStatus::Measured, w_norm, r_norm, ratio: Some(w_norm / r_norm) })
}

/// One row of a manufactured-solution refinement study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub scheme: HeatScheme,
    pub steps: usize,
    pub dt: f64,
    pub max_error: f64,
    /// `log2` error ratio against the previous row
    pub slope: Option<f64>,
}

/// Exact solution `w*(t,x) = sin(t) cos(pi x_1) e3` of the manufactured
/// problem with forcing `r = L ∂_t w* - C_e Δw*`.
pub fn manufactured_pair<S: Real>(
    grid: SpaceGrid,
    tgrid: TimeGrid,
    lop: &LOperator<S>,
    params: &PhysicsParams,
) -> (SpaceTimeField<S>, SpaceTimeField<S>) {
    let ce = S::from_f64(params.c_e);
    let pi2 = S::PI() * S::PI();
    let e3 = [S::zero(), S::zero(), S::one()];
    let l_e3 = lop.apply(e3);
    let exact = SpaceTimeField::from_fn(grid, tgrid, |t: S, x: [S; 3]| e3.scale(t.sin() * (S::PI() * x[0]).cos()));
    let forcing = SpaceTimeField::from_fn(grid, tgrid, |t: S, x: [S; 3]| {
        let phi = (S::PI() * x[0]).cos();
        l_e3.scale(t.cos() * phi).plus(e3.scale(ce * pi2 * t.sin() * phi))
    });
    (exact, forcing)
}

/// Max error of the heat solve on the manufactured problem for each step count.
pub fn manufactured_study<S: Real>(
    grid: SpaceGrid,
    t_final: f64,
    steps: &[usize],
    scheme: HeatScheme,
    lop: &LOperator<S>,
    params: &PhysicsParams,
) -> Result<Vec<MmsRow>> {
    let basis = CosineBasis::<S>::new(grid);
    let cfg = HeatSolveConfig { scheme };
    let mut rows: Vec<MmsRow> = Vec::with_capacity(steps.len());
    for &m in steps {
        let tgrid = TimeGrid::new(t_final, m)?;
        let (exact, forcing) = manufactured_pair(grid, tgrid, lop, params);
        let w = heat_solve(&forcing, lop, params, &basis, &cfg)?;
        let err = w.slice_gaps(&exact)?.into_iter().fold(S::zero(), |a, b| a.max(b)).to_f64();
        let slope = rows.last().map(|prev| (prev.max_error / err).ln() / (m as f64 / prev.steps as f64).ln());
        rows.push(MmsRow { scheme, steps: m, dt: t_final / m as f64, max_error: err, slope });
    }
    Ok(rows)
}

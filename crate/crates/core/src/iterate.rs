//! The constructive fixed-point iteration
//!
//! ```text
//! m_0(t,x) = m0(x)
//! r_l = R(m_l),   L ∂_t R_l - C_e Δ R_l = r_l,   R_l(0) = 0,   m_{l+1} = m_l - R_l
//! ```
//!
//! The whole space-time field is updated at once; nothing marches in time.
//!
//! Convergence is tracked through `r_l = ||r_l||_{H^{k-1,2k-2}}`,
//! `R_l = ||R_l||_{H^{k,2k}}`, the ratios `q_j = R_{j+1}/R_j` and the
//! bracket
//!
//! ```text
//! Q_j = (m_{j,0} + R_j)(1 + m_j) + R_j² + m_0 S_j + S_j²,   S_j = sum_{i<j} R_i
//! ```
//!
//! with `m_j`, `m_{j,0}` the norm and seminorm of `m_j`.
//!
//! The discrete equation is imposed at the time nodes `1..=M`; node 0
//! carries the initial condition. The residual's `∂_t` uses the same
//! backward difference as the heat recurrence, so that the heat solve is an
//! exact preconditioner of the linearized residual at every temporal
//! frequency. A centred `∂_t` paired with an implicit solve leaves the
//! highest temporal modes undamped and the iteration stalls at `q ≈ 1`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{PhysicsParams, SpaceTimeField, Vec3, VectorField};
use crate::grid::{CosineBasis, NodeStencil, TimeGrid};
use crate::heat::{heat_solve_coeffs, HeatScheme, HeatSolveConfig};
use crate::norms::{spacetime_pair_coeffs, sobolev_norm_coeffs, NormPair};
use crate::residual::{residual_from_parts, LOperator};
use crate::scalar::{Lane, Real};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    /// stop once `||r_l||_{H^{k-1,2k-2}} < tol`
    pub tol: f64,
    pub max_iter: usize,
    /// number of consecutive `q_j >= 1` that counts as divergence
    pub diverge_window: usize,
    /// norm index of `H^{k,2k}`
    pub k: usize,
    /// keep the spectral coefficients of every iterate for the Cauchy audit
    #[serde(default)]
    pub keep_iterates: bool,
    /// multi-index of `x0`; the centre node when absent
    #[serde(default)]
    pub x0: Option<Vec<usize>>,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 30, diverge_window: 3, k: 3, keep_iterates: false, x0: None }
    }
}

impl IterateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.diverge_window < 2 {
            return Err(Error::InvalidParameter("diverge_window must be at least 2".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    Converged,
    Diverged,
    MaxIterations,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }
}

/// Per-iteration record; every quantity refers to the iterate `m_l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub ell: usize,
    pub r_norm: f64,
    pub big_r_norm: f64,
    /// `q_{l-1} = R_l / R_{l-1}`, absent at `l = 0`
    pub q: Option<f64>,
    pub big_q: f64,
    pub m_norm: f64,
    pub m_seminorm: f64,
    pub modulus_dev: f64,
}

/// Iteration state: current iterate (node values and cosine coefficients)
/// plus histories.
#[derive(Clone, Debug)]
pub struct IterationState<S: Real> {
    pub ell: usize,
    pub m0: VectorField<S>,
    pub m: SpaceTimeField<S>,
    /// cosine coefficients of `m`, updated linearly alongside it
    pub m_coeffs: Vec<Vec<Vec3<S>>>,
    /// `sum_{i<l} R_i`, node values
    pub correction_sum: SpaceTimeField<S>,
    pub rows: Vec<IterationRow>,
    pub status: Status,
    /// wall-clock seconds per step (kept apart from the reproducible rows)
    pub step_seconds: Vec<f64>,
    /// coefficients of `m_0, m_1, ...` when `keep_iterates` is set
    pub iterates: Vec<Vec<Vec<Vec3<S>>>>,
    m0_norm: f64,
}

impl<S: Real> IterationState<S> {
    pub fn r_norm_history(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r_norm).collect()
    }

    pub fn big_r_history(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.big_r_norm).collect()
    }

    /// `q_j = R_{j+1}/R_j`, `j = 0..l-1`.
    pub fn q_history(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.q).collect()
    }

    pub fn big_q_history(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.big_q).collect()
    }
}

/// `m_0(t) = m0` for all `t`.
pub fn initialize<S: Real>(m0: &VectorField<S>, tgrid: TimeGrid, basis: &CosineBasis<S>) -> Result<IterationState<S>> {
    if m0.grid != basis.grid() {
        return Err(Error::GridMismatch);
    }
    let m = SpaceTimeField::replicate(m0, tgrid);
    let c0 = basis.forward_values(&m0.values)?;
    Ok(IterationState {
        ell: 0,
        m0: m0.clone(),
        m,
        m_coeffs: vec![c0; tgrid.nodes()],
        correction_sum: SpaceTimeField::zeros(m0.grid, tgrid),
        rows: vec![],
        status: Status::Running,
        step_seconds: vec![],
        iterates: vec![],
        m0_norm: f64::NAN,
    })
}

/// Everything needed to advance an [`IterationState`].
pub struct Solver<S: Real> {
    pub basis: CosineBasis<S>,
    pub tgrid: TimeGrid,
    pub lop: LOperator<S>,
    pub params: PhysicsParams,
    pub heat: HeatSolveConfig,
    pub cfg: IterateConfig,
    stencils: Vec<NodeStencil<S>>,
}

/// Result of [`Solver::run`].
#[derive(Clone, Debug)]
pub struct RunOutcome<S: Real> {
    pub state: IterationState<S>,
    /// `||R(m)||_{H^{k-1,2k-2}}` of the returned iterate
    pub final_residual_norm: f64,
    pub final_norm: NormPair<f64>,
    /// `||m||_{H^{k,2k}} / ||m0||_{H^{2k}}`
    pub smoothness_ratio: f64,
}

impl<S: Real> Solver<S> {
    pub fn new(
        basis: CosineBasis<S>,
        tgrid: TimeGrid,
        lop: LOperator<S>,
        params: PhysicsParams,
        heat: HeatSolveConfig,
        cfg: IterateConfig,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        tgrid.require_steps(2 * cfg.k + 1)?;
        let stencil = heat.scheme.backward_stencil().ok_or_else(|| {
            Error::InvalidParameter(
                "the iteration needs a backward-difference heat scheme (implicit-euler or bdf2)".into(),
            )
        })?;
        let stencils = stencil.stencils(&tgrid)?;
        Ok(Self { basis, tgrid, lop, params, heat, cfg, stencils })
    }

    /// Solver whose `L` is built from `m0` at the configured `x0`.
    pub fn for_initial_data(
        m0: &VectorField<S>,
        tgrid: TimeGrid,
        params: PhysicsParams,
        heat: HeatSolveConfig,
        cfg: IterateConfig,
    ) -> Result<Self> {
        let grid = m0.grid;
        let x0 = match &cfg.x0 {
            None => grid.center_index(),
            Some(idx) => {
                if idx.len() != grid.dim() || idx.iter().any(|&i| i >= grid.n()) {
                    return Err(Error::InvalidParameter(format!("x0 {idx:?} is not a node of the grid")));
                }
                let mut full = [0; 3];
                full[..idx.len()].copy_from_slice(idx);
                grid.flat(full)
            }
        };
        let lop = LOperator::build(&params, m0, x0)?;
        Self::new(CosineBasis::new(grid), tgrid, lop, params, heat, cfg)
    }

    pub fn scheme(&self) -> HeatScheme {
        self.heat.scheme
    }

    pub fn initialize(&self, m0: &VectorField<S>) -> Result<IterationState<S>> {
        let mut st = initialize(m0, self.tgrid, &self.basis)?;
        st.m0_norm = sobolev_norm_coeffs(&self.basis, &st.m_coeffs[0], 2 * self.cfg.k).to_f64();
        if self.cfg.keep_iterates {
            st.iterates.push(st.m_coeffs.clone());
        }
        Ok(st)
    }

    /// Residual of `m` (node values and coefficients given), node 0 zeroed.
    fn residual_of(&self, m: &SpaceTimeField<S>, coeffs: &[Vec<Vec3<S>>]) -> Result<SpaceTimeField<S>> {
        let eig = self.basis.eigenvalues();
        let laps = coeffs
            .par_iter()
            .map(|cf| {
                let scaled: Vec<Vec3<S>> = cf.iter().zip(eig).map(|(c, &l)| c.scale(-l)).collect();
                self.basis.inverse_values(&scaled)
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<&[Vec3<S>]> = m.slices.iter().map(|s| s.values.as_slice()).collect();
        let lap_refs: Vec<&[Vec3<S>]> = laps.iter().map(|l| l.as_slice()).collect();
        let mut r = residual_from_parts(m.grid(), &self.tgrid, &values, &lap_refs, &self.params, &self.stencils)?;
        r.slices[0] = VectorField::zeros(m.grid());
        Ok(r)
    }

    fn forward_all(&self, f: &SpaceTimeField<S>) -> Result<Vec<Vec<Vec3<S>>>> {
        f.slices.par_iter().map(|s| self.basis.forward_values(&s.values)).collect()
    }

    /// `||R(m)||_{H^{k-1,2k-2}}` for an arbitrary field on this solver's grids.
    pub fn residual_norm(&self, m: &SpaceTimeField<S>) -> Result<f64> {
        let coeffs = self.forward_all(m)?;
        let r = self.residual_of(m, &coeffs)?;
        let rc = self.forward_all(&r)?;
        Ok(spacetime_pair_coeffs(&self.basis, &self.tgrid, &rc, self.cfg.k - 1)?.norm.to_f64())
    }

    /// The discrete residual of `m` as a field (node 0 zero).
    pub fn residual_field(&self, m: &SpaceTimeField<S>) -> Result<SpaceTimeField<S>> {
        let coeffs = self.forward_all(m)?;
        self.residual_of(m, &coeffs)
    }

    /// One pass of the three-step construction.
    pub fn step(&self, st: &mut IterationState<S>) -> Result<()> {
        if st.status.is_terminal() {
            return Err(Error::Terminated(format!("{:?}", st.status)));
        }
        let started = Instant::now();
        let k = self.cfg.k;
        let ell = st.ell;

        let r = self.residual_of(&st.m, &st.m_coeffs)?;
        let rc = self.forward_all(&r)?;
        let r_norm = spacetime_pair_coeffs(&self.basis, &self.tgrid, &rc, k - 1)?.norm.to_f64();
        let big_rc = heat_solve_coeffs(&self.basis, &self.tgrid, &rc, &self.lop, &self.params, &self.heat)?;
        let big_r_norm = spacetime_pair_coeffs(&self.basis, &self.tgrid, &big_rc, k)?.norm.to_f64();
        let m_pair = spacetime_pair_coeffs(&self.basis, &self.tgrid, &st.m_coeffs, k)?;
        let (m_norm, m_seminorm) = (m_pair.norm.to_f64(), m_pair.seminorm.to_f64());
        let modulus_dev = st.m.modulus_deviation().to_f64();

        let finite = [r_norm, big_r_norm, m_norm, m_seminorm, modulus_dev];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: ell, what: dump(st, &finite) });
        }

        let big_r = big_rc
            .par_iter()
            .map(|cf| self.basis.inverse_values(cf))
            .collect::<Result<Vec<_>>>()?;
        let grid = self.basis.grid();
        let big_r = SpaceTimeField::from_slices(
            self.tgrid,
            big_r.into_iter().map(|values| VectorField { grid, values }).collect(),
        )?;
        st.m.axpy(-S::one(), &big_r)?;
        st.correction_sum.axpy(S::one(), &big_r)?;
        for (mc, rc) in st.m_coeffs.iter_mut().zip(&big_rc) {
            for (a, &b) in mc.iter_mut().zip(rc) {
                *a = a.minus(b);
            }
        }
        if !st.m.is_finite() {
            return Err(Error::NonFinite { iteration: ell, what: dump(st, &finite) });
        }

        let q = st.rows.last().map(|prev| ratio(big_r_norm, prev.big_r_norm));
        let s_j: f64 = st.rows.iter().map(|r| r.big_r_norm).sum();
        let m0 = st.rows.first().map_or(m_norm, |r| r.m_norm);
        let big_q = (m_seminorm + big_r_norm) * (1.0 + m_norm) + big_r_norm * big_r_norm + m0 * s_j + s_j * s_j;
        st.rows.push(IterationRow { ell, r_norm, big_r_norm, q, big_q, m_norm, m_seminorm, modulus_dev });
        st.ell += 1;
        if self.cfg.keep_iterates {
            st.iterates.push(st.m_coeffs.clone());
        }
        st.step_seconds.push(started.elapsed().as_secs_f64());

        let qs = st.q_history();
        let w = self.cfg.diverge_window;
        if r_norm < self.cfg.tol {
            st.status = Status::Converged;
        } else if qs.len() >= w && qs[qs.len() - w..].iter().all(|&q| q >= 1.0) {
            st.status = Status::Diverged;
        } else if st.ell >= self.cfg.max_iter {
            st.status = Status::MaxIterations;
        }
        Ok(())
    }

    /// Steps until a terminal status and evaluates the returned iterate.
    pub fn run(&self, m0: &VectorField<S>) -> Result<RunOutcome<S>> {
        self.run_with(m0, |_| {})
    }

    /// As [`Solver::run`], calling `observe` after every step.
    pub fn run_with(&self, m0: &VectorField<S>, mut observe: impl FnMut(&IterationState<S>)) -> Result<RunOutcome<S>> {
        let mut st = self.initialize(m0)?;
        while !st.status.is_terminal() {
            self.step(&mut st)?;
            observe(&st);
        }
        self.finish(st)
    }

    pub fn finish(&self, st: IterationState<S>) -> Result<RunOutcome<S>> {
        let r = self.residual_of(&st.m, &st.m_coeffs)?;
        let rc = self.forward_all(&r)?;
        let final_residual_norm = spacetime_pair_coeffs(&self.basis, &self.tgrid, &rc, self.cfg.k - 1)?.norm.to_f64();
        let pair = spacetime_pair_coeffs(&self.basis, &self.tgrid, &st.m_coeffs, self.cfg.k)?;
        let final_norm = NormPair { norm: pair.norm.to_f64(), seminorm: pair.seminorm.to_f64() };
        let smoothness_ratio = final_norm.norm / st.m0_norm;
        Ok(RunOutcome { state: st, final_residual_norm, final_norm, smoothness_ratio })
    }

    /// `max_{l<l'} ||m_l - m_l'|| / sum_{l<=j<l'} R_j` over stored iterates;
    /// the triangle inequality bounds it by 1.
    pub fn cauchy_audit(&self, st: &IterationState<S>) -> Result<Option<f64>> {
        if st.iterates.len() < 2 {
            return Ok(None);
        }
        let big_r = st.big_r_history();
        let mut worst: f64 = 0.0;
        for a in 0..st.iterates.len() {
            for b in a + 1..st.iterates.len() {
                let diff: Vec<Vec<Vec3<S>>> = st.iterates[a]
                    .iter()
                    .zip(&st.iterates[b])
                    .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.minus(*q)).collect())
                    .collect();
                let gap = spacetime_pair_coeffs(&self.basis, &self.tgrid, &diff, self.cfg.k)?.norm.to_f64();
                let tail: f64 = big_r[a..b].iter().sum();
                if tail > 0.0 {
                    worst = worst.max(gap / tail);
                } else if gap > 0.0 {
                    worst = f64::INFINITY;
                }
            }
        }
        Ok(Some(worst))
    }
}

/// Max nodewise gap in `m_l = m_0 - sum_{i<l} R_i`.
pub fn telescoping_gap<S: Real>(st: &IterationState<S>) -> f64 {
    let mut worst = 0.0f64;
    for (ms, rs) in st.m.slices.iter().zip(&st.correction_sum.slices) {
        for ((m, r), m0) in ms.values.iter().zip(&rs.values).zip(&st.m0.values) {
            worst = worst.max(m0.minus(*r).minus(*m).norm_sqr().sqrt().to_f64());
        }
    }
    worst
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

fn dump<S: Real>(st: &IterationState<S>, current: &[f64]) -> String {
    let mut s = format!("current [r, R, |m|, |m|_semi, moddev] = {current:?}; history:");
    for r in &st.rows {
        s.push_str(&format!(" (l={} r={:e} R={:e})", r.ell, r.r_norm, r.big_r_norm));
    }
    s
}

/// Geometric-fit diagnostics of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QDiagnostics {
    /// `Q_j` series
    pub big_q: Vec<f64>,
    /// `Q_j` nonincreasing from `j = 1` on
    pub q_trend_down: bool,
    /// least-squares rate of `log R_j` over the last `window` steps
    pub fitted_q: Option<f64>,
    /// largest `|q_j - fitted_q|` within that window
    pub fit_spread: Option<f64>,
    pub max_q: Option<f64>,
    /// Pearson correlation of `Q_j` with `q_j`
    pub correlation: Option<f64>,
}

pub fn q_diagnostics<S: Real>(st: &IterationState<S>, window: usize) -> QDiagnostics {
    let big_q = st.big_q_history();
    let q = st.q_history();
    let q_trend_down = big_q.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0]);
    let big_r = st.big_r_history();
    let (fitted_q, fit_spread) = if window >= 2 && big_r.len() >= window && big_r.iter().all(|&r| r > 0.0) {
        let tail = &big_r[big_r.len() - window..];
        let n = tail.len() as f64;
        let xs: Vec<f64> = (0..tail.len()).map(|i| i as f64).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let fit = (num / den).exp();
        let tail_q = &q[q.len() - (window - 1)..];
        let spread = tail_q.iter().map(|v| (v - fit).abs()).fold(0.0, f64::max);
        (Some(fit), Some(spread))
    } else {
        (None, None)
    };
    let max_q = q.iter().cloned().reduce(f64::max);
    // Q_{j} drives q_j = R_{j+1}/R_j
    let pairs: Vec<(f64, f64)> = big_q.iter().zip(&q).map(|(&a, &b)| (a, b)).collect();
    let correlation = pearson(&pairs);
    QDiagnostics { big_q, q_trend_down, fitted_q, fit_spread, max_q, correlation }
}

fn pearson(p: &[(f64, f64)]) -> Option<f64> {
    if p.len() < 3 {
        return None;
    }
    let n = p.len() as f64;
    let (mx, my) = (p.iter().map(|v| v.0).sum::<f64>() / n, p.iter().map(|v| v.1).sum::<f64>() / n);
    let sxy: f64 = p.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
    let sxx: f64 = p.iter().map(|v| (v.0 - mx).powi(2)).sum();
    let syy: f64 = p.iter().map(|v| (v.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

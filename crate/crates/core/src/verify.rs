//! A-posteriori checks of a computed solution
//!
//! A field `m` with `R(m) = 0`, `∂_n m = 0` and `m(0) = m0` solves the
//! equation; `|m| = 1` then follows, so the modulus deviation measures how
//! close the discrete solution is to a genuine one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{SpaceTimeField, VectorField};
use crate::grid::max_normal_derivative;
use crate::iterate::Solver;
use crate::norms::{sobolev_norm_coeffs, spacetime_pair_coeffs, spectral_slices};
use crate::scalar::{Lane, Real};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `||R(m)||_{H^{k-1,2k-2}}`
    pub residual_norm: f64,
    /// `max | |m| - 1 |`
    pub modulus_dev: f64,
    /// largest discrete normal derivative on the faces
    pub neumann_dev: f64,
    /// `max |m(0) - m0|`
    pub ic_dev: f64,
    /// max-norm gap to the oracle, when one was run
    pub oracle_linf: Option<f64>,
    /// `||m||_{H^{k,2k}} / ||m0||_{H^{2k}}`
    pub smoothness_ratio: f64,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        let vals = [self.residual_norm, self.modulus_dev, self.neumann_dev, self.ic_dev, self.smoothness_ratio];
        vals.iter().chain(self.oracle_linf.iter()).all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Evaluates every report field except the oracle gap.
pub fn check_solution<S: Real>(solver: &Solver<S>, m: &SpaceTimeField<S>, m0: &VectorField<S>) -> Result<VerificationReport> {
    if m.grid() != m0.grid || m.tgrid != solver.tgrid {
        return Err(Error::GridMismatch);
    }
    let grid = m0.grid;
    let k = solver.cfg.k;
    let residual_norm = solver.residual_norm(m)?;
    let modulus_dev = m.modulus_deviation().to_f64();
    let neumann_dev = m
        .slices
        .par_iter()
        .map(|s| max_normal_derivative::<S, _>(grid, &s.values).to_f64())
        .reduce(|| 0.0, f64::max);
    let ic_dev = m.slices[0]
        .values
        .iter()
        .zip(&m0.values)
        .map(|(a, b)| a.minus(*b).norm_sqr().sqrt().to_f64())
        .fold(0.0, f64::max);
    let coeffs = spectral_slices(&solver.basis, m)?;
    let norm = spacetime_pair_coeffs(&solver.basis, &solver.tgrid, &coeffs, k)?.norm.to_f64();
    let c0 = solver.basis.forward_values(&m0.values)?;
    let smoothness_ratio = norm / sobolev_norm_coeffs(&solver.basis, &c0, 2 * k).to_f64();
    Ok(VerificationReport { residual_norm, modulus_dev, neumann_dev, ic_dev, oracle_linf: None, smoothness_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// max-norm gap at each time node
    pub per_slice: Vec<f64>,
    pub max: f64,
}

pub fn compare_oracle<S: Real>(m: &SpaceTimeField<S>, oracle: &SpaceTimeField<S>) -> Result<OracleComparison> {
    if m.tgrid != oracle.tgrid {
        return Err(Error::GridMismatch);
    }
    let per_slice: Vec<f64> = m.slice_gaps(oracle)?.into_iter().map(|g| g.to_f64()).collect();
    let max = per_slice.iter().cloned().fold(0.0, f64::max);
    Ok(OracleComparison { per_slice, max })
}

/// Observed order `log2(gap_coarse / gap_fine)` for consecutive refinements by 2.
pub fn refinement_orders(gaps: &[f64]) -> Vec<f64> {
    gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

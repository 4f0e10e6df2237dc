//! Discrete anisotropic space-time Sobolev norms.
//!
//! ```text
//! ||v||_{H^{k,2k}} = sum_{l=0..k} ( ∫_0^T ||∂_t^l v||²_{H^{2k-2l}} dt )^{1/2}
//! |v|_{H^{k,2k}}   = ( sum_{l=1..2k} ∫_0^T ||D^l v||²_{L²} dt )^{1/2}
//!                    + sum_{l=1..k} ( ∫_0^T ||∂_t^l v||²_{H^{2k-2l}} dt )^{1/2}
//! ```
//!
//! The norms sum over `l` (they do not add squares), exactly as written.
//!
//! **The spatial norms are spectral and only equivalent to the textbook ones.**
//! `||f||²_{H^s} = h^d sum_k (1+lambda_k)^s |f_k|²` and
//! `||D^l f||² = h^d sum_k lambda_k^l |f_k|²` on the cosine coefficients.
//! For even `l` the second is the exact sum over mixed partials of the
//! cosine interpolant; for odd `l` it is equivalent with a constant that
//! depends only on `d` and `l`. The norms are used for ratios and
//! thresholds, where a fixed equivalent norm carries the same information.
//!
//! Time derivatives come from [`crate::grid::time_stencils`] and the time
//! integral is the trapezoid rule. Both commute with the DCT, so every
//! function here can work directly on cosine coefficient slices.

use serde::{Deserialize, Serialize};

use crate::field::{SpaceTimeField, Vec3, VectorField};
use crate::grid::{time_derivative_slices, CosineBasis, TimeGrid};
use crate::scalar::{c, Lane, Real};
use crate::{Error, Result};

/// Regularity index of `H^{k,2k}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub k: usize,
}

impl Default for NormSpec {
    fn default() -> Self {
        Self { k: 3 }
    }
}

impl NormSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter("norm index k must be at least 1".into()));
        }
        Ok(Self { k })
    }

    /// Time steps needed to resolve `∂_t^k`.
    pub fn required_steps(&self) -> usize {
        2 * self.k + 1
    }
}

/// Which sum a [`NormTerm`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermKind {
    /// `(∫ ||∂_t^l v||²_{H^s})^{1/2}`, shared by norm (all `l`) and seminorm (`l >= 1`)
    Time,
    /// `(∫ ||D^l v||²)^{1/2}`, inside the seminorm's square root
    Space,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTerm {
    pub kind: TermKind,
    /// number of time derivatives
    pub time_order: usize,
    /// spatial Sobolev index (for `Space` terms: derivative order)
    pub space_order: usize,
    pub value: f64,
}

impl NormTerm {
    pub fn key(&self) -> String {
        match self.kind {
            TermKind::Time => format!("dt{}_h{}", self.time_order, self.space_order),
            TermKind::Space => format!("d{}", self.space_order),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub k: usize,
    pub norm: f64,
    pub seminorm: f64,
    pub per_term: Vec<NormTerm>,
}

impl NormReport {
    /// Flat `(key, value)` list: `norm`, `seminorm`, then every term.
    pub fn flat(&self) -> Vec<(String, f64)> {
        let mut out = vec![("k".to_string(), self.k as f64), ("norm".into(), self.norm), ("seminorm".into(), self.seminorm)];
        out.extend(self.per_term.iter().map(|t| (t.key(), t.value)));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .flat()
            .into_iter()
            .map(|(k, v)| (k, serde_json::json!(v)))
            .collect::<serde_json::Map<_, _>>();
        serde_json::Value::Object(map)
    }

    /// Header row and value row for a one-record CSV.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let flat = self.flat();
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(flat.iter().map(|(k, _)| k.as_str()))?;
        wr.write_record(flat.iter().map(|(_, v)| format!("{v:e}")))?;
        wr.flush()?;
        Ok(())
    }
}

/// Norm values kept in the working precision, for iteration bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormPair<S> {
    pub norm: S,
    pub seminorm: S,
}

/// `h^d sum_k (1+lambda_k)^s |c_k|²` for one coefficient slice.
fn weighted_sq<S: Real>(weights: &[S], coeffs: &[Vec3<S>], cell: S) -> S {
    let mut acc = S::zero();
    for (&w, cf) in weights.iter().zip(coeffs) {
        acc += w * cf.norm_sqr();
    }
    acc * cell
}

fn sobolev_weights<S: Real>(basis: &CosineBasis<S>, s: usize) -> Vec<S> {
    basis.eigenvalues().iter().map(|&l| (S::one() + l).powi(s as u32)).collect()
}

fn derivative_weights<S: Real>(basis: &CosineBasis<S>, order: usize) -> Vec<S> {
    basis.eigenvalues().iter().map(|&l| l.powi(order as u32)).collect()
}

fn trapezoid<S: Real>(tgrid: &TimeGrid, samples: &[S]) -> S {
    let m = samples.len() - 1;
    let mut acc = (samples[0] + samples[m]) * c(0.5);
    for &s in &samples[1..m] {
        acc += s;
    }
    acc * tgrid.dt::<S>()
}

/// Spatial `H^s` norm from cosine coefficients.
pub fn sobolev_norm_coeffs<S: Real>(basis: &CosineBasis<S>, coeffs: &[Vec3<S>], s: usize) -> S {
    weighted_sq(&sobolev_weights(basis, s), coeffs, basis.grid().cell_volume()).sqrt()
}

/// Spatial `H^s` norm of a vector field.
pub fn spatial_sobolev_norm<S: Real>(basis: &CosineBasis<S>, slice: &VectorField<S>, s: usize) -> Result<S> {
    if slice.grid != basis.grid() {
        return Err(Error::GridMismatch);
    }
    let coeffs = basis.forward_values(&slice.values)?;
    Ok(sobolev_norm_coeffs(basis, &coeffs, s))
}

/// Spatial seminorm `(sum_{l=1..order} ||D^l f||²)^{1/2}`.
pub fn spatial_seminorm<S: Real>(basis: &CosineBasis<S>, slice: &VectorField<S>, order: usize) -> Result<S> {
    if slice.grid != basis.grid() {
        return Err(Error::GridMismatch);
    }
    let coeffs = basis.forward_values(&slice.values)?;
    let cell = basis.grid().cell_volume::<S>();
    let mut acc = S::zero();
    for l in 1..=order {
        acc += weighted_sq(&derivative_weights(basis, l), &coeffs, cell);
    }
    Ok(acc.sqrt())
}

/// Cosine coefficients of every time slice.
pub fn spectral_slices<S: Real>(basis: &CosineBasis<S>, stf: &SpaceTimeField<S>) -> Result<Vec<Vec<Vec3<S>>>> {
    if stf.grid() != basis.grid() {
        return Err(Error::GridMismatch);
    }
    stf.slices.iter().map(|s| basis.forward_values(&s.values)).collect()
}

/// `(∫ ||∂_t^l v||²_{H^{2k-2l}})^{1/2}` for `l = 0..=k`.
fn time_terms<S: Real>(basis: &CosineBasis<S>, tgrid: &TimeGrid, coeffs: &[Vec<Vec3<S>>], k: usize) -> Result<Vec<S>> {
    let cell = basis.grid().cell_volume::<S>();
    (0..=k)
        .map(|l| {
            let weights = sobolev_weights(basis, 2 * k - 2 * l);
            let samples: Vec<S> = if l == 0 {
                coeffs.iter().map(|cf| weighted_sq(&weights, cf, cell)).collect()
            } else {
                time_derivative_slices(tgrid, coeffs, l)?
                    .iter()
                    .map(|cf| weighted_sq(&weights, cf, cell))
                    .collect()
            };
            Ok(trapezoid(tgrid, &samples).sqrt())
        })
        .collect()
}

/// `(∫ ||D^l v||²)^{1/2}` for `l = 1..=2k`, unsquared.
fn space_terms<S: Real>(basis: &CosineBasis<S>, tgrid: &TimeGrid, coeffs: &[Vec<Vec3<S>>], k: usize) -> Vec<S> {
    let cell = basis.grid().cell_volume::<S>();
    (1..=2 * k)
        .map(|l| {
            let weights = derivative_weights(basis, l);
            let samples: Vec<S> = coeffs.iter().map(|cf| weighted_sq(&weights, cf, cell)).collect();
            trapezoid(tgrid, &samples).sqrt()
        })
        .collect()
}

fn check_slices<S>(tgrid: &TimeGrid, coeffs: &[Vec<Vec3<S>>], k: usize) -> Result<()> {
    if coeffs.len() != tgrid.nodes() {
        return Err(Error::DimensionMismatch { expected: tgrid.nodes(), got: coeffs.len() });
    }
    if k > 0 {
        tgrid.require_steps(2 * k + 1)?;
    }
    Ok(())
}

/// Norm and seminorm of `H^{k,2k}` from coefficient slices, in working
/// precision. `k = 0` is allowed and gives the `L²(D_T)` norm (seminorm 0).
pub fn spacetime_pair_coeffs<S: Real>(
    basis: &CosineBasis<S>,
    tgrid: &TimeGrid,
    coeffs: &[Vec<Vec3<S>>],
    k: usize,
) -> Result<NormPair<S>> {
    check_slices(tgrid, coeffs, k)?;
    let time = time_terms(basis, tgrid, coeffs, k)?;
    let space = space_terms(basis, tgrid, coeffs, k);
    Ok(assemble(&time, &space))
}

fn assemble<S: Real>(time: &[S], space: &[S]) -> NormPair<S> {
    let norm = time.iter().fold(S::zero(), |a, &t| a + t);
    let inner = space.iter().fold(S::zero(), |a, &t| a + t * t).sqrt();
    let seminorm = time[1..].iter().fold(inner, |a, &t| a + t);
    NormPair { norm, seminorm }
}

/// Full report from coefficient slices.
pub fn spacetime_report_coeffs<S: Real>(
    basis: &CosineBasis<S>,
    tgrid: &TimeGrid,
    coeffs: &[Vec<Vec3<S>>],
    k: usize,
) -> Result<NormReport> {
    check_slices(tgrid, coeffs, k)?;
    let time = time_terms(basis, tgrid, coeffs, k)?;
    let space = space_terms(basis, tgrid, coeffs, k);
    let pair = assemble(&time, &space);
    let mut per_term: Vec<NormTerm> = time
        .iter()
        .enumerate()
        .map(|(l, &v)| NormTerm { kind: TermKind::Time, time_order: l, space_order: 2 * k - 2 * l, value: v.to_f64() })
        .collect();
    per_term.extend(space.iter().enumerate().map(|(i, &v)| NormTerm {
        kind: TermKind::Space,
        time_order: 0,
        space_order: i + 1,
        value: v.to_f64(),
    }));
    Ok(NormReport { k, norm: pair.norm.to_f64(), seminorm: pair.seminorm.to_f64(), per_term })
}

/// `H^{k,2k}(D_T)` norm and seminorm of a space-time field.
pub fn spacetime_norm<S: Real>(basis: &CosineBasis<S>, stf: &SpaceTimeField<S>, spec: NormSpec) -> Result<NormReport> {
    let coeffs = spectral_slices(basis, stf)?;
    spacetime_report_coeffs(basis, &stf.tgrid, &coeffs, spec.k)
}

/// Seminorm only.
pub fn spacetime_seminorm<S: Real>(basis: &CosineBasis<S>, stf: &SpaceTimeField<S>, spec: NormSpec) -> Result<S> {
    let coeffs = spectral_slices(basis, stf)?;
    Ok(spacetime_pair_coeffs(basis, &stf.tgrid, &coeffs, spec.k)?.seminorm)
}

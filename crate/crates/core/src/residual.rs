//! The nonlinear residual
//!
//! ```text
//! R(v) = alpha v_t + v x v_t - C_e |v|² Δv - C_e |∇v|² v
//! ```
//!
//! and the constant operator `L a = alpha a + p x a`, `p = m0(x0)`.
//! A field with `R(v) = 0`, `∂_n v = 0` and unit-length initial data solves
//! the LLG equation.

use rayon::prelude::*;

use crate::field::{cross3, dot3, PhysicsParams, SpaceTimeField, Vec3, VectorField};
use crate::grid::{gradient_axis, time_stencils, BackwardStencil, CosineBasis, NodeStencil, SpaceGrid, TimeGrid};
use crate::scalar::{c, Lane, Real};
use crate::{Error, Result};

/// Pivot modulus tolerance for [`LOperator`].
pub const PIVOT_TOL: f64 = 1e-8;

/// `L a = alpha a + p x a` with its closed-form inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct LOperator<S> {
    alpha: S,
    pivot: Vec3<S>,
    matrix: [[S; 3]; 3],
    inverse: [[S; 3]; 3],
}

impl<S: Real> LOperator<S> {
    pub fn new(alpha: S, pivot: Vec3<S>) -> Result<Self> {
        if !(alpha > S::zero()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let modulus = pivot.norm_sqr().sqrt().to_f64();
        if !((modulus - 1.0).abs() <= PIVOT_TOL) {
            return Err(Error::NonUnitPivot(modulus));
        }
        let matrix = shifted_matrix(alpha, S::one(), pivot);
        let inverse = shifted_inverse(alpha, S::one(), pivot);
        Ok(Self { alpha, pivot, matrix, inverse })
    }

    /// `L` with pivot `m0` at flat node `x0`.
    pub fn build(params: &PhysicsParams, m0: &VectorField<S>, x0: usize) -> Result<Self> {
        params.validate()?;
        let pivot = *m0
            .values
            .get(x0)
            .ok_or_else(|| Error::InvalidParameter(format!("x0 index {x0} outside grid of {} nodes", m0.values.len())))?;
        Self::new(S::from_f64(params.alpha), pivot)
    }

    /// `L` at the node nearest the box centre.
    pub fn build_centered(params: &PhysicsParams, m0: &VectorField<S>) -> Result<Self> {
        Self::build(params, m0, m0.grid.center_index())
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn pivot(&self) -> Vec3<S> {
        self.pivot
    }

    pub fn matrix(&self) -> [[S; 3]; 3] {
        self.matrix
    }

    pub fn inverse_matrix(&self) -> [[S; 3]; 3] {
        self.inverse
    }

    #[inline]
    pub fn apply(&self, a: Vec3<S>) -> Vec3<S> {
        let p = cross3(self.pivot, a);
        [self.alpha * a[0] + p[0], self.alpha * a[1] + p[1], self.alpha * a[2] + p[2]]
    }

    #[inline]
    pub fn apply_inverse(&self, a: Vec3<S>) -> Vec3<S> {
        mat_vec(&self.inverse, a)
    }

    /// Solves `(beta L + mu I) x = b`, i.e. `((beta alpha + mu) I + beta p x) x = b`.
    pub fn solve_shifted(&self, beta: S, mu: S, b: Vec3<S>) -> Result<Vec3<S>> {
        let diag = beta * self.alpha + mu;
        if !(diag > S::zero()) {
            return Err(Error::SingularModeMatrix(mu.to_f64()));
        }
        Ok(mat_vec(&shifted_inverse(diag, beta, self.pivot), b))
    }

    /// Precomputed inverse of `(beta L + mu I)`.
    pub fn shifted_inverse(&self, beta: S, mu: S) -> Result<[[S; 3]; 3]> {
        let diag = beta * self.alpha + mu;
        if !(diag > S::zero()) {
            return Err(Error::SingularModeMatrix(mu.to_f64()));
        }
        Ok(shifted_inverse(diag, beta, self.pivot))
    }
}

#[inline]
pub fn mat_vec<S: Real>(m: &[[S; 3]; 3], a: Vec3<S>) -> Vec3<S> {
    [dot3(m[0], a), dot3(m[1], a), dot3(m[2], a)]
}

/// `a I + b [p]x`
fn shifted_matrix<S: Real>(a: S, b: S, p: Vec3<S>) -> [[S; 3]; 3] {
    [[a, -b * p[2], b * p[1]], [b * p[2], a, -b * p[0]], [-b * p[1], b * p[0], a]]
}

/// `(a I + b [p]x)^{-1} = (a² I - a b [p]x + b² p pᵀ) / (a (a² + b²|p|²))`
fn shifted_inverse<S: Real>(a: S, b: S, p: Vec3<S>) -> [[S; 3]; 3] {
    let b2 = b * b;
    let det = a * (a * a + b2 * p.norm_sqr());
    let skew = shifted_matrix(S::zero(), -a * b, p);
    let mut out = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let diag = if i == j { a * a } else { S::zero() };
            out[i][j] = (diag + skew[i][j] + b2 * p[i] * p[j]) / det;
        }
    }
    out
}

/// Time discretization of `v_t` inside the residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeStencil {
    /// second-order centred, one-sided at both ends
    Centered,
    /// backward differences matching the heat solver (see [`BackwardStencil`])
    Backward(BackwardStencil),
}

impl TimeStencil {
    pub fn stencils<S: Real>(self, tgrid: &TimeGrid) -> Result<Vec<NodeStencil<S>>> {
        match self {
            TimeStencil::Centered => {
                tgrid.require_steps(3)?;
                time_stencils(tgrid, 1)
            }
            TimeStencil::Backward(b) => {
                tgrid.require_steps(3)?;
                b.stencils(tgrid)
            }
        }
    }
}

/// Pointwise ingredients of the residual on one slice.
struct SliceTerms<'a, S> {
    v: &'a [Vec3<S>],
    vt: Vec<Vec3<S>>,
    lap: &'a [Vec3<S>],
    grad_sq: Vec<S>,
}

fn grad_sq<S: Real>(grid: SpaceGrid, v: &[Vec3<S>]) -> Vec<S> {
    let mut out = vec![S::zero(); v.len()];
    for axis in 0..grid.dim() {
        let g = gradient_axis::<S, Vec3<S>>(grid, v, axis);
        for (o, d) in out.iter_mut().zip(&g) {
            *o += d.norm_sqr();
        }
    }
    out
}

fn time_derivative<S: Real>(st: &NodeStencil<S>, slices: &[&[Vec3<S>]]) -> Vec<Vec3<S>> {
    let anchor = slices[st.start];
    let mut out = vec![[S::zero(); 3]; anchor.len()];
    for (j, &w) in st.weights.iter().enumerate().skip(1) {
        for ((o, &v), &a) in out.iter_mut().zip(slices[st.start + j]).zip(anchor) {
            *o = o.fma(w, v.minus(a));
        }
    }
    out
}

fn slice_terms<'a, S: Real>(
    grid: SpaceGrid,
    stencils: &[NodeStencil<S>],
    values: &[&'a [Vec3<S>]],
    laps: &[&'a [Vec3<S>]],
    n: usize,
) -> SliceTerms<'a, S> {
    SliceTerms {
        v: values[n],
        vt: time_derivative(&stencils[n], values),
        lap: laps[n],
        grad_sq: grad_sq(grid, values[n]),
    }
}

fn eval_orig<S: Real>(t: &SliceTerms<'_, S>, alpha: S, ce: S) -> Vec<Vec3<S>> {
    (0..t.v.len())
        .map(|i| {
            let v = t.v[i];
            let vt = t.vt[i];
            let x = cross3(v, vt);
            let a = ce * v.norm_sqr();
            let b = ce * t.grad_sq[i];
            let l = t.lap[i];
            [
                alpha * vt[0] + x[0] - a * l[0] - b * v[0],
                alpha * vt[1] + x[1] - a * l[1] - b * v[1],
                alpha * vt[2] + x[2] - a * l[2] - b * v[2],
            ]
        })
        .collect()
}

fn eval_form3<S: Real>(t: &SliceTerms<'_, S>, lop: &LOperator<S>, ce: S) -> Vec<Vec3<S>> {
    let p = lop.pivot();
    (0..t.v.len())
        .map(|i| {
            let v = t.v[i];
            let vt = t.vt[i];
            let lvt = lop.apply(vt);
            let x = cross3(v.minus(p), vt);
            let a = ce * (S::one() - v.norm_sqr());
            let b = ce * t.grad_sq[i];
            let l = t.lap[i];
            [
                lvt[0] + x[0] - ce * l[0] + a * l[0] - b * v[0],
                lvt[1] + x[1] - ce * l[1] + a * l[1] - b * v[1],
                lvt[2] + x[2] - ce * l[2] + a * l[2] - b * v[2],
            ]
        })
        .collect()
}

/// Residual from node values and their (precomputed) Laplacians.
pub fn residual_from_parts<S: Real>(
    grid: SpaceGrid,
    tgrid: &TimeGrid,
    values: &[&[Vec3<S>]],
    laps: &[&[Vec3<S>]],
    params: &PhysicsParams,
    stencils: &[NodeStencil<S>],
) -> Result<SpaceTimeField<S>> {
    let alpha = S::from_f64(params.alpha);
    let ce = S::from_f64(params.c_e);
    let slices = (0..tgrid.nodes())
        .into_par_iter()
        .map(|n| {
            let t = slice_terms(grid, stencils, values, laps, n);
            VectorField { grid, values: eval_orig(&t, alpha, ce) }
        })
        .collect();
    Ok(SpaceTimeField { tgrid: *tgrid, slices })
}

fn laplacians<S: Real>(basis: &CosineBasis<S>, v: &SpaceTimeField<S>) -> Result<Vec<Vec<Vec3<S>>>> {
    if v.grid() != basis.grid() {
        return Err(Error::GridMismatch);
    }
    v.slices.par_iter().map(|s| basis.laplacian_values(&s.values)).collect()
}

/// `R(v)` evaluated slice by slice.
pub fn residual<S: Real>(
    v: &SpaceTimeField<S>,
    params: &PhysicsParams,
    basis: &CosineBasis<S>,
    stencil: TimeStencil,
) -> Result<SpaceTimeField<S>> {
    let st = stencil.stencils::<S>(&v.tgrid)?;
    let laps = laplacians(basis, v)?;
    let values: Vec<&[Vec3<S>]> = v.slices.iter().map(|s| s.values.as_slice()).collect();
    let lap_refs: Vec<&[Vec3<S>]> = laps.iter().map(|l| l.as_slice()).collect();
    residual_from_parts(v.grid(), &v.tgrid, &values, &lap_refs, params, &st)
}

/// Agreement of the two algebraically identical forms of the residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Form3Discrepancy {
    pub max_abs: f64,
    /// `max_abs` over the larger of `max |R(v)|` and 1
    pub relative: f64,
}

/// Evaluates `L v_t + (v - p) x v_t - C_e Δv + C_e (1 - |v|²) Δv - C_e |∇v|² v`
/// against [`residual`] on the same discrete ingredients.
pub fn residual_form3_check<S: Real>(
    v: &SpaceTimeField<S>,
    lop: &LOperator<S>,
    params: &PhysicsParams,
    basis: &CosineBasis<S>,
    stencil: TimeStencil,
) -> Result<Form3Discrepancy> {
    if (lop.alpha().to_f64() - params.alpha).abs() > 1e-14 * params.alpha {
        return Err(Error::InvalidParameter("L was built with a different alpha".into()));
    }
    let st = stencil.stencils::<S>(&v.tgrid)?;
    let laps = laplacians(basis, v)?;
    let values: Vec<&[Vec3<S>]> = v.slices.iter().map(|s| s.values.as_slice()).collect();
    let lap_refs: Vec<&[Vec3<S>]> = laps.iter().map(|l| l.as_slice()).collect();
    let alpha = S::from_f64(params.alpha);
    let ce = S::from_f64(params.c_e);
    let grid = v.grid();
    let (gap, scale) = (0..v.tgrid.nodes())
        .into_par_iter()
        .map(|n| {
            let t = slice_terms(grid, &st, &values, &lap_refs, n);
            let a = eval_orig(&t, alpha, ce);
            let b = eval_form3(&t, lop, ce);
            a.iter().zip(&b).fold((0.0f64, 0.0f64), |(g, s), (x, y)| {
                (g.max(x.minus(*y).norm_sqr().sqrt().to_f64()), s.max(x.norm_sqr().sqrt().to_f64()))
            })
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(Form3Discrepancy { max_abs: gap, relative: gap / scale.max(1.0) })
}

/// `(alpha/2) ∂_t|v|² - (C_e/2) |v|² Δ|v|²` minus `R(v)·v`, nodewise max.
/// The two agree exactly for smooth fields; the discrete gap measures
/// discretization error only.
pub fn energy_identity_gap<S: Real>(
    v: &SpaceTimeField<S>,
    params: &PhysicsParams,
    basis: &CosineBasis<S>,
    stencil: TimeStencil,
) -> Result<f64> {
    let r = residual(v, params, basis, stencil)?;
    let st = stencil.stencils::<S>(&v.tgrid)?;
    let sq: Vec<Vec<S>> = v.slices.iter().map(|s| s.values.iter().map(|x| x.norm_sqr()).collect()).collect();
    let alpha = S::from_f64(params.alpha);
    let ce = S::from_f64(params.c_e);
    let mut worst = 0.0f64;
    for n in 0..v.tgrid.nodes() {
        let stn = &st[n];
        let lap_sq = basis.laplacian_values(&sq[n])?;
        for i in 0..sq[n].len() {
            let mut dt_sq = S::zero();
            for (j, &w) in stn.weights.iter().enumerate() {
                dt_sq += w * sq[stn.start + j][i];
            }
            let rhs = alpha * c::<S>(0.5) * dt_sq - ce * c::<S>(0.5) * sq[n][i] * lap_sq[i];
            let lhs = dot3(r.slices[n].values[i], v.slices[n].values[i]);
            worst = worst.max((lhs - rhs).abs().to_f64());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_vec(rng: &mut ChaCha8Rng) -> Vec3<f64> {
        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
    }

    fn unit(a: Vec3<f64>) -> Vec3<f64> {
        let n = a.norm_sqr().sqrt();
        a.map(|x| x / n)
    }

    #[test]
    fn l_operator_basic_values() {
        let l = LOperator::new(1.0, [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(l.apply([1.0, 0.0, 0.0]), [1.0, 1.0, 0.0]);
        assert!(matches!(LOperator::new(1.0, [0.0, 0.0, 1.1]), Err(Error::NonUnitPivot(_))));
        assert!(LOperator::new(1.0, [0.0, 0.0, 1.0 + 1e-9]).is_ok());
        assert!(LOperator::new(0.0, [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn l_is_coercive_with_constant_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let alpha = rng.gen_range(0.1..3.0);
            let l = LOperator::new(alpha, unit(rand_vec(&mut rng))).unwrap();
            let a = rand_vec(&mut rng);
            let q = dot3(l.apply(a), a);
            assert!((q - alpha * a.norm_sqr()).abs() < 1e-14 * (1.0 + q.abs()));
        }
    }

    /// Gaussian elimination as an independent 3x3 solver.
    fn gauss_solve(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
        for col in 0..3 {
            let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..3 {
                let f = m[row][col] / m[col][col];
                for k in col..3 {
                    m[row][k] -= f * m[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = [0.0; 3];
        for row in (0..3).rev() {
            let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / m[row][row];
        }
        x
    }

    #[test]
    fn inverse_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let l = LOperator::new(rng.gen_range(0.2..2.0), unit(rand_vec(&mut rng))).unwrap();
            let a = rand_vec(&mut rng);
            let back = l.apply_inverse(l.apply(a));
            assert!(back.minus(a).norm_sqr().sqrt() < 1e-13);
            let b = rand_vec(&mut rng);
            let x = gauss_solve(l.matrix(), b);
            assert!(l.apply_inverse(b).minus(x).norm_sqr().sqrt() < 1e-13);
            let mu = rng.gen_range(0.0..100.0);
            let mut shifted = l.matrix();
            for (i, row) in shifted.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v *= 1.5;
                    if i == j {
                        *v += mu;
                    }
                }
            }
            let y = gauss_solve(shifted, b);
            assert!(l.solve_shifted(1.5, mu, b).unwrap().minus(y).norm_sqr().sqrt() < 1e-13);
        }
    }

    #[test]
    fn matrix_times_inverse_is_identity() {
        let l = LOperator::new(0.7, unit([0.3, -0.4, 0.8])).unwrap();
        let (m, inv) = (l.matrix(), l.inverse_matrix());
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    fn setup(n: usize, m: usize, t: f64) -> (CosineBasis<f64>, TimeGrid) {
        (CosineBasis::new(SpaceGrid::new(2, n).unwrap()), TimeGrid::new(t, m).unwrap())
    }

    #[test]
    fn constant_fields_have_zero_residual() {
        let (basis, tg) = setup(8, 6, 0.5);
        let p = PhysicsParams::new(0.8, 1.3).unwrap();
        for c in [[0.0, 0.0, 1.0], unit([0.2, 0.1, -0.5]), [0.3, 0.4, 2.0]] {
            let v = SpaceTimeField::replicate(&VectorField::constant(basis.grid(), c), tg);
            for st in [TimeStencil::Centered, TimeStencil::Backward(BackwardStencil::Bdf2)] {
                let r = residual(&v, &p, &basis, st).unwrap();
                assert_eq!(r.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn too_few_steps_rejected() {
        let (basis, tg) = setup(4, 2, 0.5);
        let v = SpaceTimeField::replicate(&VectorField::constant(basis.grid(), [0.0, 0.0, 1.0]), tg);
        assert!(matches!(
            residual(&v, &PhysicsParams::default(), &basis, TimeStencil::Centered),
            Err(Error::TooFewTimeSteps { .. })
        ));
    }

    const EPS: f64 = 0.1;

    /// `v = (1, a, 0)/sqrt(1+a²)`, `a = eps e^{-t} cos(pi x)`, and its exact
    /// residual worked out by hand: with `f(a) = (1,a,0)/sqrt(1+a²)`,
    /// `f' = (-a,1,0)/(1+a²)^{3/2}`, `f'' = (2a²-1, -3a, 0)/(1+a²)^{5/2}`,
    /// `v × v_t = a_t/(1+a²) e3`, `|∇v|² = a_x²/(1+a²)²`.
    fn manufactured(t: f64, x: [f64; 3]) -> Vec3<f64> {
        let a = EPS * (-t).exp() * (PI * x[0]).cos();
        let s = (1.0 + a * a).sqrt();
        [1.0 / s, a / s, 0.0]
    }

    fn manufactured_residual(t: f64, x: [f64; 3], alpha: f64, ce: f64) -> Vec3<f64> {
        let e = EPS * (-t).exp();
        let a = e * (PI * x[0]).cos();
        let at = -a;
        let ax = -e * PI * (PI * x[0]).sin();
        let axx = -PI * PI * a;
        let q = 1.0 + a * a;
        let d1 = [-a / q.powf(1.5), 1.0 / q.powf(1.5), 0.0];
        let d2 = [(2.0 * a * a - 1.0) / q.powf(2.5), -3.0 * a / q.powf(2.5), 0.0];
        let v = [1.0 / q.sqrt(), a / q.sqrt(), 0.0];
        let vt = d1.scale(at);
        let lap = d2.scale(ax * ax).plus(d1.scale(axx));
        let g2 = ax * ax / (q * q);
        let mut r = [0.0; 3];
        for i in 0..3 {
            r[i] = alpha * vt[i] - ce * lap[i] - ce * g2 * v[i];
        }
        r[2] += at / q;
        r
    }

    fn manufactured_error(n: usize, m: usize, st: TimeStencil, skip_first: usize) -> f64 {
        let (basis, tg) = setup(n, m, 0.5);
        let p = PhysicsParams::new(0.9, 1.1).unwrap();
        let v = SpaceTimeField::from_fn(basis.grid(), tg, manufactured);
        let r = residual(&v, &p, &basis, st).unwrap();
        let want = SpaceTimeField::from_fn(basis.grid(), tg, |t, x| manufactured_residual(t, x, 0.9, 1.1));
        r.slice_gaps(&want).unwrap()[skip_first..].iter().cloned().fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_residual_converges_second_order() {
        let e: Vec<f64> = [(8, 8), (16, 16), (32, 32)]
            .iter()
            .map(|&(n, m)| manufactured_error(n, m, TimeStencil::Centered, 0))
            .collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope > 1.8, "slope {slope}, errors {e:?}");
        }
        // backward stencil: second order from node 2 on
        let b: Vec<f64> = [(16, 16), (32, 32)]
            .iter()
            .map(|&(n, m)| manufactured_error(n, m, TimeStencil::Backward(BackwardStencil::Bdf2), 2))
            .collect();
        assert!((b[0] / b[1]).log2() > 1.8, "{b:?}");
    }

    fn wobbly(basis: &CosineBasis<f64>, tg: TimeGrid) -> SpaceTimeField<f64> {
        SpaceTimeField::from_fn(basis.grid(), tg, |t: f64, x: [f64; 3]| {
            let a = 0.3 * (PI * x[0]).cos() * (1.0 + t);
            let b = 0.2 * (2.0 * PI * x[1]).cos() * (2.0 * t).sin();
            [a, b, 1.0 + a * b]
        })
    }

    #[test]
    fn form3_agrees_with_original_form() {
        let p = PhysicsParams::new(0.7, 1.4).unwrap();
        let (basis, tg) = setup(16, 8, 0.5);
        let v = wobbly(&basis, tg);
        let l = LOperator::build_centered(&p, &VectorField::constant(basis.grid(), unit([0.2, 0.3, 1.0]))).unwrap();
        for st in [TimeStencil::Centered, TimeStencil::Backward(BackwardStencil::Bdf1)] {
            let d = residual_form3_check(&v, &l, &p, &basis, st).unwrap();
            assert!(d.relative <= 1e-10, "{d:?}");
        }
        let c = SpaceTimeField::replicate(&VectorField::constant(basis.grid(), [0.0, 0.0, 1.0]), tg);
        let d = residual_form3_check(&c, &l, &p, &basis, TimeStencil::Centered).unwrap();
        assert_eq!(d.max_abs, 0.0);
    }

    #[test]
    fn form3_in_double_double() {
        let p = PhysicsParams::default();
        let (basis, tg) = setup(8, 6, 0.5);
        let v: SpaceTimeField<Dd> = wobbly(&basis, tg).cast();
        let bdd = CosineBasis::<Dd>::new(basis.grid());
        let l = LOperator::<Dd>::new(Dd::from_f64(1.0), [Dd::from_f64(0.0), Dd::from_f64(0.6), Dd::from_f64(0.8)]).unwrap();
        let d = residual_form3_check(&v, &l, &p, &bdd, TimeStencil::Centered).unwrap();
        assert!(d.relative <= 1e-28, "{d:?}");
    }

    #[test]
    fn energy_identity_holds_to_discretization_order() {
        let p = PhysicsParams::new(0.9, 1.1).unwrap();
        let gaps: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let (basis, tg) = setup(n, n, 0.5);
                let v = SpaceTimeField::from_fn(basis.grid(), tg, |t, x| {
                    let base = manufactured(t, x);
                    base.scale(1.0 + 0.05 * (PI * x[1]).cos() * t)
                });
                energy_identity_gap(&v, &p, &basis, TimeStencil::Centered).unwrap()
            })
            .collect();
        assert!(gaps[2] < 1e-3, "{gaps:?}");
        assert!((gaps[1] / gaps[2]).log2() > 1.5, "{gaps:?}");
    }

    /// `||R(v+d) - R(v)|| / ||d||` stays bounded as `d` shrinks.
    #[test]
    fn residual_is_locally_lipschitz() {
        use crate::norms::{spacetime_norm, NormSpec};
        let p = PhysicsParams::default();
        let (basis, tg) = setup(16, 16, 0.5);
        let v = SpaceTimeField::from_fn(basis.grid(), tg, manufactured);
        let d = SpaceTimeField::from_fn(basis.grid(), tg, |t: f64, x: [f64; 3]| [0.0, t * (PI * x[1]).cos(), t * t]);
        let r0 = residual(&v, &p, &basis, TimeStencil::Centered).unwrap();
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&s| {
                let pert = v.combine(1.0, &d, s).unwrap();
                let r = residual(&pert, &p, &basis, TimeStencil::Centered).unwrap();
                let diff = r.combine(1.0, &r0, -1.0).unwrap();
                let num = spacetime_norm(&basis, &diff, NormSpec::new(1).unwrap()).unwrap().norm;
                let den = spacetime_norm(&basis, &d.scaled(s), NormSpec::new(2).unwrap()).unwrap().norm;
                num / den
            })
            .collect();
        assert!(ratios.iter().all(|r| r.is_finite() && *r < 10.0), "{ratios:?}");
        assert!((ratios[1] / ratios[2] - 1.0).abs() < 0.05, "{ratios:?}");
    }
}

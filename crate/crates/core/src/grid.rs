//! Tensor-product discretization of the unit box and the time interval.
//!
//! Space is sampled at cell centres `x_i = (i + 1/2) h`, `h = 1/N`, on every
//! axis. On this layout each cosine mode `cos(k pi x)` is exactly
//! Neumann-compatible, so the orthonormal DCT-II diagonalizes the Neumann
//! Laplacian with eigenvalues `lambda_k = sum_j (k_j pi)^2`.
//!
//! Flat node index: `ix + N*iy + N^2*iz` (x fastest).

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Lane, Real};
use crate::{Error, Result};

/// Uniform cell-centred grid on `[0,1]^d`, `d` in {2, 3}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceGrid {
    dim: usize,
    n: usize,
}

impl SpaceGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing<S: Real>(&self) -> S {
        S::one() / S::from_usize(self.n)
    }

    /// Cell-centre coordinate of node `i` along any axis.
    pub fn coord<S: Real>(&self, i: usize) -> S {
        (S::from_usize(i) + c(0.5)) / S::from_usize(self.n)
    }

    /// Distance between consecutive entries along `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    pub fn flat(&self, idx: [usize; 3]) -> usize {
        let mut f = 0;
        for a in (0..self.dim).rev() {
            f = f * self.n + idx[a];
        }
        f
    }

    pub fn multi(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for slot in idx.iter_mut().take(self.dim) {
            *slot = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Node closest to the box centre (ties broken upwards).
    pub fn center_index(&self) -> usize {
        self.flat([self.n / 2; 3])
    }

    /// Cell volume `h^d`, the quadrature weight of every node.
    pub fn cell_volume<S: Real>(&self) -> S {
        self.spacing::<S>().powi(self.dim as u32)
    }
}

/// Uniform grid `t_n = n dt` on `[0, T]`, `n = 0..=M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        if steps < 1 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        Ok(Self { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of intervals `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `M + 1`.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt<S: Real>(&self) -> S {
        S::from_f64(self.t_final) / S::from_usize(self.steps)
    }

    pub fn time<S: Real>(&self, n: usize) -> S {
        S::from_f64(self.t_final) * S::from_usize(n) / S::from_usize(self.steps)
    }

    pub fn require_steps(&self, needed: usize) -> Result<()> {
        if self.steps < needed {
            return Err(Error::TooFewTimeSteps { needed, got: self.steps });
        }
        Ok(())
    }
}

/// Orthonormal DCT-II coefficients of a grid function.
///
/// Coefficient `k` multiplies the basis function `w_k cos(k pi (i+1/2)/N)`
/// per axis with `w_0 = sqrt(1/N)`, `w_k = sqrt(2/N)`. The transform is
/// orthogonal, so `sum |f_i|^2 = sum |c_k|^2`; the grid L² norm over the
/// unit box is `h^{d/2}` times the coefficient ℓ² norm.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSpectrum<T> {
    pub grid: SpaceGrid,
    pub coeffs: Vec<T>,
}

/// Precomputed DCT matrices and Neumann eigenvalues for one grid.
#[derive(Clone, Debug)]
pub struct CosineBasis<S: Real> {
    grid: SpaceGrid,
    /// row k, column i: `w_k cos(k pi (i + 1/2) / N)`
    forward: Vec<S>,
    /// transpose of `forward`
    inverse: Vec<S>,
    eigen: Vec<S>,
}

impl<S: Real> CosineBasis<S> {
    pub fn new(grid: SpaceGrid) -> Self {
        let n = grid.n();
        let table = cos_table::<S>(n);
        let w0 = (S::one() / S::from_usize(n)).sqrt();
        let wk = (c::<S>(2.0) / S::from_usize(n)).sqrt();
        let mut forward = vec![S::zero(); n * n];
        for k in 0..n {
            let w = if k == 0 { w0 } else { wk };
            for i in 0..n {
                forward[k * n + i] = w * table[(k * (2 * i + 1)) % (4 * n)];
            }
        }
        let mut inverse = vec![S::zero(); n * n];
        for k in 0..n {
            for i in 0..n {
                inverse[i * n + k] = forward[k * n + i];
            }
        }
        let axis: Vec<S> = (0..n)
            .map(|k| {
                let kp = S::from_usize(k) * S::PI();
                kp * kp
            })
            .collect();
        let eigen = (0..grid.len())
            .map(|f| {
                let idx = grid.multi(f);
                let mut l = S::zero();
                for &ka in idx.iter().take(grid.dim()) {
                    l += axis[ka];
                }
                l
            })
            .collect();
        Self { grid, forward, inverse, eigen }
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    /// Neumann eigenvalue `lambda_k` for each flat mode index.
    pub fn eigenvalues(&self) -> &[S] {
        &self.eigen
    }

    /// `cos(k pi x_i)` for a single axis, exact from the cosine table.
    pub fn mode_profile(&self, k: usize) -> Vec<S> {
        let n = self.grid.n();
        let table = cos_table::<S>(n);
        (0..n).map(|i| table[(k * (2 * i + 1)) % (4 * n)]).collect()
    }

    /// Forward transform of raw node values.
    pub fn forward_values<T: Lane<S>>(&self, values: &[T]) -> Result<Vec<T>> {
        self.check_len(values.len())?;
        Ok(self.transform(values, true))
    }

    pub fn inverse_values<T: Lane<S>>(&self, coeffs: &[T]) -> Result<Vec<T>> {
        self.check_len(coeffs.len())?;
        Ok(self.transform(coeffs, false))
    }

    pub fn forward<T: Lane<S>>(&self, values: &[T]) -> Result<CosineSpectrum<T>> {
        Ok(CosineSpectrum { grid: self.grid, coeffs: self.forward_values(values)? })
    }

    pub fn inverse<T: Lane<S>>(&self, spec: &CosineSpectrum<T>) -> Result<Vec<T>> {
        if spec.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        self.inverse_values(&spec.coeffs)
    }

    /// Spectral Neumann Laplacian of node values.
    pub fn laplacian_values<T: Lane<S>>(&self, values: &[T]) -> Result<Vec<T>> {
        let mut coeffs = self.forward_values(values)?;
        for (cf, &l) in coeffs.iter_mut().zip(&self.eigen) {
            *cf = cf.scale(-l);
        }
        self.inverse_values(&coeffs)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), got: len });
        }
        Ok(())
    }

    fn transform<T: Lane<S>>(&self, input: &[T], forward: bool) -> Vec<T> {
        let mut a = input.to_vec();
        let mut b = vec![T::zeroed(); a.len()];
        for axis in 0..self.grid.dim() {
            if forward {
                self.forward_axis(&a, &mut b, axis);
            } else {
                self.inverse_axis(&a, &mut b, axis);
            }
            std::mem::swap(&mut a, &mut b);
        }
        a
    }

    /// Visits every grid line along `axis` as `(base index, stride)`.
    fn lines(&self, axis: usize) -> impl Iterator<Item = (usize, usize)> {
        let n = self.grid.n();
        let stride = self.grid.stride(axis);
        let len = self.grid.len();
        (0..len).step_by(stride * n).flat_map(move |outer| (0..stride).map(move |inner| (outer + inner, stride)))
    }

    /// Row `k` of the DCT matrix is even (odd) about the line centre for even
    /// (odd) `k`, so each row only meets the folded sums (differences).
    /// Rows `k >= 1` sum to zero; they act on `v - v_0`, which makes
    /// constant lines map to exact zeros in every mode `k >= 1`.
    fn forward_axis<T: Lane<S>>(&self, input: &[T], output: &mut [T], axis: usize) {
        let n = self.grid.n();
        let h = n / 2;
        let mut line = vec![T::zeroed(); n];
        let mut even = vec![T::zeroed(); h];
        let mut odd = vec![T::zeroed(); h];
        for (base, stride) in self.lines(axis) {
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = input[base + i * stride];
            }
            let f = &self.forward;
            let mut acc = T::zeroed();
            for i in 0..n {
                acc = acc.fma(f[i], line[i]);
            }
            output[base] = acc;
            let v0 = line[0];
            for slot in line.iter_mut() {
                *slot = slot.minus(v0);
            }
            for i in 0..h {
                even[i] = line[i].plus(line[n - 1 - i]);
                odd[i] = line[i].minus(line[n - 1 - i]);
            }
            for k in 1..n {
                let row = &f[k * n..k * n + h];
                let src = if k % 2 == 0 { &even } else { &odd };
                let mut acc = T::zeroed();
                for (&m, &v) in row.iter().zip(src.iter()) {
                    acc = acc.fma(m, v);
                }
                if n % 2 == 1 && k % 2 == 0 {
                    acc = acc.fma(f[k * n + h], line[h]);
                }
                output[base + k * stride] = acc;
            }
        }
    }

    fn inverse_axis<T: Lane<S>>(&self, input: &[T], output: &mut [T], axis: usize) {
        let n = self.grid.n();
        let h = n / 2;
        let mut line = vec![T::zeroed(); n];
        for (base, stride) in self.lines(axis) {
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = input[base + k * stride];
            }
            // row i of the inverse is column i of the forward matrix
            let col = &self.inverse;
            for i in 0..h {
                let row = &col[i * n..(i + 1) * n];
                let mut e = T::zeroed();
                let mut o = T::zeroed();
                for k in (0..n).step_by(2) {
                    e = e.fma(row[k], line[k]);
                }
                for k in (1..n).step_by(2) {
                    o = o.fma(row[k], line[k]);
                }
                output[base + i * stride] = e.plus(o);
                output[base + (n - 1 - i) * stride] = e.minus(o);
            }
            if n % 2 == 1 {
                let row = &col[h * n..(h + 1) * n];
                let mut e = T::zeroed();
                for k in (0..n).step_by(2) {
                    e = e.fma(row[k], line[k]);
                }
                output[base + h * stride] = e;
            }
        }
    }
}

/// `cos(j pi / (2N))` for `j = 0..4N`, built from first-octant values so
/// that symmetric entries agree bit for bit and `cos(pi/2) = 0` exactly.
fn cos_table<S: Real>(n: usize) -> Vec<S> {
    let period = 4 * n;
    let quarter = n; // j = n  <->  angle pi/2
    let base = |j: usize| -> S {
        // j in 0..=n, angle in [0, pi/2]
        if 2 * j <= quarter {
            (S::from_usize(j) * S::PI() / S::from_usize(2 * n)).cos()
        } else {
            (S::from_usize(quarter - j) * S::PI() / S::from_usize(2 * n)).sin()
        }
    };
    (0..period)
        .map(|j| {
            let q = j / quarter;
            let r = j % quarter;
            match q {
                0 => base(r),
                1 => {
                    if r == 0 {
                        S::zero()
                    } else {
                        -base(quarter - r)
                    }
                }
                2 => -base(r),
                _ => {
                    if r == 0 {
                        S::zero()
                    } else {
                        base(quarter - r)
                    }
                }
            }
        })
        .collect()
}

/// Second-order centred differences along `axis` with mirror ghost cells
/// (`f_{-1} = f_0`, `f_N = f_{N-1}`).
pub fn gradient_axis<S: Real, T: Lane<S>>(grid: SpaceGrid, values: &[T], axis: usize) -> Vec<T> {
    let n = grid.n();
    let stride = grid.stride(axis);
    let inv_2h = S::from_usize(n) / c(2.0);
    let mut out = vec![T::zeroed(); values.len()];
    for (f, slot) in out.iter_mut().enumerate() {
        let i = (f / stride) % n;
        let lo = if i == 0 { values[f] } else { values[f - stride] };
        let hi = if i + 1 == n { values[f] } else { values[f + stride] };
        *slot = hi.minus(lo).scale(inv_2h);
    }
    out
}

/// Largest one-sided normal difference `(f_boundary - f_ghost)/h` over all
/// faces, with the same mirror ghosts used by [`gradient_axis`].
pub fn max_normal_derivative<S: Real, T: Lane<S>>(grid: SpaceGrid, values: &[T]) -> S {
    let n = grid.n();
    let inv_h = S::from_usize(n);
    let mut worst = S::zero();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        for (f, &v) in values.iter().enumerate() {
            let i = (f / stride) % n;
            if i == 0 || i + 1 == n {
                let ghost = mirror_ghost(values, f);
                worst = worst.max(v.minus(ghost).norm_sqr().sqrt() * inv_h);
            }
        }
    }
    worst
}

#[inline]
fn mirror_ghost<T: Copy>(values: &[T], boundary: usize) -> T {
    values[boundary]
}

/// Finite-difference weights (Fornberg) for derivative `order` at `x0`.
pub fn fd_weights<S: Real>(x0: S, nodes: &[S], order: usize) -> Vec<S> {
    let np = nodes.len();
    let mut w = vec![vec![S::zero(); order + 1]; np];
    let mut c1 = S::one();
    let mut c4 = nodes[0] - x0;
    w[0][0] = S::one();
    for i in 1..np {
        let mn = i.min(order);
        let mut c2 = S::one();
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    w[i][k] = c1 * (S::from_usize(k) * w[i - 1][k - 1] - c5 * w[i - 1][k]) / c2;
                }
                w[i][0] = -c1 * c5 * w[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                w[j][k] = (c4 * w[j][k] - S::from_usize(k) * w[j][k - 1]) / c3;
            }
            w[j][0] = c4 * w[j][0] / c3;
        }
        c1 = c2;
    }
    w.into_iter().map(|row| row[order]).collect()
}

/// Stencil of one output node: first input node and weights (already
/// scaled by `dt^-order`).
#[derive(Clone, Debug)]
pub struct NodeStencil<S> {
    pub start: usize,
    pub weights: Vec<S>,
}

/// Second-order time-derivative stencils: centred in the interior, one-sided
/// with `order + 2` points where the centred stencil does not fit.
pub fn time_stencils<S: Real>(tgrid: &TimeGrid, order: usize) -> Result<Vec<NodeStencil<S>>> {
    if order == 0 {
        return Ok((0..tgrid.nodes())
            .map(|n| NodeStencil { start: n, weights: vec![S::one()] })
            .collect());
    }
    tgrid.require_steps(2 * order + 1)?;
    let m = tgrid.steps();
    let half = order.div_ceil(2);
    let scale = S::one() / tgrid.dt::<S>().powi(order as u32);
    let weights_for = |start: usize, len: usize, at: usize| -> Vec<S> {
        let nodes: Vec<S> = (start..start + len).map(S::from_usize).collect();
        fd_weights(S::from_usize(at), &nodes, order)
            .into_iter()
            .map(|w| w * scale)
            .collect()
    };
    let one_sided = order + 2;
    Ok((0..=m)
        .map(|n| {
            if n >= half && n + half <= m {
                NodeStencil { start: n - half, weights: weights_for(n - half, 2 * half + 1, n) }
            } else if n < half {
                NodeStencil { start: 0, weights: weights_for(0, one_sided, n) }
            } else {
                let start = m + 1 - one_sided;
                NodeStencil { start, weights: weights_for(start, one_sided, n) }
            }
        })
        .collect())
}

/// Applies precomputed stencils to a sequence of time slices. Stencils with
/// more than one weight must be derivative stencils (weights summing to 0).
pub fn apply_stencils<S: Real, T: Lane<S>>(stencils: &[NodeStencil<S>], slices: &[Vec<T>]) -> Vec<Vec<T>> {
    stencils
        .iter()
        .map(|st| {
            let len = slices[st.start].len();
            let mut out = vec![T::zeroed(); len];
            if st.weights.len() == 1 {
                for (o, &v) in out.iter_mut().zip(&slices[st.start]) {
                    *o = v.scale(st.weights[0]);
                }
                return out;
            }
            // derivative weights sum to zero: difference against the first
            // slice so that time-constant data gives exact zeros
            let anchor = &slices[st.start];
            for (j, &w) in st.weights.iter().enumerate().skip(1) {
                if w == S::zero() {
                    continue;
                }
                for ((o, &v), &a) in out.iter_mut().zip(&slices[st.start + j]).zip(anchor) {
                    *o = o.fma(w, v.minus(a));
                }
            }
            out
        })
        .collect()
}

/// `order`-th time derivative of a sequence of slices (see [`time_stencils`]).
pub fn time_derivative_slices<S: Real, T: Lane<S>>(
    tgrid: &TimeGrid,
    slices: &[Vec<T>],
    order: usize,
) -> Result<Vec<Vec<T>>> {
    if slices.len() != tgrid.nodes() {
        return Err(Error::DimensionMismatch { expected: tgrid.nodes(), got: slices.len() });
    }
    let st = time_stencils::<S>(tgrid, order)?;
    Ok(apply_stencils(&st, slices))
}

/// Backward time stencil used by the equation residual and the matching
/// heat-solver recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackwardStencil {
    /// `(v^n - v^{n-1}) / dt`
    Bdf1,
    /// `(3v^n - 4v^{n-1} + v^{n-2}) / (2dt)` for `n >= 2`, BDF1 at `n = 1`
    Bdf2,
}

impl BackwardStencil {
    /// Stencils for nodes `0..=M`; node 0 uses the forward one-sided
    /// second-order formula.
    pub fn stencils<S: Real>(self, tgrid: &TimeGrid) -> Result<Vec<NodeStencil<S>>> {
        tgrid.require_steps(2)?;
        let inv_dt = S::one() / tgrid.dt::<S>();
        let mut out = Vec::with_capacity(tgrid.nodes());
        out.push(NodeStencil {
            start: 0,
            weights: vec![c::<S>(-1.5) * inv_dt, c::<S>(2.0) * inv_dt, c::<S>(-0.5) * inv_dt],
        });
        for n in 1..=tgrid.steps() {
            let st = match self {
                BackwardStencil::Bdf2 if n >= 2 => NodeStencil {
                    start: n - 2,
                    weights: vec![c::<S>(0.5) * inv_dt, c::<S>(-2.0) * inv_dt, c::<S>(1.5) * inv_dt],
                },
                _ => NodeStencil { start: n - 1, weights: vec![-inv_dt, inv_dt] },
            };
            out.push(st);
        }
        Ok(out)
    }

    pub fn order(self) -> usize {
        match self {
            BackwardStencil::Bdf1 => 1,
            BackwardStencil::Bdf2 => 2,
        }
    }
}

//! Grids, quadrature and finite-difference assembly for the anisotropic
//! elliptic operator `E(u) = u_xx + (B^2+1) u_zz - 2B u_xz` and the 1D
//! confined trait operators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GrowthProfile;

/// Uniform 1D grid with an odd number of nodes, so the midpoint of a
/// symmetric interval is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "grid range [{lo}, {hi}] is empty"
            )));
        }
        if n < 3 || n % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "node count {n} must be odd and at least 3"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    /// Symmetric grid on `(-half, half)`.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        if !(half > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half-width {half} must be positive"
            )));
        }
        Self::new(-half, half, n)
    }

    /// Symmetric grid with spacing as close as possible to `h_target`.
    pub fn symmetric_with_spacing(half: f64, h_target: f64) -> Result<Self> {
        let intervals = ((2.0 * half / h_target).ceil() as usize).max(2);
        let intervals = if intervals % 2 == 0 { intervals } else { intervals + 1 };
        Self::symmetric(half, intervals + 1)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    pub fn is_symmetric(&self) -> bool {
        (self.lo + self.hi).abs() <= 1e-12 * (self.hi - self.lo)
    }

    /// Index of the center node. Only meaningful on symmetric grids, where
    /// the returned node is exactly 0.
    pub fn center_index(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Index of the grid node nearest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.lo) / self.h()).round();
        (raw.max(0.0) as usize).min(self.n - 1)
    }

    /// Fractional position of `x` for linear interpolation: `(i, t)` with
    /// `x = node(i) * (1-t) + node(i+1) * t`, clamped to the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.lo) / self.h();
        if s <= 0.0 {
            return (0, 0.0);
        }
        let max = (self.n - 2) as f64;
        if s >= (self.n - 1) as f64 {
            return (self.n - 2, 1.0);
        }
        let i = s.floor().min(max) as usize;
        (i, s - i as f64)
    }
}

/// Tensor grid on the box `(-a, a) x (-b, b)`; both node counts odd so the
/// origin is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub z: Grid1D,
}

impl Grid2D {
    pub fn new(x: Grid1D, z: Grid1D) -> Self {
        Self { x, z }
    }

    /// Box `(-a, a) x (-b, b)` with `nx` by `nz` nodes.
    pub fn boxed(a: f64, b: f64, nx: usize, nz: usize) -> Result<Self> {
        Ok(Self {
            x: Grid1D::symmetric(a, nx)?,
            z: Grid1D::symmetric(b, nz)?,
        })
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nz() + j
    }

    pub fn center(&self) -> (usize, usize) {
        (self.x.center_index(), self.z.center_index())
    }
}

/// Scalar field sampled on a [`Grid2D`], stored x-major (z contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            data: vec![0.0; grid.nx() * grid.nz()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.nx() * grid.nz());
        for i in 0..grid.nx() {
            let x = grid.x.node(i);
            for j in 0..grid.nz() {
                data.push(f(x, grid.z.node(j)));
            }
        }
        Self { grid, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.data[k] = v;
    }

    /// The z-slice at x-index `i`.
    pub fn slice(&self, i: usize) -> &[f64] {
        let nz = self.grid.nz();
        &self.data[i * nz..(i + 1) * nz]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let nz = self.grid.nz();
        &mut self.data[i * nz..(i + 1) * nz]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Bilinear interpolation at `(x, z)`; points outside the grid are
    /// clamped to the boundary and flagged through the return value.
    pub fn interp_clamped(&self, x: f64, z: f64) -> (f64, bool) {
        let clamped = x < self.grid.x.lo()
            || x > self.grid.x.hi()
            || z < self.grid.z.lo()
            || z > self.grid.z.hi();
        let (i, s) = self.grid.x.locate(x);
        let (j, t) = self.grid.z.locate(z);
        let v00 = self.get(i, j);
        let v01 = self.get(i, j + 1);
        let v10 = self.get(i + 1, j);
        let v11 = self.get(i + 1, j + 1);
        let v = (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11);
        (v, clamped)
    }
}

/// Trapezoid quadrature weights for a uniform grid; the weights sum to
/// `hi - lo` up to rounding.
pub fn quadrature_weights(g: &Grid1D) -> Vec<f64> {
    let h = g.h();
    let mut w = vec![h; g.len()];
    w[0] = 0.5 * h;
    let last = g.len() - 1;
    w[last] = 0.5 * h;
    w
}

/// Symmetric tridiagonal matrix over the interior nodes of a 1D grid, after
/// eliminating the homogeneous Dirichlet rows.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    /// Main diagonal, one entry per interior node.
    pub diag: Vec<f64>,
    /// Off diagonal (sub = super), `diag.len() - 1` entries.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
    }

    /// Infinity norm of the matrix.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0f64, f64::max)
    }
}

/// Assemble the interior matrix of `-(B^2+1) d_zz - (r(z) + nu z^2)` on `g`
/// with homogeneous Dirichlet conditions, as a symmetric tridiagonal matrix.
///
/// Requires `nu < delta`: beyond the confinement constant the potential no
/// longer dominates and the spectrum is unbounded below as the box grows.
pub fn assemble_1d(
    g: &Grid1D,
    growth: &GrowthProfile,
    b_slope: f64,
    nu: f64,
) -> Result<SymTridiag> {
    if nu < 0.0 {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be >= 0")));
    }
    if nu > 0.0 && nu >= growth.delta() {
        return Err(Error::ConfinementLost {
            nu,
            delta: growth.delta(),
        });
    }
    let h = g.h();
    let diff = (b_slope * b_slope + 1.0) / (h * h);
    let n_int = g.len() - 2;
    let mut diag = Vec::with_capacity(n_int);
    for i in 1..g.len() - 1 {
        let z = g.node(i);
        diag.push(2.0 * diff - (growth.eval_r(z)? + nu * z * z));
    }
    Ok(SymTridiag {
        diag,
        off: vec![-diff; n_int - 1],
    })
}

/// Finite-difference form of `-E(u) - c u_x + q(x,z) u` on a [`Grid2D`]:
/// centered second differences, the 4-point centered stencil for the cross
/// term, centered advection, plus an arbitrary stored diagonal `q`.
#[derive(Debug, Clone)]
pub struct BoxOperator {
    pub grid: Grid2D,
    pub b_slope: f64,
    pub c: f64,
    /// Diagonal contribution per node (zero where unused).
    pub diag: Vec<f64>,
}

/// The nine stencil coefficients of `-E - c d_x`, excluding the diagonal
/// potential. Offsets are in (x, z) index space.
#[derive(Debug, Clone, Copy)]
pub struct StencilCoeffs {
    pub center: f64,
    pub xp: f64,
    pub xm: f64,
    pub zp: f64,
    pub zm: f64,
    /// (i+1, j+1)
    pub pp: f64,
    /// (i+1, j-1)
    pub pm: f64,
    /// (i-1, j+1)
    pub mp: f64,
    /// (i-1, j-1)
    pub mm: f64,
}

impl StencilCoeffs {
    pub fn new(hx: f64, hz: f64, b_slope: f64, c: f64) -> Self {
        let bb = b_slope * b_slope + 1.0;
        let cross = b_slope / (2.0 * hx * hz);
        Self {
            center: 2.0 / (hx * hx) + 2.0 * bb / (hz * hz),
            xp: -1.0 / (hx * hx) - c / (2.0 * hx),
            xm: -1.0 / (hx * hx) + c / (2.0 * hx),
            zp: -bb / (hz * hz),
            zm: -bb / (hz * hz),
            pp: cross,
            pm: -cross,
            mp: -cross,
            mm: cross,
        }
    }
}

impl BoxOperator {
    /// Build the operator; fails if the cell Péclet number `|c| hx / 2`
    /// reaches 1, where centered advection loses stability.
    pub fn new(grid: Grid2D, b_slope: f64, c: f64, diag: Vec<f64>) -> Result<Self> {
        let hx = grid.x.h();
        if c.abs() * hx / 2.0 >= 1.0 {
            return Err(Error::GridTooCoarse(format!(
                "cell Peclet |c| hx / 2 = {:.3} >= 1 (c = {c}, hx = {hx}); refine the x grid",
                c.abs() * hx / 2.0
            )));
        }
        assert_eq!(diag.len(), grid.nx() * grid.nz());
        Ok(Self {
            grid,
            b_slope,
            c,
            diag,
        })
    }

    pub fn coeffs(&self) -> StencilCoeffs {
        StencilCoeffs::new(self.grid.x.h(), self.grid.z.h(), self.b_slope, self.c)
    }

    /// Apply `-E(u) - c u_x + diag * u` at every interior node; boundary
    /// entries of `out` are set to zero.
    pub fn apply(&self, u: &Field2D, out: &mut Field2D) {
        let s = self.coeffs();
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        out.data.fill(0.0);
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let k = i * nz + j;
                out.data[k] = s.center * u.data[k]
                    + s.xp * u.data[k + nz]
                    + s.xm * u.data[k - nz]
                    + s.zp * u.data[k + 1]
                    + s.zm * u.data[k - 1]
                    + s.pp * u.data[k + nz + 1]
                    + s.pm * u.data[k + nz - 1]
                    + s.mp * u.data[k - nz + 1]
                    + s.mm * u.data[k - nz - 1]
                    + self.diag[k] * u.data[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GrowthProfile;
    use approx::assert_relative_eq;

    #[test]
    fn grid_rejects_even_or_tiny_node_counts() {
        assert!(Grid1D::new(0.0, 1.0, 4).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(1.0, 0.0, 5).is_err());
        assert!(Grid1D::new(0.0, 1.0, 5).is_ok());
    }

    #[test]
    fn symmetric_grid_has_zero_center_node() {
        let g = Grid1D::symmetric(3.0, 7).unwrap();
        assert_eq!(g.node(g.center_index()), 0.0);
    }

    #[test]
    fn trapezoid_weights_on_three_nodes() {
        let g = Grid1D::new(0.0, 2.0, 3).unwrap();
        assert_eq!(quadrature_weights(&g), vec![0.5, 1.0, 0.5]);
    }

    #[test]
    fn trapezoid_integrates_constants_exactly() {
        let g = Grid1D::new(-1.5, 4.0, 101).unwrap();
        let sum: f64 = quadrature_weights(&g).iter().sum();
        assert_relative_eq!(sum, 5.5, max_relative = 1e-14);
    }

    #[test]
    fn trapezoid_gaussian_matches_sqrt_pi() {
        // exp(-z^2) over (-8, 8): trapezoid is spectrally accurate here
        let g = Grid1D::symmetric(8.0, 1601).unwrap();
        let w = quadrature_weights(&g);
        let integral: f64 = g
            .nodes()
            .zip(&w)
            .map(|(z, wi)| wi * (-z * z).exp())
            .sum();
        assert!((integral - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn assemble_1d_is_laplacian_for_flat_growth() {
        // r = 0, B = 0, h = 1: diagonal 2, off-diagonal -1
        let g = Grid1D::new(0.0, 4.0, 5).unwrap();
        let growth = GrowthProfile::tabulated(vec![(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)], 0.1)
            .unwrap();
        let m = assemble_1d(&g, &growth, 0.0, 0.0).unwrap();
        assert_eq!(m.diag, vec![2.0, 2.0, 2.0]);
        assert_eq!(m.off, vec![-1.0, -1.0]);
    }

    #[test]
    fn assemble_1d_scales_diffusion_with_slope() {
        let g = Grid1D::new(0.0, 4.0, 5).unwrap();
        let growth = GrowthProfile::tabulated(vec![(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)], 0.1)
            .unwrap();
        let m = assemble_1d(&g, &growth, 1.0, 0.0).unwrap();
        assert_eq!(m.diag, vec![4.0, 4.0, 4.0]);
        assert_eq!(m.off, vec![-2.0, -2.0]);
    }

    #[test]
    fn assemble_1d_potential_rows_match_nodes() {
        let growth = GrowthProfile::quadratic(1.0, 0.25, 0.25).unwrap();
        let nu = growth.delta() / 3.0;
        let g = Grid1D::symmetric(4.0, 9).unwrap();
        let m = assemble_1d(&g, &growth, 0.0, nu).unwrap();
        let h = g.h();
        for (row, i) in (1..g.len() - 1).enumerate() {
            let z = g.node(i);
            let expected = 2.0 / (h * h) - ((1.0 - 0.25 * z * z) + nu * z * z);
            assert_relative_eq!(m.diag[row], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn assemble_1d_rejects_nu_at_delta() {
        let growth = GrowthProfile::quadratic(1.0, 0.25, 0.25).unwrap();
        let g = Grid1D::symmetric(4.0, 9).unwrap();
        assert!(matches!(
            assemble_1d(&g, &growth, 0.0, 0.3),
            Err(Error::ConfinementLost { .. })
        ));
    }

    #[test]
    fn box_operator_exact_on_bilinear() {
        // u = x z has E(u) = -2B exactly, and the stencil is exact on it
        let grid = Grid2D::boxed(1.0, 1.0, 9, 9).unwrap();
        let b = 0.7;
        let u = Field2D::from_fn(grid, |x, z| x * z);
        let op = BoxOperator::new(grid, b, 0.0, vec![0.0; 81]).unwrap();
        let mut out = Field2D::zeros(grid);
        op.apply(&u, &mut out);
        for i in 1..8 {
            for j in 1..8 {
                assert_relative_eq!(out.get(i, j), 2.0 * b, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn box_operator_exact_on_x_squared() {
        let grid = Grid2D::boxed(1.0, 1.0, 9, 9).unwrap();
        let u = Field2D::from_fn(grid, |x, _| x * x);
        let op = BoxOperator::new(grid, 1.0, 0.0, vec![0.0; 81]).unwrap();
        let mut out = Field2D::zeros(grid);
        op.apply(&u, &mut out);
        for i in 1..8 {
            for j in 1..8 {
                assert_relative_eq!(out.get(i, j), -2.0, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn box_operator_annihilates_constants() {
        // interior rows of the pure E + advection part sum to zero
        let grid = Grid2D::boxed(1.0, 1.0, 9, 9).unwrap();
        let u = Field2D::from_fn(grid, |_, _| 1.0);
        let op = BoxOperator::new(grid, 1.3, 0.4, vec![0.0; 81]).unwrap();
        let mut out = Field2D::zeros(grid);
        op.apply(&u, &mut out);
        // only rows untouched by the boundary ring are exact zero sums
        for i in 2..7 {
            for j in 2..7 {
                assert!(out.get(i, j).abs() < 1e-12 * op.coeffs().center);
            }
        }
    }

    #[test]
    fn box_operator_second_order_on_smooth_field() {
        // Richardson order study on u = sin(x) sin(z), B = 1
        let b = 1.0;
        let exact = |x: f64, z: f64| {
            // -E(u) = (1 + (B^2+1)) sin sin + 2B cos cos
            (1.0 + (b * b + 1.0)) * x.sin() * z.sin() + 2.0 * b * x.cos() * z.cos()
        };
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let grid = Grid2D::boxed(1.0, 1.0, n, n).unwrap();
            let u = Field2D::from_fn(grid, |x, z| x.sin() * z.sin());
            let op = BoxOperator::new(grid, b, 0.0, vec![0.0; n * n]).unwrap();
            let mut out = Field2D::zeros(grid);
            op.apply(&u, &mut out);
            let mut err = 0.0f64;
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let x = grid.x.node(i);
                    let z = grid.z.node(j);
                    err = err.max((out.get(i, j) - exact(x, z)).abs());
                }
            }
            errs.push(err);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 >= 1.9, "observed order {order1}");
        assert!(order2 >= 1.9, "observed order {order2}");
    }

    #[test]
    fn box_operator_peclet_guard() {
        let grid = Grid2D::boxed(10.0, 1.0, 11, 9).unwrap();
        // hx = 2, c = 1.2 -> Peclet 1.2 >= 1
        assert!(matches!(
            BoxOperator::new(grid, 0.0, 1.2, vec![0.0; 99]),
            Err(Error::GridTooCoarse(_))
        ));
    }
}

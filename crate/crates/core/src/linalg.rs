//! Internal solvers: symmetric tridiagonal eigenpairs via Sturm bisection
//! plus inverse iteration, a pivoted tridiagonal solve, and a block
//! tridiagonal LU for the 2D box operators (dense diagonal blocks, banded
//! couplings between adjacent x-slices).

use nalgebra::{DMatrix, DVector};

use crate::discretize::SymTridiag;
use crate::error::{Error, Result};

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `lambda`, counted through the signs of the Sturm sequence pivots.
pub fn sturm_count(diag: &[f64], off: &[f64], lambda: f64) -> usize {
    let n = diag.len();
    if n == 0 {
        return 0;
    }
    let guard = 1e-300;
    let mut count = 0usize;
    let mut q = diag[0] - lambda;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < guard {
            if q >= 0.0 {
                guard
            } else {
                -guard
            }
        } else {
            q
        };
        q = (diag[i] - lambda) - off[i - 1] * off[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue via bisection on the Sturm count, to machine
/// precision relative to the Gershgorin bounds.
pub fn smallest_eigenvalue(m: &SymTridiag) -> f64 {
    let n = m.n();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let left = if i > 0 { m.off[i - 1].abs() } else { 0.0 };
        let right = if i < n - 1 { m.off[i].abs() } else { 0.0 };
        lo = lo.min(m.diag[i] - left - right);
        hi = hi.max(m.diag[i] + left + right);
    }
    let (mut a, mut b) = (lo - 1.0, hi + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) <= 2.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
        if sturm_count(&m.diag, &m.off, mid) < 1 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Solve a general tridiagonal system with partial pivoting. Bands are
/// full-length with `sub[0]` and `sup[n-1]` unused. Pivoting introduces one
/// extra superdiagonal, handled in-place.
pub fn solve_tridiag_pivoted(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = sup.to_vec(); // first superdiagonal
    let mut f = vec![0.0; n]; // fill-in second superdiagonal
    let mut x = rhs.to_vec();
    let low = sub;

    for k in 0..n - 1 {
        // row k: (d[k], e[k], f[k]); row k+1: (l, d[k+1], e[k+1])
        let mut l = low[k + 1];
        if l.abs() > d[k].abs() {
            let (rk_d, rk_e) = (d[k], e[k]);
            d[k] = l;
            e[k] = d[k + 1];
            f[k] = if k + 2 < n { e[k + 1] } else { 0.0 };
            l = rk_d;
            d[k + 1] = rk_e;
            if k + 1 < n - 1 {
                e[k + 1] = 0.0;
            }
            x.swap(k, k + 1);
        }
        if d[k] == 0.0 {
            return Err(Error::SolverFailure(
                "singular tridiagonal matrix in pivoted solve".into(),
            ));
        }
        let mult = l / d[k];
        d[k + 1] -= mult * e[k];
        if k + 1 < n - 1 {
            e[k + 1] -= mult * f[k];
        }
        x[k + 1] -= mult * x[k];
    }
    if d[n - 1] == 0.0 {
        return Err(Error::SolverFailure(
            "singular tridiagonal matrix in pivoted solve".into(),
        ));
    }
    // back substitution with two superdiagonals
    x[n - 1] /= d[n - 1];
    if n >= 2 {
        x[n - 2] = (x[n - 2] - e[n - 2] * x[n - 1]) / d[n - 2];
    }
    for k in (0..n.saturating_sub(2)).rev() {
        x[k] = (x[k] - e[k] * x[k + 1] - f[k] * x[k + 2]) / d[k];
    }
    Ok(x)
}

/// Smallest eigenpair of a symmetric tridiagonal matrix: Sturm bisection for
/// the eigenvalue, inverse iteration for the eigenvector. The vector is
/// normalized to unit max and sign-fixed positive at its peak.
pub fn smallest_eigenpair(m: &SymTridiag) -> Result<(f64, Vec<f64>)> {
    let n = m.n();
    let lambda = smallest_eigenvalue(m);
    // shift slightly off the eigenvalue so the factorization stays usable
    let shift = lambda - 1e-10 * m.norm_inf().max(1.0) * f64::EPSILON.sqrt();
    let sub: Vec<f64> = std::iter::once(0.0)
        .chain(m.off.iter().copied())
        .collect();
    let sup: Vec<f64> = m.off.iter().copied().chain(std::iter::once(0.0)).collect();
    let diag: Vec<f64> = m.diag.iter().map(|d| d - shift).collect();

    let mut v = vec![1.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut mv = vec![0.0; n];
    for iter in 0..12 {
        let w = solve_tridiag_pivoted(&sub, &diag, &sup, &v)?;
        let norm = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SolverFailure(
                "inverse iteration produced a degenerate vector".into(),
            ));
        }
        v = w.iter().map(|x| x / norm).collect();
        // track the measured residual and keep the best iterate; near the
        // exact shift the residual bottoms out at the rounding floor
        m.matvec(&v, &mut mv);
        let resid = mv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0f64, f64::max);
        match &best {
            Some((r, _)) if *r <= resid => {
                if iter >= 3 {
                    break;
                }
            }
            _ => best = Some((resid, v.clone())),
        }
    }
    let mut v = best
        .map(|(_, v)| v)
        .ok_or_else(|| Error::SolverFailure("inverse iteration produced no iterate".into()))?;
    // sign-fix so the dominant component is positive
    let (mut peak, mut peak_abs) = (0usize, 0.0f64);
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > peak_abs {
            peak_abs = x.abs();
            peak = i;
        }
    }
    if v[peak] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    Ok((lambda, v))
}

/// Square block with at most three diagonals: the coupling between adjacent
/// x-slices of the 2D stencil.
#[derive(Debug, Clone)]
pub struct Band3 {
    /// entry (j, j-1); index 0 unused
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// entry (j, j+1); last index unused
    pub sup: Vec<f64>,
}

impl Band3 {
    pub fn zeros(m: usize) -> Self {
        Self {
            sub: vec![0.0; m],
            diag: vec![0.0; m],
            sup: vec![0.0; m],
        }
    }

    pub fn filled(m: usize, sub: f64, diag: f64, sup: f64) -> Self {
        let mut b = Self {
            sub: vec![sub; m],
            diag: vec![diag; m],
            sup: vec![sup; m],
        };
        b.sub[0] = 0.0;
        b.sup[m - 1] = 0.0;
        b
    }

    /// `y -= self * x`
    pub fn sub_mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let m = self.diag.len();
        for j in 0..m {
            let mut s = self.diag[j] * x[j];
            if j > 0 {
                s += self.sub[j] * x[j - 1];
            }
            if j + 1 < m {
                s += self.sup[j] * x[j + 1];
            }
            y[j] -= s;
        }
    }

    /// `c -= self * t` for a dense matrix `t` (column-major).
    pub fn sub_mul_dense(&self, t: &DMatrix<f64>, c: &mut DMatrix<f64>) {
        let m = self.diag.len();
        for col in 0..t.ncols() {
            let tc = t.column(col);
            let mut cc = c.column_mut(col);
            for j in 0..m {
                let mut s = self.diag[j] * tc[j];
                if j > 0 {
                    s += self.sub[j] * tc[j - 1];
                }
                if j + 1 < m {
                    s += self.sup[j] * tc[j + 1];
                }
                cc[j] -= s;
            }
        }
    }
}

/// Block tridiagonal matrix with dense diagonal blocks and banded
/// off-diagonal couplings.
pub struct BlockTridiag {
    /// Dense diagonal blocks, one per interior x-slice.
    pub diag: Vec<DMatrix<f64>>,
    /// `sub[i]` couples slice i to slice i-1 (first entry unused).
    pub sub: Vec<Band3>,
    /// `sup[i]` couples slice i to slice i+1 (last entry unused).
    pub sup: Vec<Band3>,
}

/// Factored form ready for repeated solves.
pub struct BlockTridiagLU {
    lus: Vec<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    sub: Vec<Band3>,
    sup: Vec<Band3>,
    m: usize,
}

impl BlockTridiag {
    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    /// Block Thomas factorization: `S_1 = D_1`,
    /// `S_i = D_i - L_i S_{i-1}^{-1} U_{i-1}`.
    pub fn factor(self) -> Result<BlockTridiagLU> {
        let n = self.diag.len();
        let m = self.diag[0].nrows();
        let mut lus: Vec<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> =
            Vec::with_capacity(n);
        let mut blocks = self.diag;
        for i in 0..n {
            if i > 0 {
                // T = S_{i-1}^{-1} U_{i-1}, then S_i -= L_i T
                let mut t = band_to_dense(&self.sup[i - 1]);
                if !lus[i - 1].solve_mut(&mut t) {
                    return Err(Error::SolverFailure(format!(
                        "block factorization broke down at slice {i}"
                    )));
                }
                let (left, right) = blocks.split_at_mut(i);
                let _ = left;
                self.sub[i].sub_mul_dense(&t, &mut right[0]);
            }
            let s = std::mem::replace(&mut blocks[i], DMatrix::zeros(0, 0));
            lus.push(nalgebra::linalg::LU::new(s));
        }
        Ok(BlockTridiagLU {
            lus,
            sub: self.sub,
            sup: self.sup,
            m,
        })
    }
}

fn band_to_dense(b: &Band3) -> DMatrix<f64> {
    let m = b.diag.len();
    let mut d = DMatrix::zeros(m, m);
    for j in 0..m {
        d[(j, j)] = b.diag[j];
        if j > 0 {
            d[(j, j - 1)] = b.sub[j];
        }
        if j + 1 < m {
            d[(j, j + 1)] = b.sup[j];
        }
    }
    d
}

impl BlockTridiagLU {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Solve in place; `rhs` holds the interior unknowns slice by slice.
    pub fn solve(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.lus.len();
        let m = self.m;
        assert_eq!(rhs.len(), n * m);

        // forward: g_i = b_i - L_i S_{i-1}^{-1} g_{i-1}
        let mut y_prev = DVector::zeros(m);
        for i in 0..n {
            if i > 0 {
                let g_prev = DVector::from_column_slice(&rhs[(i - 1) * m..i * m]);
                y_prev.copy_from(&g_prev);
                if !self.lus[i - 1].solve_mut(&mut y_prev) {
                    return Err(Error::SolverFailure("singular block in solve".into()));
                }
                let (_, tail) = rhs.split_at_mut(i * m);
                self.sub[i].sub_mul_vec(y_prev.as_slice(), &mut tail[..m]);
            }
        }
        // backward: x_n = S_n^{-1} g_n; x_i = S_i^{-1} (g_i - U_i x_{i+1})
        for i in (0..n).rev() {
            if i + 1 < n {
                let x_next = DVector::from_column_slice(&rhs[(i + 1) * m..(i + 2) * m]);
                let (head, _) = rhs.split_at_mut((i + 1) * m);
                self.sup[i].sub_mul_vec(x_next.as_slice(), &mut head[i * m..]);
            }
            let mut xi = DVector::from_column_slice(&rhs[i * m..(i + 1) * m]);
            if !self.lus[i].solve_mut(&mut xi) {
                return Err(Error::SolverFailure("singular block in solve".into()));
            }
            rhs[i * m..(i + 1) * m].copy_from_slice(xi.as_slice());
        }
        Ok(())
    }
}

//! Shared per-problem data for the wave solvers: line eigenpairs, the
//! boundary eigenfunction, kernel quadrature, bound constants and the
//! assembly/solve helpers built on the block tridiagonal factorization.

use nalgebra::DMatrix;

use crate::discretize::{quadrature_weights, BoxOperator, Field2D, Grid2D};
use crate::eigen::{self, EigenPair, GammaLine, LineConfig, MinimalSpeed};
use crate::error::{Error, Result};
use crate::linalg::BlockTridiag;
use crate::model::{Kernel, ModelParams};

/// Nonlocal competition operator on a z-grid: trapezoid-weighted
/// contraction against the kernel.
#[derive(Debug, Clone)]
pub enum NonlocalOp {
    Constant { k0: f64 },
    Dense { k: DMatrix<f64> },
}

impl NonlocalOp {
    /// `out[j] = sum_j' k(z_j, z_j') w[j'] u[j']`
    pub fn apply_slice(&self, w: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            NonlocalOp::Constant { k0 } => {
                let mass: f64 = w.iter().zip(u).map(|(wi, ui)| wi * ui).sum();
                out.fill(k0 * mass);
            }
            NonlocalOp::Dense { k } => {
                let n = u.len();
                for j in 0..n {
                    let mut s = 0.0;
                    for jp in 0..n {
                        s += k[(j, jp)] * w[jp] * u[jp];
                    }
                    out[j] = s;
                }
            }
        }
    }

    pub fn kernel_at(&self, j: usize, jp: usize) -> f64 {
        match self {
            NonlocalOp::Constant { k0 } => *k0,
            NonlocalOp::Dense { k } => k[(j, jp)],
        }
    }
}

/// Everything the wave solvers need about one `(params, grid)` pair.
pub struct WaveContext {
    pub params: ModelParams,
    pub grid: Grid2D,
    /// Left-edge Dirichlet data: interval eigenfunction at `nu = delta/3`.
    pub gamma_boundary: EigenPair,
    /// Line eigenvalue at `nu = 0` and its eigenfunction.
    pub lambda0: f64,
    pub gamma0: GammaLine,
    /// Minimal speed (invading regime only).
    pub c_star: Option<f64>,
    /// Line pair at `nu = 2 delta / 3`, dominating the tails.
    pub lambda_two_thirds: f64,
    pub gamma_two_thirds: GammaLine,
    /// Fitted domination constant `Gamma_b^{d/3} <= c_bar Gamma_inf^{2d/3}`.
    pub c_bar: f64,
    /// Mass bound contribution `c_bar * integral of Gamma_inf^{2d/3}`.
    pub mass_bar: f64,
    pub max_r: f64,
    pub weights_z: Vec<f64>,
    pub nonlocal: NonlocalOp,
    /// `r(z_j)` per z node.
    pub r_z: Vec<f64>,
}

impl WaveContext {
    pub fn new(p: &ModelParams, grid: Grid2D, line_cfg: &LineConfig) -> Result<Self> {
        let delta = p.delta();
        let gamma_boundary = eigen::solve_interval_on(p, delta / 3.0, &grid.z)?;
        let (lambda0, gamma0) = eigen::line_pair(p, 0.0, line_cfg)?;
        let (lambda_two_thirds, gamma_two_thirds) =
            eigen::line_pair(p, 2.0 * delta / 3.0, line_cfg)?;
        let c_star = match eigen::minimal_speed(lambda0, p.b_slope) {
            MinimalSpeed::Speed(c) => Some(c),
            MinimalSpeed::Extinct => None,
        };

        let mut c_bar = 0.0f64;
        for (j, z) in grid.z.nodes().enumerate() {
            let denom = gamma_two_thirds.eval(z);
            if denom > 1e-280 {
                c_bar = c_bar.max(gamma_boundary.gamma[j] / denom);
            }
        }
        let mass_bar = c_bar * gamma_two_thirds.integral();

        let weights_z = quadrature_weights(&grid.z);
        let nonlocal = match &p.kernel {
            Kernel::Constant(k0) => NonlocalOp::Constant { k0: *k0 },
            kernel => {
                let nz = grid.nz();
                let mut k = DMatrix::zeros(nz, nz);
                for j in 0..nz {
                    for jp in 0..nz {
                        k[(j, jp)] = kernel.eval(grid.z.node(j), grid.z.node(jp));
                    }
                }
                NonlocalOp::Dense { k }
            }
        };
        let r_z = grid
            .z
            .nodes()
            .map(|z| p.growth.eval_r(z))
            .collect::<Result<Vec<f64>>>()?;

        Ok(Self {
            params: p.clone(),
            grid,
            gamma_boundary,
            lambda0,
            gamma0,
            c_star,
            lambda_two_thirds,
            gamma_two_thirds,
            c_bar,
            mass_bar,
            max_r: p.growth.max_r(),
            weights_z,
            nonlocal,
            r_z,
        })
    }

    /// Sup bound of the local problem: `max(2 max r / gamma_reg,
    /// c_bar ||Gamma^{2d/3}||_inf)`.
    pub fn local_sup_bound(&self, gamma_reg: f64) -> f64 {
        (2.0 * self.max_r / gamma_reg).max(self.c_bar)
    }

    /// Mass bound `max(2 max r / k^-, mass_bar)`.
    pub fn mass_bound(&self) -> f64 {
        (2.0 * self.max_r / self.params.kernel.lower()).max(self.mass_bar)
    }

    /// Field with the left-edge Dirichlet data and zeros elsewhere.
    pub fn boundary_field(&self) -> Field2D {
        let mut f = Field2D::zeros(self.grid);
        for j in 0..self.grid.nz() {
            f.set(0, j, self.gamma_boundary.gamma[j]);
        }
        f
    }

    /// Pure drift operator `-E - c d_x` (zero diagonal).
    pub fn operator(&self, c: f64) -> Result<BoxOperator> {
        BoxOperator::new(
            self.grid,
            self.params.b_slope,
            c,
            vec![0.0; self.grid.nx() * self.grid.nz()],
        )
    }

    /// Nonlocal competition field `q(x, z) = int k(z, z') u(x, z') dz'`.
    pub fn competition(&self, u: &Field2D) -> Field2D {
        let mut q = Field2D::zeros(self.grid);
        for i in 0..self.grid.nx() {
            let (us, qs) = (u.slice(i), q.slice_mut(i));
            self.nonlocal.apply_slice(&self.weights_z, us, qs);
        }
        q
    }

    /// Discrete residual of the homotopy problem
    /// `-E(u) - c u_x - (r - tau K u - gamma_reg (1-tau) u) u` over the
    /// interior; returns the residual field and its sup norm.
    pub fn residual(
        &self,
        u: &Field2D,
        c: f64,
        tau: f64,
        gamma_reg: f64,
    ) -> Result<(Field2D, f64)> {
        let op = self.operator(c)?;
        let mut out = Field2D::zeros(self.grid);
        op.apply(u, &mut out);
        let q = self.competition(u);
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        let mut sup = 0.0f64;
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let k = self.grid.index(i, j);
                let reaction =
                    (self.r_z[j] - tau * q.data[k] - gamma_reg * (1.0 - tau) * u.data[k])
                        * u.data[k];
                out.data[k] -= reaction;
                sup = sup.max(out.data[k].abs());
            }
        }
        Ok((out, sup))
    }

    /// Interior right-hand side correction for Dirichlet data: minus the
    /// stencil applied to the boundary ring.
    pub fn dirichlet_rhs(&self, op: &BoxOperator, boundary: &Field2D) -> Vec<f64> {
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        let mut ring = boundary.clone();
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                ring.data[self.grid.index(i, j)] = 0.0;
            }
        }
        let mut applied = Field2D::zeros(self.grid);
        op.apply(&ring, &mut applied);
        let mut rhs = Vec::with_capacity((nx - 2) * (nz - 2));
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                rhs.push(-applied.data[self.grid.index(i, j)]);
            }
        }
        rhs
    }

    /// Assemble `-E - c d_x + diag` over the interior and add an optional
    /// dense per-slice block (the nonlocal Jacobian term).
    pub fn assemble(
        &self,
        c: f64,
        diag: &Field2D,
        dense_scale: Option<(&Field2D, f64)>,
    ) -> Result<BlockTridiag> {
        let op = BoxOperator::new(self.grid, self.params.b_slope, c, diag.data.clone())?;
        let mut block = op.to_block_tridiag();
        if let Some((u, tau)) = dense_scale {
            let (nx, nz) = (self.grid.nx(), self.grid.nz());
            let m = nz - 2;
            for bi in 0..nx - 2 {
                let i = bi + 1;
                let d = &mut block.diag[bi];
                for bj in 0..m {
                    let j = bj + 1;
                    let scale = tau * u.get(i, j);
                    if scale == 0.0 {
                        continue;
                    }
                    for bjp in 0..m {
                        let jp = bjp + 1;
                        d[(bj, bjp)] +=
                            scale * self.nonlocal.kernel_at(j, jp) * self.weights_z[jp];
                    }
                }
            }
        }
        Ok(block)
    }

    /// Scatter interior unknowns into a field that already carries its
    /// boundary values.
    pub fn set_interior(&self, field: &mut Field2D, interior: &[f64]) {
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                field.data[self.grid.index(i, j)] = interior[(i - 1) * (nz - 2) + (j - 1)];
            }
        }
    }

    pub fn interior_of(&self, field: &Field2D) -> Vec<f64> {
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        let mut v = Vec::with_capacity((nx - 2) * (nz - 2));
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                v.push(field.data[self.grid.index(i, j)]);
            }
        }
        v
    }

    /// Interior index of the origin in the unknown vector.
    pub fn origin_interior_index(&self) -> usize {
        let (ci, cj) = self.grid.center();
        (ci - 1) * (self.grid.nz() - 2) + (cj - 1)
    }

    /// Error if the parameters are not in the invasion regime.
    pub fn require_invading(&self) -> Result<f64> {
        self.c_star.ok_or(Error::ExtinctionRegime {
            lambda: self.lambda0,
        })
    }

    /// Vertical mass profile `m(x) = int u(x, z) dz`.
    pub fn mass_profile(&self, u: &Field2D) -> Vec<f64> {
        (0..self.grid.nx())
            .map(|i| {
                u.slice(i)
                    .iter()
                    .zip(&self.weights_z)
                    .map(|(ui, wi)| ui * wi)
                    .sum()
            })
            .collect()
    }
}

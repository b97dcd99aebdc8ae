//! Principal eigenvalue solvers for the confined trait operators
//! `-(B^2+1) d_zz - (r(z) + nu z^2)` on intervals and on the line, the 2D
//! box eigenpair, the extinction/invasion classifier and the minimal-speed
//! formula.

use serde::Serialize;

use crate::discretize::{assemble_1d, BoxOperator, Field2D, Grid1D, Grid2D};
use crate::error::{Error, Result};
use crate::linalg::{smallest_eigenpair, BlockTridiag};
use crate::model::{GrowthKind, ModelParams};

/// Domain on which an eigenpair was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EigenDomain {
    /// Dirichlet interval `(-b, b)`.
    Interval { b: f64 },
    /// Whole line, approximated by growing intervals.
    Line,
}

/// A principal eigenvalue with its positive eigenfunction, normalized to 1
/// at `z = 0`. Interval pairs vanish at the endpoints.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Samples on every node of `grid` (boundary zeros included).
    pub gamma: Vec<f64>,
    pub grid: Grid1D,
    pub domain: EigenDomain,
    pub nu: f64,
    /// `max |M gamma - lambda gamma| / max |gamma|` over the interior, for
    /// the discrete eigenvalue on the assembly grid.
    pub residual: f64,
    /// Estimated distance of `lambda` to the continuum value, when known
    /// (line solves report the Richardson and truncation estimates).
    pub error_estimate: Option<f64>,
}

impl EigenPair {
    /// Linear interpolation of the eigenfunction, clamped to the grid.
    pub fn gamma_at(&self, z: f64) -> f64 {
        let (i, t) = self.grid.locate(z);
        self.gamma[i] * (1.0 - t) + self.gamma[i + 1] * t
    }

    /// Trapezoid integral of the eigenfunction over its grid.
    pub fn gamma_integral(&self) -> f64 {
        let w = crate::discretize::quadrature_weights(&self.grid);
        self.gamma.iter().zip(&w).map(|(g, wi)| g * wi).sum()
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

fn require_confined(p: &ModelParams, nu: f64) -> Result<()> {
    if nu < 0.0 {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be >= 0")));
    }
    if nu > 0.0 && nu >= p.delta() {
        return Err(Error::ConfinementLost {
            nu,
            delta: p.delta(),
        });
    }
    Ok(())
}

/// Solve the Dirichlet problem on `(-b, b)` with `n` nodes.
pub fn solve_interval(p: &ModelParams, nu: f64, b: f64, n: usize) -> Result<EigenPair> {
    solve_interval_on(p, nu, &Grid1D::symmetric(b, n)?)
}

/// Solve the Dirichlet problem on an explicit symmetric grid.
pub fn solve_interval_on(p: &ModelParams, nu: f64, grid: &Grid1D) -> Result<EigenPair> {
    require_confined(p, nu)?;
    if !grid.is_symmetric() {
        return Err(Error::InvalidParameter(
            "eigenvalue grids must be symmetric so z = 0 is a node".into(),
        ));
    }
    let m = assemble_1d(grid, &p.growth, p.b_slope, nu)?;
    let (lambda, v) = smallest_eigenpair(&m)?;

    // Perron vector: significantly negative entries mean the iteration
    // converged to a higher mode.
    let vmax = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if v.iter().any(|&x| x < -1e-12 * vmax) {
        return Err(Error::SolverFailure(format!(
            "eigenvector lost positivity (min {:.3e}); iterate head: {:?}",
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            &v[..v.len().min(5)]
        )));
    }

    // normalize to gamma(0) = 1; the center of the full grid maps to
    // interior index center-1
    let center = grid.center_index();
    let pivot = v[center - 1];
    if pivot <= 0.0 {
        return Err(Error::SolverFailure(
            "eigenfunction vanishes at z = 0; cannot normalize".into(),
        ));
    }
    let mut v: Vec<f64> = v.iter().map(|x| x / pivot).collect();
    refine_tails(&m, lambda, &mut v, center - 1);

    // residual against the assembled matrix, after the tail refinement
    let vmax = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut mv = vec![0.0; m.n()];
    m.matvec(&v, &mut mv);
    let residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0f64, f64::max)
        / vmax;
    // floating-point floor: the residual of a rounded eigenpair scales with
    // eps * ||M||, times the backward-error constant of the pivoted solve
    let gate = (1e-10f64).max(64.0 * f64::EPSILON * m.norm_inf());
    if residual > gate {
        return Err(Error::SolverFailure(format!(
            "eigen residual {residual:.3e} above gate {gate:.3e}; iterate head: {:?}",
            &v[..v.len().min(5)]
        )));
    }
    let mut gamma = Vec::with_capacity(grid.len());
    gamma.push(0.0);
    gamma.extend_from_slice(&v);
    gamma.push(0.0);

    Ok(EigenPair {
        lambda,
        gamma,
        grid: *grid,
        domain: EigenDomain::Interval { b: grid.hi() },
        nu,
        residual,
        error_estimate: None,
    })
}

/// Rebuild the eigenvector tails by the inward three-term recurrence
/// (Miller's device). Inverse iteration is accurate in the absolute sense,
/// so tail entries far below the peak are pure noise; integrating the
/// eigenvalue equation inward from the Dirichlet boundary is stable for the
/// decaying solution and restores relative accuracy there.
fn refine_tails(m: &crate::discretize::SymTridiag, lambda: f64, v: &mut [f64], center: usize) {
    let n = m.n();
    if n < 8 {
        return;
    }
    let d_off = -m.off[0];
    if d_off <= 0.0 {
        return;
    }
    let vmax = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let healthy = 1e-3 * vmax;

    // right tail: march from the boundary toward the first healthy node
    let mut match_r = None;
    for k in (center..n).rev() {
        if v[k] >= healthy {
            match_r = Some(k);
            break;
        }
    }
    if let Some(mr) = match_r {
        if mr + 2 < n {
            let mut w = vec![0.0; n];
            w[n - 1] = 1.0;
            // virtual boundary value beyond the last interior node is 0
            for i in (mr + 1..n).rev() {
                let w_next = if i + 1 < n { w[i + 1] } else { 0.0 };
                w[i - 1] = ((m.diag[i] - lambda) * w[i] - d_off * w_next) / d_off;
            }
            if w[mr].abs() > 0.0 && w[mr].is_finite() {
                let scale = v[mr] / w[mr];
                if scale.is_finite() {
                    for k in mr + 1..n {
                        v[k] = w[k] * scale;
                    }
                }
            }
        }
    }

    // left tail, mirrored
    let mut match_l = None;
    for (k, val) in v.iter().enumerate().take(center + 1) {
        if *val >= healthy {
            match_l = Some(k);
            break;
        }
    }
    if let Some(ml) = match_l {
        if ml >= 2 {
            let mut w = vec![0.0; n];
            w[0] = 1.0;
            for i in 0..ml {
                let w_prev = if i > 0 { w[i - 1] } else { 0.0 };
                w[i + 1] = ((m.diag[i] - lambda) * w[i] - d_off * w_prev) / d_off;
            }
            if w[ml].abs() > 0.0 && w[ml].is_finite() {
                let scale = v[ml] / w[ml];
                if scale.is_finite() {
                    for k in 0..ml {
                        v[k] = w[k] * scale;
                    }
                }
            }
        }
    }
}

/// Interval eigenvalue after one Richardson extrapolation over the grid
/// spacing; also returns the fine-grid pair.
pub fn solve_interval_extrapolated(
    p: &ModelParams,
    nu: f64,
    b: f64,
    n: usize,
) -> Result<(f64, EigenPair)> {
    let coarse = solve_interval(p, nu, b, n)?;
    let fine = solve_interval(p, nu, b, 2 * (n - 1) + 1)?;
    let lambda = (4.0 * fine.lambda - coarse.lambda) / 3.0;
    Ok((lambda, fine))
}

/// Controls for the line solver: interval doubling with a fixed target
/// spacing, stopping when the eigenvalue stabilizes and the eigenfunction is
/// negligible at the boundary.
#[derive(Debug, Clone, Copy)]
pub struct LineConfig {
    pub b0: f64,
    pub b_cap: f64,
    pub h_target: f64,
    /// Relative stop for the doubling rule.
    pub rel_tol: f64,
    /// Required boundary smallness of gamma relative to its max.
    pub boundary_rel: f64,
}

impl Default for LineConfig {
    fn default() -> Self {
        Self {
            b0: 8.0,
            b_cap: 64.0,
            h_target: 0.01,
            rel_tol: 1e-7,
            boundary_rel: 1e-10,
        }
    }
}

/// Solve the line problem by doubling the interval until both the
/// eigenvalue increment and the boundary values are negligible. Each rung
/// extrapolates once over the spacing, so the reported eigenvalue is fourth
/// order in `h_target`.
pub fn solve_line(p: &ModelParams, nu: f64, cfg: &LineConfig) -> Result<EigenPair> {
    require_confined(p, nu)?;
    let mut b = cfg.b0;
    let mut prev: Option<f64> = None;
    while b <= cfg.b_cap {
        let grid = Grid1D::symmetric_with_spacing(b, cfg.h_target)?;
        let coarse = solve_interval_on(p, nu, &grid)?;
        let fine_grid = Grid1D::symmetric(b, 2 * (grid.len() - 1) + 1)?;
        let fine = solve_interval_on(p, nu, &fine_grid)?;
        let lambda = (4.0 * fine.lambda - coarse.lambda) / 3.0;
        let richardson_est = (fine.lambda - coarse.lambda).abs() / 3.0;

        let gmax = fine.gamma_max();
        let edge = fine.gamma[1].abs().max(fine.gamma[fine.gamma.len() - 2].abs());
        let boundary_ok = edge <= cfg.boundary_rel * gmax;

        if let Some(last) = prev {
            let inc = (lambda - last).abs();
            if boundary_ok && inc <= cfg.rel_tol * lambda.abs().max(1.0) {
                return Ok(EigenPair {
                    lambda,
                    error_estimate: Some(richardson_est + inc),
                    domain: EigenDomain::Line,
                    ..fine
                });
            }
        }
        prev = Some(lambda);
        b *= 2.0;
    }
    Err(Error::SolverFailure(format!(
        "line eigenvalue did not converge below b = {}",
        cfg.b_cap
    )))
}

/// Closed-form line eigenvalue for a quadratic profile `r = r_max - A z^2`
/// with confinement shift `nu`: `sqrt((A - nu)(B^2+1)) - r_max`.
pub fn quadratic_line_lambda(r_max: f64, a_sel: f64, b_slope: f64, nu: f64) -> f64 {
    ((a_sel - nu) * (b_slope * b_slope + 1.0)).sqrt() - r_max
}

/// Evaluator for a line eigenfunction: exact Gaussian for quadratic
/// profiles, interpolated samples otherwise.
#[derive(Debug, Clone)]
pub enum GammaLine {
    Gaussian { kappa: f64 },
    Sampled(EigenPair),
}

impl GammaLine {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            GammaLine::Gaussian { kappa } => (-kappa * z * z / 2.0).exp(),
            GammaLine::Sampled(pair) => pair.gamma_at(z),
        }
    }

    /// Integral over the line (exact for the Gaussian branch).
    pub fn integral(&self) -> f64 {
        match self {
            GammaLine::Gaussian { kappa } => (2.0 * std::f64::consts::PI / kappa).sqrt(),
            GammaLine::Sampled(pair) => pair.gamma_integral(),
        }
    }
}

/// Line eigenvalue and eigenfunction evaluator for arbitrary profiles;
/// quadratic profiles take the closed form.
pub fn line_pair(p: &ModelParams, nu: f64, cfg: &LineConfig) -> Result<(f64, GammaLine)> {
    require_confined(p, nu)?;
    if let GrowthKind::Quadratic { r_max, a_sel } = p.growth.kind() {
        let lambda = quadratic_line_lambda(*r_max, *a_sel, p.b_slope, nu);
        let kappa = ((a_sel - nu) / p.bb()).sqrt();
        return Ok((lambda, GammaLine::Gaussian { kappa }));
    }
    let pair = solve_line(p, nu, cfg)?;
    Ok((pair.lambda, GammaLine::Sampled(pair)))
}

/// Outcome of the minimal-speed formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MinimalSpeed {
    /// `lambda > 0`: no invasion, the population goes extinct.
    Extinct,
    /// `c* = 2 sqrt(-lambda / (B^2+1))`; zero exactly at the dichotomy
    /// boundary.
    Speed(f64),
}

pub fn minimal_speed(lambda_inf_0: f64, b_slope: f64) -> MinimalSpeed {
    if lambda_inf_0 > 0.0 {
        MinimalSpeed::Extinct
    } else {
        MinimalSpeed::Speed(2.0 * (-lambda_inf_0 / (b_slope * b_slope + 1.0)).sqrt())
    }
}

/// Sign of the principal line eigenvalue decides the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    Extinct { lambda: f64 },
    Invading { lambda: f64, c_star: f64 },
    /// `|lambda|` within the solver tolerance of zero.
    Marginal { lambda: f64 },
}

impl Classification {
    pub fn lambda(&self) -> f64 {
        match self {
            Classification::Extinct { lambda }
            | Classification::Invading { lambda, .. }
            | Classification::Marginal { lambda } => *lambda,
        }
    }

    pub fn c_star(&self) -> Option<f64> {
        match self {
            Classification::Invading { c_star, .. } => Some(*c_star),
            _ => None,
        }
    }
}

/// Classify a parameter set by the sign of the numerically computed line
/// eigenvalue; values within the solver's error window are tagged marginal.
pub fn classify(p: &ModelParams, cfg: &LineConfig) -> Result<Classification> {
    let pair = solve_line(p, 0.0, cfg)?;
    let window = cfg
        .rel_tol
        .max(4.0 * pair.error_estimate.unwrap_or(cfg.rel_tol));
    let lambda = pair.lambda;
    Ok(if lambda.abs() <= window {
        Classification::Marginal { lambda }
    } else if lambda > 0.0 {
        Classification::Extinct { lambda }
    } else {
        match minimal_speed(lambda, p.b_slope) {
            MinimalSpeed::Speed(c_star) => Classification::Invading { lambda, c_star },
            MinimalSpeed::Extinct => unreachable!("lambda < 0 implies a speed"),
        }
    })
}

/// Principal eigenpair of the 2D box problem on `(-R, R)^2` with Dirichlet
/// conditions, normalized to 1 at the origin.
#[derive(Debug, Clone)]
pub struct BoxEigenPair2D {
    pub mu: f64,
    pub upsilon: Field2D,
    pub r_half: f64,
    pub residual: f64,
}

/// Shifted inverse power iteration for the smallest eigenvalue of
/// `-E - r(z)` on the square box. The shift sits below the spectrum
/// (`mu_R > -max r`), so the iteration converges to the Perron pair.
pub fn solve_box_2d(p: &ModelParams, r_half: f64, n: usize) -> Result<BoxEigenPair2D> {
    let grid = Grid2D::boxed(r_half, r_half, n, n)?;
    let (nx, nz) = (grid.nx(), grid.nz());
    let mut diag = vec![0.0; nx * nz];
    for i in 0..nx {
        for j in 0..nz {
            diag[grid.index(i, j)] = -p.growth.eval_r(grid.z.node(j))?;
        }
    }
    let op = BoxOperator::new(grid, p.b_slope, 0.0, diag)?;

    let mut shift = -p.growth.max_r() - 1e-3 * p.growth.max_r().abs().max(1.0);
    for attempt in 0..2 {
        match inverse_power(&op, shift, 600) {
            Ok(pair) => return Ok(pair),
            Err(e) => {
                if attempt == 1 {
                    return Err(e);
                }
                shift -= 1.0 + shift.abs();
            }
        }
    }
    unreachable!()
}

fn inverse_power(op: &BoxOperator, shift: f64, max_iter: usize) -> Result<BoxEigenPair2D> {
    let grid = op.grid;
    let (nx, nz) = (grid.nx(), grid.nz());
    let (n_blocks, m) = (nx - 2, nz - 2);

    let shifted = BoxOperator {
        diag: op.diag.iter().map(|d| d - shift).collect(),
        ..op.clone()
    };
    let lu = shifted.to_block_tridiag().factor()?;

    let mut v = vec![1.0; n_blocks * m];
    let mut mu = 0.0;
    let mut residual = f64::INFINITY;
    let mut field = Field2D::zeros(grid);
    let mut applied = Field2D::zeros(grid);

    for _ in 0..max_iter {
        let mut w = v.clone();
        lu.solve(&mut w)?;
        let norm = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SolverFailure("inverse power iteration degenerated".into()));
        }
        for x in &mut w {
            *x /= norm;
        }
        v = w;

        // Rayleigh quotient and residual on the full stencil
        interior_to_field(&v, &mut field);
        op.apply(&field, &mut applied);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let k = grid.index(i, j);
                num += applied.data[k] * field.data[k];
                den += field.data[k] * field.data[k];
            }
        }
        mu = num / den;
        let vmax = field.max_abs();
        residual = (0..nx * nz)
            .map(|k| (applied.data[k] - mu * field.data[k]).abs())
            .fold(0.0f64, f64::max)
            / vmax;
        if residual <= 1e-9 {
            break;
        }
    }
    if residual > 1e-8 {
        return Err(Error::SolverFailure(format!(
            "box eigen residual {residual:.3e} above 1e-8"
        )));
    }

    let vmax = field.max_abs();
    if field.data.iter().any(|&x| x < -1e-10 * vmax) {
        return Err(Error::SolverFailure(
            "box eigenfunction lost positivity".into(),
        ));
    }
    let (ci, cj) = grid.center();
    let pivot = field.get(ci, cj);
    if pivot <= 0.0 {
        return Err(Error::SolverFailure(
            "box eigenfunction vanishes at the origin".into(),
        ));
    }
    for x in &mut field.data {
        *x /= pivot;
    }
    Ok(BoxEigenPair2D {
        mu,
        upsilon: field,
        r_half: grid.x.hi(),
        residual,
    })
}

fn interior_to_field(v: &[f64], field: &mut Field2D) {
    let (nx, nz) = (field.grid.nx(), field.grid.nz());
    field.data.fill(0.0);
    for i in 1..nx - 1 {
        for j in 1..nz - 1 {
            field.data[i * nz + j] = v[(i - 1) * (nz - 2) + (j - 1)];
        }
    }
}

impl BoxOperator {
    /// Assemble the interior unknowns as a block tridiagonal system, one
    /// dense z-block per interior x-slice.
    pub fn to_block_tridiag(&self) -> BlockTridiag {
        use nalgebra::DMatrix;
        let s = self.coeffs();
        let (nx, nz) = (self.grid.nx(), self.grid.nz());
        let (n_blocks, m) = (nx - 2, nz - 2);
        let mut diag_blocks = Vec::with_capacity(n_blocks);
        let mut sub = Vec::with_capacity(n_blocks);
        let mut sup = Vec::with_capacity(n_blocks);
        for bi in 0..n_blocks {
            let i = bi + 1;
            let mut d = DMatrix::zeros(m, m);
            for bj in 0..m {
                let j = bj + 1;
                d[(bj, bj)] = s.center + self.diag[self.grid.index(i, j)];
                if bj > 0 {
                    d[(bj, bj - 1)] = s.zm;
                }
                if bj + 1 < m {
                    d[(bj, bj + 1)] = s.zp;
                }
            }
            diag_blocks.push(d);

            let mut lo = Band3::zeros(m);
            let mut hi = Band3::zeros(m);
            for bj in 0..m {
                lo.diag[bj] = s.xm;
                hi.diag[bj] = s.xp;
                if bj > 0 {
                    lo.sub[bj] = s.mm;
                    hi.sub[bj] = s.pm;
                }
                if bj + 1 < m {
                    lo.sup[bj] = s.mp;
                    hi.sup[bj] = s.pp;
                }
            }
            sub.push(lo);
            sup.push(hi);
        }
        BlockTridiag {
            diag: diag_blocks,
            sub,
            sup,
        }
    }
}

use crate::linalg::Band3;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthProfile, Kernel};
    use approx::assert_relative_eq;

    fn quadratic(a_sel: f64, b_slope: f64) -> ModelParams {
        ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, a_sel).unwrap(),
            Kernel::constant(1.0).unwrap(),
            b_slope,
        )
        .unwrap()
    }

    fn flat(r0: f64, range: f64, delta: f64, b_slope: f64) -> ModelParams {
        let samples: Vec<(f64, f64)> = (0..41)
            .map(|i| (-range + 2.0 * range * i as f64 / 40.0, r0))
            .collect();
        ModelParams::new(
            GrowthProfile::tabulated(samples, delta).unwrap(),
            Kernel::constant(1.0).unwrap(),
            b_slope,
        )
        .unwrap()
    }

    #[test]
    fn interval_constant_profile_is_sine_mode() {
        // r = r0, B = 0: lambda = (pi / 2b)^2 - r0 up to O(h^2)
        let p = flat(0.3, 3.0, 0.05, 0.0);
        let b = 2.0;
        let pair = solve_interval(&p, 0.0, b, 401).unwrap();
        let exact = (std::f64::consts::PI / (2.0 * b)).powi(2) - 0.3;
        assert!((pair.lambda - exact).abs() < 2e-5, "{}", pair.lambda);
    }

    #[test]
    fn interval_slope_scales_diffusion() {
        let p = flat(0.3, 3.0, 0.05, 1.0);
        let b = 2.0;
        let pair = solve_interval(&p, 0.0, b, 401).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / (2.0 * b)).powi(2) - 0.3;
        assert!((pair.lambda - exact).abs() < 4e-5, "{}", pair.lambda);
    }

    #[test]
    fn interval_richardson_hits_1e6() {
        let p = flat(0.3, 3.0, 0.05, 1.0);
        let b = 2.0;
        let (lambda, _) = solve_interval_extrapolated(&p, 0.0, b, 401).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / (2.0 * b)).powi(2) - 0.3;
        assert!((lambda - exact).abs() < 1e-6, "{lambda} vs {exact}");
    }

    #[test]
    fn interval_quadratic_benchmark_near_line_limit() {
        let p = quadratic(0.25, 1.0);
        let pair = solve_interval(&p, 0.0, 12.0, 3201).unwrap();
        let exact = 0.5f64.sqrt() - 1.0;
        assert!(
            (pair.lambda - exact).abs() < 1e-6,
            "lambda = {}, exact = {exact}",
            pair.lambda
        );
        // eigenpair invariants
        assert_eq!(pair.gamma[0], 0.0);
        assert_eq!(*pair.gamma.last().unwrap(), 0.0);
        let center = pair.grid.center_index();
        assert_eq!(pair.gamma[center], 1.0);
    }

    #[test]
    fn line_matches_closed_form_and_gaussian() {
        for (a, b) in [(0.25, 1.0), (1.0, 0.0), (0.04, 2.0)] {
            let p = quadratic(a, b);
            let pair = solve_line(&p, 0.0, &LineConfig::default()).unwrap();
            let exact = quadratic_line_lambda(1.0, a, b, 0.0);
            assert!(
                (pair.lambda - exact).abs() < 1e-6,
                "A = {a}, B = {b}: {} vs {exact}",
                pair.lambda
            );
            let kappa = (a / (b * b + 1.0)).sqrt();
            for k in 0..=100 {
                let z = -5.0 + 0.1 * k as f64;
                let err = (pair.gamma_at(z) - (-kappa * z * z / 2.0).exp()).abs();
                assert!(err < 1e-5, "A = {a}, B = {b}, z = {z}: err = {err}");
            }
        }
    }

    #[test]
    fn line_dichotomy_boundary_is_marginal() {
        let p = quadratic(1.0, 0.0);
        let pair = solve_line(&p, 0.0, &LineConfig::default()).unwrap();
        assert!(pair.lambda.abs() < 1e-7, "{}", pair.lambda);
        let class = classify(&p, &LineConfig::default()).unwrap();
        assert!(matches!(class, Classification::Marginal { .. }), "{class:?}");
    }

    #[test]
    fn classify_follows_the_dichotomy() {
        let extinct = classify(&quadratic(0.6, 1.0), &LineConfig::default()).unwrap();
        assert!(matches!(extinct, Classification::Extinct { .. }));
        let invading = classify(&quadratic(0.25, 1.0), &LineConfig::default()).unwrap();
        match invading {
            Classification::Invading { lambda, c_star } => {
                assert_relative_eq!(lambda, 0.5f64.sqrt() - 1.0, epsilon = 1e-6);
                let exact = 2.0 * ((1.0 - 0.5f64.sqrt()) / 2.0).sqrt();
                assert_relative_eq!(c_star, exact, epsilon = 1e-6);
            }
            other => panic!("expected invading, got {other:?}"),
        }
    }

    #[test]
    fn minimal_speed_algebra() {
        let b = 1.3;
        match minimal_speed(-(b * b + 1.0), b) {
            MinimalSpeed::Speed(c) => assert_relative_eq!(c, 2.0, max_relative = 1e-14),
            _ => panic!(),
        }
        match minimal_speed(0.5f64.sqrt() - 1.0, 1.0) {
            MinimalSpeed::Speed(c) => {
                assert_relative_eq!(
                    c,
                    2.0 * ((1.0 - 0.5f64.sqrt()) / 2.0).sqrt(),
                    max_relative = 1e-14
                );
                assert_relative_eq!(c, 0.7653668647301795, max_relative = 1e-9);
            }
            _ => panic!(),
        }
        assert_eq!(minimal_speed(0.0, 2.0), MinimalSpeed::Speed(0.0));
        assert_eq!(minimal_speed(0.1, 0.0), MinimalSpeed::Extinct);
    }

    #[test]
    fn eigenvalue_monotone_in_interval_width() {
        let p = quadratic(0.25, 1.0);
        let mut prev = f64::INFINITY;
        for b in [2.0, 3.0, 4.0, 5.0] {
            let n = (400.0 * b) as usize | 1;
            let pair = solve_interval(&p, p.delta() / 3.0, b, n).unwrap();
            assert!(
                pair.lambda < prev,
                "lambda not decreasing at b = {b}: {} vs {prev}",
                pair.lambda
            );
            prev = pair.lambda;
        }
    }

    #[test]
    fn line_eigenvalue_monotone_in_nu() {
        let p = quadratic(0.25, 1.0);
        let cfg = LineConfig::default();
        let l0 = solve_line(&p, 0.0, &cfg).unwrap().lambda;
        for frac in [1.0 / 3.0, 2.0 / 3.0] {
            let l = solve_line(&p, frac * p.delta(), &cfg).unwrap().lambda;
            assert!(l <= l0 + 1e-9, "nu fraction {frac}: {l} vs {l0}");
        }
    }

    #[test]
    fn gaussian_tail_bound_on_two_thirds_delta_pair() {
        // computed Gamma^{2 delta/3} is dominated by the explicit Gaussian
        // beyond z_bar = sqrt(6)/delta, with the constant fit at z_bar
        let p = quadratic(0.25, 1.0);
        let delta = p.delta();
        let nu = 2.0 * delta / 3.0;
        let pair = solve_interval(&p, nu, 14.0, 2801).unwrap();
        let zbar = 6.0f64.sqrt() / delta;
        assert!(zbar < 14.0);
        let rate = (delta / p.bb()).sqrt() / (2.0 * 6.0f64.sqrt());
        let c_fit = pair.gamma_at(zbar) / (-rate * zbar * zbar).exp();
        for k in 0..200 {
            let z = zbar + (14.0 - zbar) * k as f64 / 200.0;
            let bound = c_fit * (-rate * z * z).exp();
            assert!(
                pair.gamma_at(z) <= bound * (1.0 + 1e-6) + 1e-30,
                "tail bound broken at z = {z}"
            );
        }
    }

    #[test]
    fn line_solver_errors_when_cap_is_too_small() {
        // slow Gaussian decay needs a wide interval; cap it below that
        let p = quadratic(0.04, 2.0);
        let cfg = LineConfig {
            b_cap: 8.0,
            ..LineConfig::default()
        };
        assert!(matches!(
            solve_line(&p, 0.0, &cfg),
            Err(crate::error::Error::SolverFailure(_))
        ));
    }

    #[test]
    fn box_2d_product_sine_mode() {
        // r = 0, B = 0: mu_R = 2 (pi / 2R)^2
        let p = flat(0.0, 5.0, 0.05, 0.0);
        let r_half = 4.0;
        let pair = solve_box_2d(&p, r_half, 81).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / (2.0 * r_half)).powi(2);
        assert!(
            (pair.mu - exact).abs() < 2e-4,
            "mu = {}, exact = {exact}",
            pair.mu
        );
        let (ci, cj) = pair.upsilon.grid.center();
        assert_eq!(pair.upsilon.get(ci, cj), 1.0);
        assert!(pair.upsilon.min() >= -1e-12);
    }

    #[test]
    fn box_2d_decreases_to_line_eigenvalue() {
        let p = quadratic(0.25, 1.0);
        let lambda = quadratic_line_lambda(1.0, 0.25, 1.0, 0.0);
        let mut prev = f64::INFINITY;
        for r_half in [4.0, 6.0, 8.0] {
            let n = (16.0 * r_half) as usize | 1;
            let pair = solve_box_2d(&p, r_half, n).unwrap();
            assert!(pair.mu > lambda, "mu_R must stay above lambda_inf^0");
            assert!(pair.mu < prev, "mu_R not decreasing at R = {r_half}");
            prev = pair.mu;
        }
        assert!(
            prev - lambda < 0.12,
            "mu_R at R = 8 still {prev} vs {lambda}"
        );
    }
}

//! The local regularized problem at `tau = 0`:
//! `-E(u) - c u_x = (r(z) - gamma_reg u) u` on the box with the eigenfunction
//! data on the left edge. Solved by the monotone scheme: start from the
//! constant supersolution and sweep downward, each sweep solving the linear
//! problem with the logistic term frozen, then polish with Newton.

use crate::discretize::Field2D;
use crate::error::{Error, Result};

use super::context::WaveContext;

pub(super) struct LocalSolve {
    pub u: Field2D,
    #[allow(dead_code)] // iteration counts are read by tests and debugging
    pub sweeps: usize,
    #[allow(dead_code)]
    pub newton_iters: usize,
}

/// Residual of the local problem only (`tau = 0`).
fn local_residual(ctx: &WaveContext, u: &Field2D, c: f64, gamma_reg: f64) -> Result<f64> {
    Ok(ctx.residual(u, c, 0.0, gamma_reg)?.1)
}

pub(super) fn solve_local_inner(
    ctx: &WaveContext,
    c: f64,
    gamma_reg: f64,
    guess: Option<&Field2D>,
    tol: f64,
) -> Result<LocalSolve> {
    if !(gamma_reg > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "local regularization gamma = {gamma_reg} must be positive"
        )));
    }
    let grid = ctx.grid;
    let (nx, nz) = (grid.nx(), grid.nz());
    let boundary = ctx.boundary_field();

    let mut u;
    let mut sweeps = 0usize;
    if let Some(g) = guess {
        u = g.clone();
        // keep the Dirichlet ring authoritative
        for j in 0..nz {
            u.set(0, j, boundary.get(0, j));
            u.set(nx - 1, j, 0.0);
        }
        for i in 0..nx {
            u.set(i, 0, 0.0);
            u.set(i, nz - 1, 0.0);
        }
    } else {
        // monotone stage from the constant supersolution; the sweeps shape
        // the iterate into the basin of the maximal solution and Newton
        // finishes the job
        let u_bar = ctx.local_sup_bound(gamma_reg);
        u = boundary.clone();
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                u.data[grid.index(i, j)] = u_bar;
            }
        }

        // frozen-shift operator: sigma(z) >= 2 gamma u_bar - r(z) keeps the
        // sweep map monotone on [0, u_bar]
        let mut shift = Field2D::zeros(grid);
        for i in 0..nx {
            for j in 0..nz {
                shift.data[grid.index(i, j)] = (2.0 * gamma_reg * u_bar - ctx.r_z[j]).max(0.0);
            }
        }
        let op =
            crate::discretize::BoxOperator::new(grid, ctx.params.b_slope, c, shift.data.clone())?;
        let rhs_dirichlet = ctx.dirichlet_rhs(&op, &boundary);
        let lu = ctx.assemble(c, &shift, None)?.factor()?;

        let mut handover = 1e-2 * u_bar.max(1.0);
        let mut best_delta = f64::INFINITY;
        let mut since_best = 0usize;
        loop {
            sweeps += 1;
            let mut rhs = rhs_dirichlet.clone();
            let mut idx = 0;
            for i in 1..nx - 1 {
                for j in 1..nz - 1 {
                    let v = u.data[grid.index(i, j)];
                    rhs[idx] += (ctx.r_z[j] - gamma_reg * v) * v
                        + shift.data[grid.index(i, j)] * v;
                    idx += 1;
                }
            }
            lu.solve(&mut rhs)?;
            let mut delta = 0.0f64;
            let mut idx = 0;
            for i in 1..nx - 1 {
                for j in 1..nz - 1 {
                    let k = grid.index(i, j);
                    let new = rhs[idx].max(0.0);
                    delta = delta.max((new - u.data[k]).abs());
                    u.data[k] = new;
                    idx += 1;
                }
            }
            if sweeps >= 30 && delta <= handover {
                // try to finish with Newton; resume sweeping at a tighter
                // handover if it rejects the iterate
                match newton_polish(ctx, u.clone(), c, gamma_reg, tol, u_bar) {
                    Ok((polished, iters)) => {
                        return Ok(LocalSolve {
                            u: polished,
                            sweeps,
                            newton_iters: iters,
                        });
                    }
                    Err(_) if handover > 1e-8 => {
                        handover *= 1e-2;
                    }
                    Err(e) => return Err(e),
                }
            }
            if delta < best_delta * (1.0 - 1e-12) {
                best_delta = delta;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= 50 {
                    return Err(Error::SolverFailure(format!(
                        "monotone iteration stalled after {sweeps} sweeps \
                         (last delta {delta:.3e})"
                    )));
                }
            }
            if sweeps > 20000 {
                return Err(Error::SolverFailure(
                    "monotone iteration exceeded the sweep budget".into(),
                ));
            }
        }
    }

    let u_bar = ctx.local_sup_bound(gamma_reg);
    let (u, newton_iters) = newton_polish(ctx, u, c, gamma_reg, tol, u_bar)?;
    Ok(LocalSolve {
        u,
        sweeps,
        newton_iters,
    })
}

/// Newton on the local problem from a given iterate. Rejects outcomes that
/// leave `[0, u_bar]`, so a caller can resume the monotone stage instead.
fn newton_polish(
    ctx: &WaveContext,
    mut u: Field2D,
    c: f64,
    gamma_reg: f64,
    tol: f64,
    u_bar: f64,
) -> Result<(Field2D, usize)> {
    let grid = ctx.grid;
    let (nx, nz) = (grid.nx(), grid.nz());
    let mut newton_iters = 0usize;
    let mut resid = local_residual(ctx, &u, c, gamma_reg)?;
    for _ in 0..40 {
        if resid <= tol {
            break;
        }
        newton_iters += 1;
        let mut jac_diag = Field2D::zeros(grid);
        for i in 0..nx {
            for j in 0..nz {
                let k = grid.index(i, j);
                jac_diag.data[k] = -ctx.r_z[j] + 2.0 * gamma_reg * u.data[k];
            }
        }
        let lu = ctx.assemble(c, &jac_diag, None)?.factor()?;
        let (f, _) = ctx.residual(&u, c, 0.0, gamma_reg)?;
        let mut step = ctx.interior_of(&f);
        for v in &mut step {
            *v = -*v;
        }
        lu.solve(&mut step)?;

        // backtracking on the residual
        let mut lam = 1.0f64;
        let base = ctx.interior_of(&u);
        loop {
            let trial: Vec<f64> = base
                .iter()
                .zip(&step)
                .map(|(b, s)| b + lam * s)
                .collect();
            let mut u_trial = u.clone();
            ctx.set_interior(&mut u_trial, &trial);
            let r_trial = local_residual(ctx, &u_trial, c, gamma_reg)?;
            if r_trial < resid {
                u = u_trial;
                resid = r_trial;
                break;
            }
            lam *= 0.5;
            if lam < 1.0 / 64.0 {
                return Err(Error::SolverFailure(format!(
                    "local Newton backtracking stalled at residual {resid:.3e}"
                )));
            }
        }
    }
    if resid > tol {
        return Err(Error::SolverFailure(format!(
            "local Newton polish stalled at residual {resid:.3e} (target {tol:.1e})"
        )));
    }
    // sanity bracket: the discrete solution may carry an oscillatory tail
    // below the truncation-error scale (the linearized decay is complex for
    // c < c*), but anything larger means Newton left the maximal branch
    let min = u.min();
    let max = u.max_abs();
    if min < -1e-4 * u_bar || max > u_bar * (1.0 + 1e-6) {
        return Err(Error::SolverFailure(format!(
            "local Newton left the bracket [0, {u_bar}]: min {min:.3e}, max {max:.3e}"
        )));
    }
    Ok((u, newton_iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid2D;
    use crate::eigen::LineConfig;
    use crate::model::{GrowthProfile, Kernel, ModelParams};

    fn ctx(a: f64, b: f64, nx: usize, nz: usize) -> WaveContext {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.25).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        let grid = Grid2D::boxed(a, b, nx, nz).unwrap();
        WaveContext::new(&p, grid, &LineConfig::default()).unwrap()
    }

    #[test]
    fn local_solution_respects_boundary_and_bounds() {
        let ctx = ctx(8.0, 8.0, 81, 81);
        let sol = solve_local_inner(&ctx, 0.5, 1.0, None, 1e-11).unwrap();
        let u = &sol.u;
        // left edge carries the eigenfunction, other edges zero
        for j in 0..81 {
            assert_eq!(u.get(0, j), ctx.gamma_boundary.gamma[j]);
            assert_eq!(u.get(80, j), 0.0);
        }
        for i in 0..81 {
            assert_eq!(u.get(i, 0), 0.0);
            assert_eq!(u.get(i, 80), 0.0);
        }
        // the signed iterate may dip below zero at the truncation-error
        // scale of the tail; nothing more
        assert!(u.min() >= -1e-6, "min {}", u.min());
        let bound = ctx.local_sup_bound(1.0);
        assert!(
            u.data.iter().all(|&v| v <= bound * (1.0 + 1e-9)),
            "sup {} above {bound}",
            u.max_abs()
        );
        assert!(sol.sweeps > 0);
    }

    #[test]
    fn public_local_profile_is_nonnegative() {
        let ctx = ctx(8.0, 8.0, 81, 81);
        let u = crate::waves::solve_local(&ctx.params, ctx.grid, 0.5, 1.0).unwrap();
        assert!(u.min() >= 0.0);
    }

    #[test]
    fn local_center_value_decreases_in_speed() {
        let ctx = ctx(8.0, 8.0, 81, 81);
        let (ci, cj) = ctx.grid.center();
        let u1 = solve_local_inner(&ctx, 0.3, 1.0, None, 1e-11).unwrap().u;
        let u2 = solve_local_inner(&ctx, 0.9, 1.0, None, 1e-11).unwrap().u;
        assert!(
            u1.get(ci, cj) > u2.get(ci, cj),
            "u(0,0) must decrease in c: {} vs {}",
            u1.get(ci, cj),
            u2.get(ci, cj)
        );
    }

    #[test]
    fn local_guess_path_matches_cold_start() {
        let ctx = ctx(6.0, 6.0, 61, 61);
        let cold = solve_local_inner(&ctx, 0.5, 1.0, None, 1e-11).unwrap().u;
        let warm = solve_local_inner(&ctx, 0.52, 1.0, Some(&cold), 1e-11)
            .unwrap()
            .u;
        let re = solve_local_inner(&ctx, 0.52, 1.0, None, 1e-11).unwrap().u;
        let diff = warm
            .data
            .iter()
            .zip(&re.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-8, "warm and cold solutions differ by {diff}");
    }
}

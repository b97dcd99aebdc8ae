//! Box problem with normalization `u(0,0) = eps`: bisection in the speed on
//! the local problem, then continuation in the homotopy parameter `tau`
//! from the local regularization to the full nonlocal competition, with a
//! bordered Newton method on the unknowns `(u, c)`.

use crate::discretize::{Field2D, Grid2D};
use crate::eigen::LineConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::context::WaveContext;
use super::diagnostics::{build_report, ReportInputs, WaveKind};
use super::local::solve_local_inner;
use super::WaveSolution;

/// Controls for the homotopy solve.
#[derive(Debug, Clone)]
pub struct HomotopyConfig {
    /// Local regularization coefficient; shapes the path, not the endpoint.
    pub gamma_reg: f64,
    /// Normalization target; default `0.01 * sup bound` of the local
    /// problem, ceiling `0.1 * sup bound`.
    pub epsilon: Option<f64>,
    /// Initial tau step.
    pub tau_step: f64,
    /// Smallest tau step before declaring a breakdown.
    pub tau_step_min: f64,
    /// Sup-norm residual target for Newton.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Residual gate every returned solution must satisfy.
    pub residual_gate: f64,
    /// Automatic epsilon halvings when the continuation dies early.
    pub epsilon_retries: usize,
    pub line: LineConfig,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 1.0,
            epsilon: None,
            tau_step: 0.1,
            tau_step_min: 1e-4,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            residual_gate: 1e-8,
            epsilon_retries: 3,
            line: LineConfig::default(),
        }
    }
}

/// Solve the local problem at fixed speed (public form of the monotone
/// scheme; see the homotopy stage for how it pins the speed). The profile
/// is reported nonnegative: the sub-truncation-error oscillation of the
/// discrete tail is zeroed.
pub fn solve_local(p: &ModelParams, grid: Grid2D, c: f64, gamma_reg: f64) -> Result<Field2D> {
    let ctx = WaveContext::new(p, grid, &LineConfig::default())?;
    let mut u = solve_local_inner(&ctx, c, gamma_reg, None, 1e-11)?.u;
    for v in &mut u.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(u)
}

pub(super) struct NewtonOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// One bordered Newton solve of the homotopy problem at fixed tau, keeping
/// `u(0,0) = eps` through the border row. Two backsolves per iteration with
/// a single factorization of the Jacobian.
pub(super) fn bordered_newton(
    ctx: &WaveContext,
    u: &mut Field2D,
    c: &mut f64,
    tau: f64,
    eps: f64,
    cfg: &HomotopyConfig,
) -> Result<NewtonOutcome> {
    let grid = ctx.grid;
    let (nx, nz) = (grid.nx(), grid.nz());
    let (ci, cj) = grid.center();
    let origin = ctx.origin_interior_index();
    let hx = grid.x.h();

    let (_, mut resid) = ctx.residual(u, *c, tau, cfg.gamma_reg)?;
    let mut constraint = (u.get(ci, cj) - eps).abs();
    if std::env::var("CLINEWAVE_DEBUG_NEWTON").is_ok() {
        eprintln!("newton enter tau={tau} c={c} resid={resid:.3e} constraint={constraint:.3e}");
    }

    for iter in 0..cfg.newton_max_iter {
        if resid <= cfg.newton_tol && constraint <= cfg.newton_tol.max(1e-12) {
            return Ok(NewtonOutcome {
                iterations: iter,
                residual: resid,
            });
        }

        // Jacobian diagonal: -r + tau K u + 2 gamma (1 - tau) u
        let q = ctx.competition(u);
        let mut diag = Field2D::zeros(grid);
        for i in 0..nx {
            for j in 0..nz {
                let k = grid.index(i, j);
                diag.data[k] = -ctx.r_z[j]
                    + tau * q.data[k]
                    + 2.0 * cfg.gamma_reg * (1.0 - tau) * u.data[k];
            }
        }
        let lu = ctx.assemble(*c, &diag, Some((u, tau)))?.factor()?;

        let (f, _) = ctx.residual(u, *c, tau, cfg.gamma_reg)?;
        let mut v1 = ctx.interior_of(&f);
        for x in &mut v1 {
            *x = -*x;
        }
        lu.solve(&mut v1)?;

        // dF/dc = -u_x
        let mut v2 = Vec::with_capacity((nx - 2) * (nz - 2));
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                v2.push(-(u.get(i + 1, j) - u.get(i - 1, j)) / (2.0 * hx));
            }
        }
        lu.solve(&mut v2)?;

        let denom = v2[origin];
        if denom.abs() < 1e-14 * (1.0 + v1[origin].abs()) {
            return Err(Error::SolverFailure(
                "bordered system is singular: u(0,0) insensitive to c".into(),
            ));
        }
        let dc_raw = (v1[origin] - (eps - u.get(ci, cj))) / denom;
        // trust region on the speed: far from the solution the border
        // sensitivity can be tiny and the raw update explodes
        let dc_cap = 0.25 * c.abs().max(1.0);
        let dc = dc_raw.clamp(-dc_cap, dc_cap);

        let base = ctx.interior_of(u);
        let mut lam = 1.0f64;
        loop {
            let trial: Vec<f64> = base
                .iter()
                .zip(v1.iter().zip(&v2))
                .map(|(b, (a1, a2))| b + lam * (a1 - dc * a2))
                .collect();
            let mut u_trial = u.clone();
            ctx.set_interior(&mut u_trial, &trial);
            let c_trial = *c + lam * dc;
            let (_, r_trial) = ctx.residual(&u_trial, c_trial, tau, cfg.gamma_reg)?;
            if r_trial < resid || resid <= cfg.newton_tol {
                if std::env::var("CLINEWAVE_DEBUG_NEWTON").is_ok() {
                    eprintln!(
                        "newton tau={tau} iter={iter} lam={lam} resid {resid:.3e} -> {r_trial:.3e} dc={dc:.3e} c={c_trial:.6}"
                    );
                }
                *u = u_trial;
                *c = c_trial;
                resid = r_trial;
                constraint = (u.get(ci, cj) - eps).abs();
                break;
            }
            lam *= 0.5;
            if lam < 1.0 / 256.0 {
                return Err(Error::SolverFailure(format!(
                    "Newton backtracking failed at tau = {tau} (residual {resid:.3e})"
                )));
            }
        }
    }
    if resid <= cfg.newton_tol && constraint <= cfg.newton_tol.max(1e-12) {
        Ok(NewtonOutcome {
            iterations: cfg.newton_max_iter,
            residual: resid,
        })
    } else {
        Err(Error::SolverFailure(format!(
            "Newton did not converge at tau = {tau}: residual {resid:.3e}, \
             constraint {constraint:.3e}"
        )))
    }
}

/// Default normalization and its ceiling, from the local sup bound.
pub(super) fn resolve_epsilon(ctx: &WaveContext, cfg: &HomotopyConfig) -> Result<f64> {
    let m = ctx.local_sup_bound(cfg.gamma_reg);
    let eps = cfg.epsilon.unwrap_or(0.01 * m);
    if !(eps > 0.0) || eps > 0.1 * m {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {eps} outside (0, {}] (0.1 of the sup bound {m})",
            0.1 * m
        )));
    }
    Ok(eps)
}

/// Stage 1: find `c0` with `u(0,0) = eps` for the local problem by
/// bisection, using that `u(0,0)` is strictly decreasing in the speed.
fn bisect_local_speed(
    ctx: &WaveContext,
    eps: f64,
    cfg: &HomotopyConfig,
) -> Result<(f64, Field2D)> {
    let (ci, cj) = ctx.grid.center();
    let c_star = ctx.require_invading()?;

    // every evaluation restarts the monotone scheme from the supersolution:
    // it selects the maximal (physical) solution, which warm-started Newton
    // does not guarantee
    let eval = |c: f64| -> Result<f64> {
        let sol = solve_local_inner(ctx, c, cfg.gamma_reg, None, 1e-11)?;
        Ok(sol.u.get(ci, cj))
    };

    let c_lo0 = 0.0;
    let g_lo = eval(c_lo0)?;
    if g_lo <= eps {
        return Err(Error::SolverFailure(format!(
            "standing local solution already below eps: u(0,0) = {g_lo} <= {eps}; \
             enlarge the box or reduce eps"
        )));
    }
    let mut c_lo = c_lo0;
    let mut c_hi = c_star + 0.5;
    let mut g_hi = eval(c_hi)?;
    let mut tries = 0;
    while g_hi >= eps {
        c_hi += c_star + 0.5;
        g_hi = eval(c_hi)?;
        tries += 1;
        if tries > 6 {
            return Err(Error::SolverFailure(format!(
                "no speed bracket: u(0,0) = {g_hi} >= eps = {eps} even at c = {c_hi}"
            )));
        }
    }

    for _ in 0..40 {
        if c_hi - c_lo <= 1e-5 * c_hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (c_lo + c_hi);
        if eval(mid)? > eps {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
    }
    let c0 = 0.5 * (c_lo + c_hi);
    let sol = solve_local_inner(ctx, c0, cfg.gamma_reg, None, 1e-11)?;
    Ok((c0, sol.u))
}

/// Full solve on one box: stage 1 pins `(c0, u0)` at `tau = 0`, stage 2
/// continues in tau to the nonlocal problem. Returns the `tau = 1` solution
/// with its diagnostic report.
pub fn solve_box_homotopy(
    p: &ModelParams,
    grid: Grid2D,
    cfg: &HomotopyConfig,
) -> Result<WaveSolution> {
    let ctx = WaveContext::new(p, grid, &cfg.line)?;
    ctx.require_invading()?;
    let mut eps = resolve_epsilon(&ctx, cfg)?;

    let mut attempt = 0usize;
    loop {
        match continue_in_tau(&ctx, eps, cfg) {
            Ok(sol) => return Ok(sol),
            Err(Error::ContinuationBreakdown { tau, message, last_good })
                if tau < 0.5 && attempt < cfg.epsilon_retries =>
            {
                // early breakdowns usually mean eps is not small enough for
                // this box; halve and retry
                attempt += 1;
                eps *= 0.5;
                let _ = (message, last_good);
            }
            Err(e) => return Err(e),
        }
    }
}

pub(super) fn continue_in_tau(
    ctx: &WaveContext,
    eps: f64,
    cfg: &HomotopyConfig,
) -> Result<WaveSolution> {
    let (mut c, mut u) = bisect_local_speed(ctx, eps, cfg)?;
    bordered_newton(ctx, &mut u, &mut c, 0.0, eps, cfg)?;

    let mut tau = 0.0f64;
    let mut step = cfg.tau_step;
    let mut prev: Option<(f64, Field2D, f64)> = None; // (tau, u, c)

    while tau < 1.0 {
        let tau_next = (tau + step).min(1.0);
        // secant predictor along the tau path
        let mut u_try = u.clone();
        let mut c_try = c;
        if let Some((tau_prev, u_prev, c_prev)) = &prev {
            let ratio = (tau_next - tau) / (tau - tau_prev);
            for (k, v) in u_try.data.iter_mut().enumerate() {
                *v += ratio * (u.data[k] - u_prev.data[k]);
            }
            c_try += ratio * (c - c_prev);
        }

        match bordered_newton(ctx, &mut u_try, &mut c_try, tau_next, eps, cfg) {
            Ok(out) => {
                prev = Some((tau, u.clone(), c));
                u = u_try;
                c = c_try;
                tau = tau_next;
                if out.iterations <= 4 {
                    step = (step * 1.5).min(0.2);
                }
            }
            Err(_) => {
                step *= 0.5;
                if step < cfg.tau_step_min {
                    let (_, residual) = ctx.residual(&u, c, tau, cfg.gamma_reg)?;
                    let preclamp_min = clamp_rounding_negatives(&mut u)?;
                    let diagnostics = build_report(
                        ctx,
                        &u,
                        c,
                        &ReportInputs {
                            epsilon: Some(eps),
                            newton_tol: cfg.newton_tol,
                            speed_slack_estimate: speed_slack_proxy(ctx, c),
                            mass_bound_override: None,
                            kind: WaveKind::Minimal,
                            preclamp_min,
                        },
                    );
                    return Err(Error::ContinuationBreakdown {
                        tau,
                        message: format!(
                            "tau step fell below {} (possible instability of the \
                             nonlocal branch)",
                            cfg.tau_step_min
                        ),
                        last_good: Box::new(WaveSolution {
                            c,
                            u,
                            epsilon: eps,
                            tau,
                            residual,
                            diagnostics,
                        }),
                    });
                }
            }
        }
    }

    // the residual belongs to the signed discrete solution; the returned
    // profile is its nonnegative projection and the dip size is reported in
    // the positivity check
    let (_, residual) = ctx.residual(&u, c, 1.0, cfg.gamma_reg)?;
    if residual > cfg.residual_gate {
        return Err(Error::SolverFailure(format!(
            "converged solution has residual {residual:.3e} above the gate {:.1e}",
            cfg.residual_gate
        )));
    }
    let preclamp_min = clamp_rounding_negatives(&mut u)?;
    let diagnostics = build_report(
        ctx,
        &u,
        c,
        &ReportInputs {
            epsilon: Some(eps),
            newton_tol: cfg.newton_tol,
            speed_slack_estimate: speed_slack_proxy(ctx, c),
            mass_bound_override: None,
            kind: WaveKind::Minimal,
            preclamp_min,
        },
    );
    Ok(WaveSolution {
        c,
        u,
        epsilon: eps,
        tau: 1.0,
        residual,
        diagnostics,
    })
}

/// Nonnegative projection of the signed discrete solution. The tail of the
/// box wave oscillates at the truncation-error scale, so small dips are
/// expected; anything large means the iteration left the physical branch.
/// Returns the worst pre-projection value for the diagnostics.
pub(super) fn clamp_rounding_negatives(u: &mut Field2D) -> Result<f64> {
    let floor = -1e-4 * u.max_abs().max(1.0);
    let min = u.min();
    if min < floor {
        return Err(Error::SolverFailure(format!(
            "profile lost positivity: min = {min:.3e}"
        )));
    }
    for v in &mut u.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(min.min(0.0))
}

/// Single-box proxy for the discretization error of the speed: an `O(h^2)`
/// budget with the speed as scale. Ladder refinement replaces this with the
/// measured rung-to-rung change.
pub(super) fn speed_slack_proxy(ctx: &WaveContext, c: f64) -> f64 {
    let hx = ctx.grid.x.h();
    let hz = ctx.grid.z.h();
    c.abs().max(0.1) * (hx * hx + hz * hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthProfile, Kernel};

    fn benchmark() -> ModelParams {
        ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.25).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn homotopy_small_box_full_path() {
        let p = benchmark();
        let grid = Grid2D::boxed(10.0, 8.0, 101, 81).unwrap();
        let cfg = HomotopyConfig::default();
        let sol = solve_box_homotopy(&p, grid, &cfg).unwrap();

        assert_eq!(sol.tau, 1.0);
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        // normalization
        let (ci, cj) = grid.center();
        assert!((sol.u.get(ci, cj) - sol.epsilon).abs() <= 1e-9);
        // speed window with the h^2 slack
        let c_star = 2.0 * ((1.0 - 0.5f64.sqrt()) / 2.0).sqrt();
        assert!(sol.c > 0.0, "c = {}", sol.c);
        assert!(sol.c <= c_star + 0.05, "c = {} vs c* = {c_star}", sol.c);
        // positivity
        assert!(sol.u.min() >= 0.0);
        // mass bound
        let mass_check = sol.diagnostics.check("mass bound").unwrap();
        assert!(mass_check.passed, "{mass_check:?}");
        let tail_check = sol.diagnostics.check("gaussian tail bound").unwrap();
        assert!(tail_check.passed, "{tail_check:?}");
    }

    #[test]
    fn homotopy_with_nonconstant_kernel() {
        // exercises the dense nonlocal block in the Jacobian
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.25).unwrap(),
            Kernel::function(0.6, 1.1, |z: f64, zp: f64| {
                0.6 + 0.5 * (-(z - zp) * (z - zp) / 2.0).exp()
            })
            .unwrap(),
            1.0,
        )
        .unwrap();
        let grid = Grid2D::boxed(8.0, 8.0, 81, 81).unwrap();
        let sol = solve_box_homotopy(&p, grid, &HomotopyConfig::default()).unwrap();
        assert_eq!(sol.tau, 1.0);
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        assert!(sol.c > 0.0);
        assert!(sol.diagnostics.check("mass bound").unwrap().passed);
    }

    #[test]
    fn homotopy_rejects_extinction_regime() {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.8).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        let grid = Grid2D::boxed(8.0, 6.0, 65, 49).unwrap();
        assert!(matches!(
            solve_box_homotopy(&p, grid, &HomotopyConfig::default()),
            Err(Error::ExtinctionRegime { .. })
        ));
    }
}

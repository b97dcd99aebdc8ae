//! Strip refinement: re-solve the box problem on a ladder of growing boxes,
//! reusing the interpolated previous solution as the Newton initial guess.
//! The final speed is the minimal-speed estimate.

use serde::Serialize;

use crate::discretize::{Grid1D, Grid2D};
use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::context::WaveContext;
use super::diagnostics::{build_report, ReportInputs, WaveKind};
use super::homotopy::{bordered_newton, continue_in_tau, speed_slack_proxy, HomotopyConfig};
use super::WaveSolution;

/// Ladder of growing boxes at fixed target spacings.
#[derive(Debug, Clone)]
pub struct LadderConfig {
    /// Box half-widths `(a, b)` per rung, growing.
    pub rungs: Vec<(f64, f64)>,
    pub hx: f64,
    pub hz: f64,
    /// Stop when the speed changes less than this between rungs...
    pub c_tol: f64,
    /// ...and the centerline profile changes less than this.
    pub u_tol: f64,
    /// Normalization as a fraction of the sup bound, used when the homotopy
    /// config leaves epsilon unset. The strip limit needs the pin deep in
    /// the leading edge, noticeably deeper than a single box solve does.
    pub epsilon_fraction: f64,
    pub homotopy: HomotopyConfig,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            rungs: vec![(16.0, 10.0), (24.0, 12.0), (32.0, 12.0)],
            hx: 0.2,
            hz: 0.2,
            c_tol: 5e-3,
            u_tol: 5e-2,
            epsilon_fraction: 0.0025,
            homotopy: HomotopyConfig::default(),
        }
    }
}

/// Per-rung record of the ladder.
#[derive(Debug, Clone, Serialize)]
pub struct LadderRung {
    pub a: f64,
    pub b: f64,
    pub nx: usize,
    pub nz: usize,
    pub c: f64,
    pub residual: f64,
    pub newton_iterations: usize,
}

fn rung_grid(a: f64, b: f64, cfg: &LadderConfig) -> Result<Grid2D> {
    Ok(Grid2D::new(
        Grid1D::symmetric_with_spacing(a, cfg.hx)?,
        Grid1D::symmetric_with_spacing(b, cfg.hz)?,
    ))
}

/// Solve on the ladder. Converges when both the speed and the center
/// profile stabilize; errors with the speed history otherwise.
pub fn refine_to_strip(
    p: &ModelParams,
    cfg: &LadderConfig,
) -> Result<(WaveSolution, Vec<LadderRung>)> {
    if cfg.rungs.is_empty() {
        return Err(Error::InvalidParameter("ladder needs at least one rung".into()));
    }
    let mut rungs = Vec::new();

    // base rung: full homotopy
    let (a0, b0) = cfg.rungs[0];
    let grid0 = rung_grid(a0, b0, cfg)?;
    let ctx0 = WaveContext::new(p, grid0, &cfg.homotopy.line)?;
    let eps0 = match cfg.homotopy.epsilon {
        Some(_) => super::homotopy::resolve_epsilon(&ctx0, &cfg.homotopy)?,
        None => cfg.epsilon_fraction * ctx0.local_sup_bound(cfg.homotopy.gamma_reg),
    };
    let mut sol = continue_in_tau(&ctx0, eps0, &cfg.homotopy)?;
    let mut ctx = ctx0;
    rungs.push(LadderRung {
        a: a0,
        b: b0,
        nx: grid0.nx(),
        nz: grid0.nz(),
        c: sol.c,
        residual: sol.residual,
        newton_iterations: 0,
    });

    let mut converged = cfg.rungs.len() == 1;
    let mut preclamp_min = 0.0f64;
    for &(a, b) in &cfg.rungs[1..] {
        let grid = rung_grid(a, b, cfg)?;
        let ctx_next = WaveContext::new(p, grid, &cfg.homotopy.line)?;

        // interpolate the previous solution onto the new box, zero outside
        let mut u = ctx_next.boundary_field();
        let (nx, nz) = (grid.nx(), grid.nz());
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let x = grid.x.node(i);
                let z = grid.z.node(j);
                let inside = x >= sol.u.grid.x.lo()
                    && x <= sol.u.grid.x.hi()
                    && z >= sol.u.grid.z.lo()
                    && z <= sol.u.grid.z.hi();
                let v = if inside { sol.u.interp_clamped(x, z).0 } else { 0.0 };
                u.data[grid.index(i, j)] = v.max(0.0);
            }
        }

        let mut c = sol.c;
        let eps = sol.epsilon;
        let (newton_iterations, residual) =
            match bordered_newton(&ctx_next, &mut u, &mut c, 1.0, eps, &cfg.homotopy) {
                Ok(out) => (out.iterations, out.residual),
                Err(_) => {
                    // fall back to the full homotopy on this rung
                    let fresh = continue_in_tau(&ctx_next, eps, &cfg.homotopy)?;
                    u = fresh.u;
                    c = fresh.c;
                    (cfg.homotopy.newton_max_iter, fresh.residual)
                }
            };

        let rung_preclamp = super::homotopy::clamp_rounding_negatives(&mut u)?;
        preclamp_min = rung_preclamp;

        // change in speed and in the centerline profile, compared away from
        // the old box's left edge where its Dirichlet layer lives
        let dc = (c - sol.c).abs();
        let mut du = 0.0f64;
        let old_grid = sol.u.grid;
        for i in 0..old_grid.nx() {
            let x = old_grid.x.node(i);
            if x < old_grid.x.lo() + 5.0 {
                continue;
            }
            let new_val = u.interp_clamped(x, 0.0).0;
            let old_val = sol.u.get(i, old_grid.z.center_index());
            du = du.max((new_val - old_val).abs());
        }

        rungs.push(LadderRung {
            a,
            b,
            nx,
            nz,
            c,
            residual,
            newton_iterations,
        });

        sol = WaveSolution {
            c,
            u,
            epsilon: eps,
            tau: 1.0,
            residual,
            diagnostics: sol.diagnostics,
        };
        ctx = ctx_next;

        if std::env::var("CLINEWAVE_DEBUG_LADDER").is_ok() {
            eprintln!("ladder rung a={a} b={b}: c={c:.6} dc={dc:.3e} du={du:.3e}");
        }
        if dc <= cfg.c_tol && du <= cfg.u_tol {
            converged = true;
            break;
        }
        converged = false;
    }

    if !converged {
        let history: Vec<f64> = rungs.iter().map(|r| r.c).collect();
        return Err(Error::SolverFailure(format!(
            "strip ladder did not stabilize: speed history {history:?}"
        )));
    }

    // measured speed slack: last rung-to-rung change plus the h^2 proxy
    let measured = if rungs.len() >= 2 {
        (rungs[rungs.len() - 1].c - rungs[rungs.len() - 2].c).abs()
    } else {
        0.0
    };
    let slack = measured.max(speed_slack_proxy(&ctx, sol.c));
    sol.diagnostics = build_report(
        &ctx,
        &sol.u,
        sol.c,
        &ReportInputs {
            epsilon: Some(sol.epsilon),
            newton_tol: cfg.homotopy.newton_tol,
            speed_slack_estimate: slack,
            mass_bound_override: None,
            kind: WaveKind::Minimal,
            preclamp_min,
        },
    );
    Ok((sol, rungs))
}

//! Fast waves (`c > c*`): Picard iteration of the map that freezes the
//! competition integral, with boundary data from the positive part of the
//! subsolution and every iterate kept inside the sandwich
//! `h0 <= u <= e^{mu X} Gamma0`.

use crate::discretize::{Field2D, Grid2D};
use crate::eigen::LineConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::bounds::FastWaveFrame;
use super::context::WaveContext;
use super::diagnostics::{build_report, BoundCheck, ReportInputs, WaveKind};
use super::WaveSolution;

#[derive(Debug, Clone)]
pub struct FastWaveConfig {
    /// Exponent tweak of the subsolution; default half the admissible max.
    pub eps_exp: Option<f64>,
    /// Subsolution amplitude; default 1.5x the admissible threshold.
    pub a_coeff: Option<f64>,
    /// Picard stop on the sup change between iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation of the Picard update (the map alternates around the
    /// fixed point; averaging stabilizes it).
    pub damping: f64,
    /// Budget for pre-clip sandwich violations, relative to the local
    /// envelope scale.
    pub sandwich_rel_tol: f64,
    pub residual_gate: f64,
    pub line: LineConfig,
}

impl Default for FastWaveConfig {
    fn default() -> Self {
        Self {
            eps_exp: None,
            a_coeff: None,
            tol: 1e-10,
            max_iter: 600,
            damping: 0.7,
            sandwich_rel_tol: 1e-3,
            residual_gate: 1e-8,
            line: LineConfig::default(),
        }
    }
}

/// Solve the fast-wave problem on the box at fixed `c > c*`.
pub fn solve_fast_wave(
    p: &ModelParams,
    c: f64,
    grid: Grid2D,
    cfg: &FastWaveConfig,
) -> Result<WaveSolution> {
    let ctx = WaveContext::new(p, grid, &cfg.line)?;
    let frame = FastWaveFrame::new(p, c, &cfg.line)?;
    let b = grid.z.hi();
    let sub = frame.subsolution_params(b, cfg.eps_exp)?;
    let a_coeff = cfg.a_coeff.unwrap_or(1.5 * sub.a_min);
    if a_coeff < sub.a_min {
        return Err(Error::InvalidParameter(format!(
            "a_coeff = {a_coeff} below the admissible threshold {}",
            sub.a_min
        )));
    }

    let (nx, nz) = (grid.nx(), grid.nz());
    let h0 = Field2D::from_fn(grid, |x, z| frame.h0_xz(a_coeff, sub.eps_exp, x, z));
    let w = Field2D::from_fn(grid, |x, z| frame.w_xz(x, z));

    // boundary ring carries h0
    let mut u = Field2D::zeros(grid);
    let cap = (2.0 * ctx.max_r / p.kernel.lower()).max(1.0);
    for i in 0..nx {
        for j in 0..nz {
            let k = grid.index(i, j);
            let on_ring = i == 0 || i == nx - 1 || j == 0 || j == nz - 1;
            u.data[k] = if on_ring {
                h0.data[k]
            } else {
                w.data[k].min(cap).max(h0.data[k])
            };
        }
    }

    let mut damping = cfg.damping;
    let mut last_delta = f64::INFINITY;
    let mut worst_violation = 0.0f64;
    let mut worst_node = (0usize, 0usize);
    let mut converged = false;

    for iter in 0..cfg.max_iter {
        // frozen competition from the current iterate
        let q = ctx.competition(&u);
        let mut diag = Field2D::zeros(grid);
        for i in 0..nx {
            for j in 0..nz {
                let k = grid.index(i, j);
                diag.data[k] = q.data[k] - ctx.r_z[j];
            }
        }
        let op = crate::discretize::BoxOperator::new(grid, p.b_slope, c, diag.data.clone())?;
        let mut rhs = ctx.dirichlet_rhs(&op, &h0);
        let lu = ctx.assemble(c, &diag, None)?.factor()?;
        lu.solve(&mut rhs)?;

        let mut next = u.clone();
        ctx.set_interior(&mut next, &rhs);

        // measure pre-clip sandwich violations relative to the local
        // envelope, then project back into [h0, w]
        worst_violation = 0.0;
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let k = grid.index(i, j);
                let scale = w.data[k].max(1e-300);
                let over = (next.data[k] - w.data[k]) / scale;
                let under = (h0.data[k] - next.data[k]) / h0.data[k].max(scale.min(1.0));
                let viol = over.max(if h0.data[k] > 0.0 { under } else { 0.0 });
                if viol > worst_violation {
                    worst_violation = viol;
                    worst_node = (i, j);
                }
                next.data[k] = next.data[k].min(w.data[k]).max(h0.data[k]);
            }
        }

        // damped update stays inside the sandwich (convexity)
        let mut delta = 0.0f64;
        for k in 0..u.data.len() {
            let v = u.data[k] + damping * (next.data[k] - u.data[k]);
            delta = delta.max((v - u.data[k]).abs());
            u.data[k] = v;
        }

        if delta <= cfg.tol * u.max_abs().max(1.0) {
            converged = true;
            break;
        }
        if iter > 10 && delta > last_delta {
            damping *= 0.6;
            if damping < 0.05 {
                return Err(Error::SolverFailure(format!(
                    "Picard iteration oscillates (delta {delta:.3e} at iteration {iter})"
                )));
            }
        }
        last_delta = delta;
    }
    if !converged {
        return Err(Error::SolverFailure(format!(
            "Picard iteration did not reach tol after {} iterations",
            cfg.max_iter
        )));
    }
    if worst_violation > cfg.sandwich_rel_tol {
        let (i, j) = worst_node;
        return Err(Error::SandwichViolation {
            x: grid.x.node(i),
            z: grid.z.node(j),
            message: format!(
                "pre-clip violation {worst_violation:.3e} above budget {:.1e}",
                cfg.sandwich_rel_tol
            ),
        });
    }

    let (_, residual) = ctx.residual(&u, c, 1.0, 0.0)?;
    if residual > cfg.residual_gate {
        return Err(Error::SolverFailure(format!(
            "fast-wave residual {residual:.3e} above the gate {:.1e}",
            cfg.residual_gate
        )));
    }

    // fast-wave mass bound: max(2 max r / k^-, int e^{mu B z / s} Gamma0)
    let c_mass = frame.integral_constant() / p.kernel.upper();
    let mass_bound = (2.0 * ctx.max_r / p.kernel.lower()).max(c_mass);
    let mut diagnostics = build_report(
        &ctx,
        &u,
        c,
        &ReportInputs {
            epsilon: None,
            newton_tol: cfg.tol,
            speed_slack_estimate: 0.0,
            mass_bound_override: Some(mass_bound),
            kind: WaveKind::Fast,
            preclamp_min: 0.0,
        },
    );

    // sandwich checks at the native nodes (exact post-clip; the recorded
    // observation is the worst pre-clip violation)
    let mut sandwich_ok = true;
    for k in 0..u.data.len() {
        if u.data[k] > w.data[k] * (1.0 + 1e-13) + 1e-300
            || u.data[k] + 1e-300 < h0.data[k] * (1.0 - 1e-13)
        {
            sandwich_ok = false;
            break;
        }
    }
    diagnostics.checks.push(BoundCheck {
        name: "fast-wave sandwich h0 <= u <= w".into(),
        bound: 0.0,
        observed: worst_violation,
        slack: if sandwich_ok { 0.0 } else { 1.0 },
        tol: cfg.sandwich_rel_tol,
        passed: sandwich_ok && worst_violation <= cfg.sandwich_rel_tol,
    });

    let epsilon = {
        let (ci, cj) = grid.center();
        u.get(ci, cj)
    };
    Ok(WaveSolution {
        c,
        u,
        epsilon,
        tau: 1.0,
        residual,
        diagnostics,
    })
}

//! Runtime verification of the a priori bounds at a computed wave profile.
//! Each check records the sharp bound, the worst observed value, the slack
//! (observed exceedance) and the tolerance derived from a discretization
//! error estimate.

use serde::Serialize;

use crate::discretize::Field2D;

use super::context::WaveContext;

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    /// `max(0, observed - bound)` for upper bounds (analogous for lower).
    pub slack: f64,
    /// Slack budget: twice the discretization-error estimate.
    pub tol: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn upper(name: &str, observed: f64, bound: f64, tol: f64) -> Self {
        let slack = (observed - bound).max(0.0);
        Self {
            name: name.to_string(),
            bound,
            observed,
            slack,
            tol,
            passed: slack <= tol,
        }
    }

    fn lower(name: &str, observed: f64, bound: f64, tol: f64) -> Self {
        let slack = (bound - observed).max(0.0);
        Self {
            name: name.to_string(),
            bound,
            observed,
            slack,
            tol,
            passed: slack <= tol,
        }
    }
}

/// Diagnostic record attached to every returned wave solution.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub checks: Vec<BoundCheck>,
    pub mass_profile: Vec<f64>,
    pub mass_bound: f64,
    /// Sup bound `M = M_bar ||Gamma^{2d/3}||_inf`.
    pub sup_bound: f64,
    /// Gaussian tail constant fitted from the bulk, per the tail lemma.
    pub tail_constant: f64,
    pub tail_violations: usize,
    /// Invasion speed window `(0, c*]`.
    pub speed_window: (f64, f64),
    /// Left-state floor `nu` with `u >= nu` on `(-a, 0] x [-nu, nu]`.
    pub left_floor: Option<f64>,
    /// `(sup_z u, int u dz)` at the right-quarter station `x = 3a/4`,
    /// relative to their values at `x = 0`.
    pub right_decay: (f64, f64),
    /// Monotonicity in x (informational; flat spots at rounding level are
    /// tolerated).
    pub strictly_decreasing_x: Option<bool>,
    /// Field-scale discretization error estimate used for the budgets.
    pub disc_estimate: f64,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Which bounds apply to the solution being reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaveKind {
    /// Box/strip solution of the normalized problem.
    Minimal,
    /// Fast wave (`c > c*`) built from the sub/supersolution sandwich; its
    /// left edge carries zero Dirichlet data, so no left-state floor.
    Fast,
}

/// Leading-order discretization error of the field: second differences in
/// both directions, the local truncation scale of the centered stencils.
pub fn field_error_estimate(u: &Field2D) -> f64 {
    let (nx, nz) = (u.grid.nx(), u.grid.nz());
    let mut dxx = 0.0f64;
    let mut dzz = 0.0f64;
    for i in 1..nx - 1 {
        for j in 1..nz - 1 {
            let k = i * nz + j;
            dxx = dxx.max((u.data[k + nz] - 2.0 * u.data[k] + u.data[k - nz]).abs());
            dzz = dzz.max((u.data[k + 1] - 2.0 * u.data[k] + u.data[k - 1]).abs());
        }
    }
    (dxx + dzz) / 12.0
}

/// Inputs for the report: which bounds to evaluate and with what budgets.
pub(super) struct ReportInputs {
    pub epsilon: Option<f64>,
    pub newton_tol: f64,
    pub speed_slack_estimate: f64,
    pub mass_bound_override: Option<f64>,
    pub kind: WaveKind,
    /// Worst negative value of the signed discrete solution before the
    /// nonnegative projection (zero when no projection happened).
    pub preclamp_min: f64,
}

pub(super) fn build_report(
    ctx: &WaveContext,
    u: &Field2D,
    c: f64,
    inputs: &ReportInputs,
) -> DiagnosticReport {
    let ReportInputs {
        epsilon,
        newton_tol,
        speed_slack_estimate,
        mass_bound_override,
        kind,
        preclamp_min,
    } = *inputs;
    let grid = ctx.grid;
    let (nx, nz) = (grid.nx(), grid.nz());
    let disc = field_error_estimate(u);
    let mut checks = Vec::new();

    // positivity: the returned profile is projected to be nonnegative; the
    // recorded observation is the signed solution's worst dip, which must
    // stay within the truncation-error budget
    let min = u.min().min(preclamp_min);
    checks.push(BoundCheck::lower(
        "positivity",
        min,
        0.0,
        (2.0 * disc).max(1e-14 * u.max_abs().max(1.0)),
    ));

    // normalization
    if let Some(eps) = epsilon {
        let (ci, cj) = grid.center();
        checks.push(BoundCheck::upper(
            "normalization u(0,0) = eps",
            (u.get(ci, cj) - eps).abs(),
            0.0,
            newton_tol.max(1e-12),
        ));
    }

    // speed window (0, c*]: box/strip solutions only; fast waves run at
    // c > c* by construction
    let c_star = ctx.c_star.unwrap_or(f64::NAN);
    if c_star.is_finite() && kind == WaveKind::Minimal {
        let tol = 2.0 * speed_slack_estimate;
        let mut check = BoundCheck::upper("speed window c <= c*", c, c_star, tol);
        if !(c > 0.0) {
            check.passed = false;
        }
        checks.push(check);
    }

    // mass bound
    let mass_profile = ctx.mass_profile(u);
    let mass_bound = mass_bound_override.unwrap_or_else(|| ctx.mass_bound());
    let mass_max = mass_profile.iter().cloned().fold(0.0f64, f64::max);
    // composite trapezoid error: hz^2/12 * int |u_zz|
    let hz = grid.z.h();
    let mut mass_est = 0.0f64;
    for i in 0..nx {
        let s = u.slice(i);
        let tot: f64 = (1..nz - 1)
            .map(|j| (s[j + 1] - 2.0 * s[j] + s[j - 1]).abs())
            .sum();
        mass_est = mass_est.max(tot * hz / 12.0);
    }
    checks.push(BoundCheck::upper(
        "mass bound",
        mass_max,
        mass_bound,
        2.0 * mass_est.max(disc),
    ));

    // Gaussian tail constant fitted from the bulk |z| <= beta, then the sup
    // and tail bounds checked against it
    let delta = ctx.params.delta();
    let beta = (1.0 / delta).max((-3.0 * ctx.lambda_two_thirds / (2.0 * delta)).max(0.0).sqrt());
    let mut bulk_ratio = 0.0f64;
    for j in 0..nz {
        let z = grid.z.node(j);
        if z.abs() <= beta {
            let g = ctx.gamma_two_thirds.eval(z);
            for i in 0..nx {
                bulk_ratio = bulk_ratio.max(u.get(i, j) / g);
            }
        }
    }
    let m_bar = ctx.c_bar.max(bulk_ratio);
    let sup_bound = m_bar; // ||Gamma^{2d/3}||_inf = 1 by normalization
    let sup_observed = u.data.iter().cloned().fold(0.0f64, f64::max);
    checks.push(BoundCheck::upper(
        "sup bound",
        sup_observed,
        sup_bound,
        2.0 * disc,
    ));

    let mut tail_violations = 0usize;
    let mut tail_worst = 0.0f64;
    for j in 0..nz {
        let z = grid.z.node(j);
        let bound = m_bar * ctx.gamma_two_thirds.eval(z);
        for i in 0..nx {
            let excess = u.get(i, j) - bound;
            if excess > 2.0 * disc {
                tail_violations += 1;
            }
            tail_worst = tail_worst.max(excess);
        }
    }
    checks.push(BoundCheck {
        name: "gaussian tail bound".into(),
        bound: 0.0,
        observed: tail_worst.max(0.0),
        slack: tail_worst.max(0.0),
        tol: 2.0 * disc,
        passed: tail_violations == 0,
    });

    // left-state floor (minimal waves only): largest nu with u >= nu on
    // (-a, 0] x [-nu, nu]. The normalization pins u(0,0) = eps, so the
    // candidate ladder must reach below eps.
    let left_floor = if kind == WaveKind::Minimal {
        let mut candidates = vec![0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01];
        if let Some(eps) = epsilon {
            candidates.extend([0.8 * eps, 0.5 * eps, 0.25 * eps]);
        }
        candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut found = None;
        for &nu in &candidates {
            let mut min_val = f64::INFINITY;
            for i in 0..=grid.x.center_index() {
                for j in 0..nz {
                    if grid.z.node(j).abs() <= nu {
                        min_val = min_val.min(u.get(i, j));
                    }
                }
            }
            if min_val >= nu {
                found = Some(nu);
                break;
            }
        }
        checks.push(BoundCheck {
            name: "left-state floor".into(),
            bound: 0.0,
            observed: found.unwrap_or(0.0),
            slack: if found.is_some() { 0.0 } else { 1.0 },
            tol: 0.0,
            passed: found.is_some(),
        });
        found
    } else {
        None
    };

    // right decay relative to the x = 0 station
    let station = |i: usize| -> (f64, f64) {
        let s = u.slice(i);
        let sup = s.iter().cloned().fold(0.0f64, f64::max);
        let mass: f64 = s.iter().zip(&ctx.weights_z).map(|(a, w)| a * w).sum();
        (sup, mass)
    };
    let i_right = grid.x.nearest_index(0.75 * grid.x.hi());
    let (sup_r, mass_r) = station(i_right);
    let (sup_0, mass_0) = station(grid.x.center_index());
    let right_decay = (
        if sup_0 > 0.0 { sup_r / sup_0 } else { 0.0 },
        if mass_0 > 0.0 { mass_r / mass_0 } else { 0.0 },
    );

    // monotonicity in x, informational
    let strictly_decreasing_x = if kind == WaveKind::Minimal {
        let mut mono = true;
        'outer: for i in 1..nx - 2 {
            for j in 1..nz - 1 {
                if u.get(i + 1, j) > u.get(i, j) + 1e-10 * sup_observed.max(1.0) {
                    mono = false;
                    break 'outer;
                }
            }
        }
        Some(mono)
    } else {
        None
    };

    DiagnosticReport {
        checks,
        mass_profile,
        mass_bound,
        sup_bound,
        tail_constant: m_bar,
        tail_violations,
        speed_window: (0.0, c_star),
        left_floor,
        right_decay,
        strictly_decreasing_x,
        disc_estimate: disc,
    }
}

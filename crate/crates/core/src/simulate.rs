//! Time-dependent solver for the moving-frame equation: one semi-implicit
//! step treats the anisotropic diffusion implicitly (factored once) and the
//! nonlocal reaction explicitly. Measures spreading speed against the
//! minimal wave speed and extinction decay against the line eigenvalue.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::discretize::{quadrature_weights, BoxOperator, Field2D, Grid1D, Grid2D};
use crate::eigen::{line_pair, GammaLine, LineConfig};
use crate::error::{Error, Result};
use crate::linalg::BlockTridiagLU;
use crate::model::{Kernel, ModelParams};

/// Semi-implicit scheme: `(I - dt E) n^{k+1} = n^k + dt (r - K n^k) n^k`
/// with homogeneous Dirichlet conditions on the truncated box. The
/// factorization is built once and reused across steps.
pub struct StepScheme {
    pub dt: f64,
    pub grid: Grid2D,
    lu: BlockTridiagLU,
    r_z: Vec<f64>,
    weights_z: Vec<f64>,
    nonlocal: NonlocalSim,
}

enum NonlocalSim {
    Constant(f64),
    Dense(DMatrix<f64>),
}

impl NonlocalSim {
    fn apply(&self, w: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            NonlocalSim::Constant(k0) => {
                let mass: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                out.fill(k0 * mass);
            }
            NonlocalSim::Dense(k) => {
                for j in 0..u.len() {
                    out[j] = (0..u.len()).map(|jp| k[(j, jp)] * w[jp] * u[jp]).sum();
                }
            }
        }
    }
}

impl StepScheme {
    pub fn new(p: &ModelParams, grid: Grid2D, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let r_z = grid
            .z
            .nodes()
            .map(|z| p.growth.eval_r(z))
            .collect::<Result<Vec<f64>>>()?;
        let weights_z = quadrature_weights(&grid.z);
        let nz = grid.nz();
        let nonlocal = match &p.kernel {
            Kernel::Constant(k0) => NonlocalSim::Constant(*k0),
            kernel => {
                let mut k = DMatrix::zeros(nz, nz);
                for j in 0..nz {
                    for jp in 0..nz {
                        k[(j, jp)] = kernel.eval(grid.z.node(j), grid.z.node(jp));
                    }
                }
                NonlocalSim::Dense(k)
            }
        };

        // assemble I + dt * (-E): scale the drift blocks by dt, add identity
        let op = BoxOperator::new(grid, p.b_slope, 0.0, vec![0.0; grid.nx() * nz])?;
        let mut block = op.to_block_tridiag();
        for d in &mut block.diag {
            for v in d.iter_mut() {
                *v *= dt;
            }
            for j in 0..d.nrows() {
                d[(j, j)] += 1.0;
            }
        }
        for band in block.sub.iter_mut().chain(block.sup.iter_mut()) {
            for v in band
                .sub
                .iter_mut()
                .chain(band.diag.iter_mut())
                .chain(band.sup.iter_mut())
            {
                *v *= dt;
            }
        }
        let lu = block.factor()?;
        Ok(Self {
            dt,
            grid,
            lu,
            r_z,
            weights_z,
            nonlocal,
        })
    }

    /// One IMEX step. Negative values produced by the explicit reaction are
    /// clipped to zero; the clipped mass fraction is recorded on the state.
    pub fn step(&self, s: SimState) -> Result<SimState> {
        let grid = self.grid;
        let (nx, nz) = (grid.nx(), grid.nz());
        let field = &s.field;

        let mut q = vec![0.0; nz];
        let mut rhs = Vec::with_capacity((nx - 2) * (nz - 2));
        for i in 1..nx - 1 {
            let slice = field.slice(i);
            self.nonlocal.apply(&self.weights_z, slice, &mut q);
            for j in 1..nz - 1 {
                let v = slice[j];
                rhs.push(v + self.dt * (self.r_z[j] - q[j]) * v);
            }
        }
        self.lu.solve(&mut rhs)?;

        let mut next = Field2D::zeros(grid);
        let mut clipped = 0.0f64;
        let mut total = 0.0f64;
        let mut idx = 0;
        let mut worst = (0usize, 0usize, 0.0f64);
        for i in 1..nx - 1 {
            for j in 1..nz - 1 {
                let mut v = rhs[idx];
                idx += 1;
                if v < 0.0 {
                    clipped += -v;
                    if v < worst.2 {
                        worst = (i, j, v);
                    }
                    v = 0.0;
                }
                total += v;
                next.data[grid.index(i, j)] = v;
            }
        }
        if worst.2 < 0.0 && std::env::var("CLINEWAVE_DEBUG_CLIP").is_ok() {
            eprintln!(
                "t={:.3} worst clip at x={} z={} value={:.3e}",
                s.t + self.dt,
                grid.x.node(worst.0),
                grid.z.node(worst.1),
                worst.2
            );
        }
        let sup = next.max_abs();
        if sup > 1e6 {
            return Err(Error::Instability {
                t: s.t + self.dt,
                sup,
            });
        }
        let clip_frac = if total > 0.0 { clipped / total } else { 0.0 };
        Ok(SimState {
            t: s.t + self.dt,
            field: next,
            front_history: s.front_history,
            norm_history: s.norm_history,
            mass_history: s.mass_history,
            snapshots: s.snapshots,
            max_clip_fraction: s.max_clip_fraction.max(clip_frac),
        })
    }
}

/// Time-dependent field with its recorded histories.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub field: Field2D,
    /// `(t, x_theta)` level crossings of the front.
    pub front_history: Vec<(f64, f64)>,
    /// `(t, sup |n / Gamma0|)`.
    pub norm_history: Vec<(f64, f64)>,
    /// `(t, total mass)`.
    pub mass_history: Vec<(f64, f64)>,
    /// Periodic field snapshots, when requested.
    pub snapshots: Vec<(f64, Field2D)>,
    /// Worst per-step clipped-mass fraction seen so far.
    pub max_clip_fraction: f64,
}

impl SimState {
    pub fn new(field: Field2D) -> Self {
        Self {
            t: 0.0,
            field,
            front_history: Vec::new(),
            norm_history: Vec::new(),
            mass_history: Vec::new(),
            snapshots: Vec::new(),
            max_clip_fraction: 0.0,
        }
    }

    pub fn total_mass(&self, weights_x: &[f64], weights_z: &[f64]) -> f64 {
        let grid = self.field.grid;
        let mut m = 0.0;
        for i in 0..grid.nx() {
            let row: f64 = self
                .field
                .slice(i)
                .iter()
                .zip(weights_z)
                .map(|(v, w)| v * w)
                .sum();
            m += weights_x[i] * row;
        }
        m
    }
}

/// Rightmost x where the centerline `n(x, 0)` crosses `theta`, linearly
/// interpolated between nodes.
pub fn front_position(field: &Field2D, theta: f64) -> Option<f64> {
    let grid = field.grid;
    let cj = grid.z.center_index();
    let nx = grid.nx();
    for i in (0..nx - 1).rev() {
        let a = field.get(i, cj);
        let b = field.get(i + 1, cj);
        if a >= theta && b < theta {
            let frac = (a - theta) / (a - b);
            return Some(grid.x.node(i) + frac * grid.x.h());
        }
    }
    None
}

/// Least-squares line through `(x, y)` points: `(slope, intercept, r2)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = nf * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    let mean_y = sy / nf;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Some((slope, intercept, r2))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpeedFit {
    pub speed: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FitFlag {
    Ok,
    /// The field was identically zero; no rate can be fitted.
    ZeroField,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub rate: Option<f64>,
    pub r2: Option<f64>,
    pub flag: FitFlag,
}

/// Options shared by the invasion and extinction drivers.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Record histories every this many steps.
    pub output_every: usize,
    /// Initial plateau amplitude; default is the equilibrium level behind
    /// the front (invasion) or 1 (extinction).
    pub amplitude: Option<f64>,
    /// Fit on the trailing fraction of the run.
    pub fit_fraction: f64,
    /// Error out when the front gets this close to the right boundary.
    pub boundary_margin: f64,
    /// Keep a field snapshot every this many records (0 = none).
    pub snapshot_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            output_every: 20,
            amplitude: None,
            fit_fraction: 0.5,
            boundary_margin: 2.0,
            snapshot_every: 0,
        }
    }
}

fn gamma_row(gamma0: &GammaLine, grid: &Grid2D) -> Vec<f64> {
    grid.z.nodes().map(|z| gamma0.eval(z).max(1e-300)).collect()
}

fn sup_ratio(field: &Field2D, gamma_z: &[f64]) -> f64 {
    let grid = field.grid;
    let mut sup = 0.0f64;
    for i in 0..grid.nx() {
        for (v, g) in field.slice(i).iter().zip(gamma_z) {
            sup = sup.max(v / g);
        }
    }
    sup
}

/// Plateau-times-eigenfunction initial datum on `[lo, hi]` with cosine
/// ramps at both plateau edges: a sharp cut makes the implicit solve
/// undershoot (the cross-term stencil is not an M-matrix) and trips the
/// clipped-mass budget.
fn plateau_gamma(grid: Grid2D, gamma_z: &[f64], amp: f64, lo: f64, hi: f64) -> Field2D {
    let nz = grid.nz();
    let ramp = 2.0f64.min(0.25 * (hi - lo)).max(grid.x.h());
    let shape = |x: f64| -> f64 {
        if x < lo || x > hi {
            0.0
        } else if x < lo + ramp {
            0.5 * (1.0 - (std::f64::consts::PI * (x - lo) / ramp).cos())
        } else if x > hi - ramp {
            0.5 * (1.0 + (std::f64::consts::PI * (x - (hi - ramp)) / ramp).cos())
        } else {
            1.0
        }
    };
    let mut f = Field2D::zeros(grid);
    for i in 1..grid.nx() - 1 {
        let s = shape(grid.x.node(i));
        if s > 0.0 {
            for j in 1..nz - 1 {
                f.data[grid.index(i, j)] = amp * s * gamma_z[j];
            }
        }
    }
    f
}

/// Spreading run: track the front of an initially compact population and
/// fit its asymptotic speed. The fit is a consistency check against the
/// minimal wave speed, not a theorem about the Cauchy problem.
pub fn run_invasion(
    p: &ModelParams,
    grid: Grid2D,
    scheme: &StepScheme,
    t_final: f64,
    theta: f64,
    opts: &SimOptions,
) -> Result<(SimState, SpeedFit)> {
    let (lambda0, gamma0) = line_pair(p, 0.0, &LineConfig::default())?;
    if lambda0 >= 0.0 {
        return Err(Error::ExtinctionRegime { lambda: lambda0 });
    }
    let gamma_z = gamma_row(&gamma0, &grid);
    let amp = opts.amplitude.unwrap_or_else(|| {
        // equilibrium amplitude behind the front for a near-constant kernel
        -lambda0 / (p.kernel.lower() * gamma0.integral())
    });
    let mut state = SimState::new(plateau_gamma(grid, &gamma_z, amp, grid.x.lo() + 2.0, 0.0));

    let weights_x = quadrature_weights(&grid.x);
    let weights_z = quadrature_weights(&grid.z);
    let n_steps = (t_final / scheme.dt).round() as usize;
    record(&mut state, &gamma_z, &weights_x, &weights_z, theta, opts.snapshot_every);
    for k in 1..=n_steps {
        state = scheme.step(state)?;
        if k % opts.output_every == 0 || k == n_steps {
            record(&mut state, &gamma_z, &weights_x, &weights_z, theta, opts.snapshot_every);
            if let Some((_, x)) = state.front_history.last() {
                if *x > grid.x.hi() - opts.boundary_margin {
                    return Err(Error::DomainTooSmall(format!(
                        "front reached x = {x} at t = {} (box ends at {}); \
                         enlarge the x range",
                        state.t,
                        grid.x.hi()
                    )));
                }
            }
        }
    }

    let t_start = (1.0 - opts.fit_fraction) * t_final;
    let points: Vec<(f64, f64)> = state
        .front_history
        .iter()
        .filter(|(t, _)| *t >= t_start)
        .cloned()
        .collect();
    let (slope, _, r2) = linear_fit(&points).ok_or_else(|| {
        Error::SolverFailure("not enough front crossings in the fit window".into())
    })?;
    let fit = SpeedFit {
        speed: slope,
        r2,
        window: (t_start, t_final),
        n_points: points.len(),
    };
    Ok((state, fit))
}

/// Extinction run: record `sup n / Gamma0` and fit its exponential decay
/// rate on the trailing window. The initial z-profile is the discrete trait
/// eigenfunction, so the ratio decays from the first step instead of first
/// relaxing onto the discrete quasi-mode.
pub fn run_extinction(
    p: &ModelParams,
    grid: Grid2D,
    scheme: &StepScheme,
    t_final: f64,
    opts: &SimOptions,
) -> Result<(SimState, DecayFit)> {
    let (lambda0, gamma0) = line_pair(p, 0.0, &LineConfig::default())?;
    if lambda0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "extinction run needs lambda > 0 (got {lambda0})"
        )));
    }
    let gamma_z = gamma_row(&gamma0, &grid);
    let discrete_mode = crate::eigen::solve_interval_on(p, 0.0, &grid.z)?.gamma;
    let amp = opts.amplitude.unwrap_or(1.0);
    let fill = 0.25 * grid.x.hi();
    let mut state = SimState::new(plateau_gamma(grid, &discrete_mode, amp, -fill, fill));

    let weights_x = quadrature_weights(&grid.x);
    let weights_z = quadrature_weights(&grid.z);
    let n_steps = (t_final / scheme.dt).round() as usize;
    record(&mut state, &gamma_z, &weights_x, &weights_z, f64::INFINITY, opts.snapshot_every);

    if state.norm_history[0].1 == 0.0 {
        // nothing to decay; report the flag rather than a rate
        return Ok((
            state,
            DecayFit {
                rate: None,
                r2: None,
                flag: FitFlag::ZeroField,
            },
        ));
    }

    let t_start = (1.0 - opts.fit_fraction) * t_final;
    for k in 1..=n_steps {
        state = scheme.step(state)?;
        if k % opts.output_every == 0 || k == n_steps {
            record(&mut state, &gamma_z, &weights_x, &weights_z, f64::INFINITY, opts.snapshot_every);
            let (t, ratio) = *state.norm_history.last().unwrap();
            if ratio < 1e-280 && t < t_start {
                return Err(Error::SolverFailure(format!(
                    "field underflowed at t = {t} before the fit window; shorten t_final"
                )));
            }
        }
    }

    let points: Vec<(f64, f64)> = state
        .norm_history
        .iter()
        .filter(|(t, v)| *t >= t_start && *v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let fit = match linear_fit(&points) {
        Some((slope, _, r2)) => DecayFit {
            rate: Some(-slope),
            r2: Some(r2),
            flag: FitFlag::Ok,
        },
        None => DecayFit {
            rate: None,
            r2: None,
            flag: FitFlag::ZeroField,
        },
    };
    Ok((state, fit))
}

fn record(
    state: &mut SimState,
    gamma_z: &[f64],
    weights_x: &[f64],
    weights_z: &[f64],
    theta: f64,
    snapshot_every: usize,
) {
    if theta.is_finite() {
        if let Some(x) = front_position(&state.field, theta) {
            state.front_history.push((state.t, x));
        }
    }
    state
        .norm_history
        .push((state.t, sup_ratio(&state.field, gamma_z)));
    state
        .mass_history
        .push((state.t, state.total_mass(weights_x, weights_z)));
    if snapshot_every > 0 && (state.norm_history.len() - 1) % snapshot_every == 0 {
        state.snapshots.push((state.t, state.field.clone()));
    }
}

/// Largest time step at which the explicit reaction keeps the update factor
/// `1 + dt (r - K n)` positive everywhere on the grid, so the reaction
/// itself never clips: the strongly negative growth rate at the trait edges
/// is the binding term, plus the competition at the mass-bound scale.
pub fn suggest_dt(p: &ModelParams, grid: &Grid2D) -> Result<f64> {
    let mut r_min = f64::INFINITY;
    for z in grid.z.nodes() {
        r_min = r_min.min(p.growth.eval_r(z)?);
    }
    let competition = p.kernel.upper() * 2.0 * p.growth.max_r().max(0.0) / p.kernel.lower();
    Ok(0.9 / (r_min.abs() + competition).max(1.0))
}

/// Truncation box sized from the Gaussian tail estimate: the z-extent where
/// `Gamma^{2 delta/3}` drops below 1e-12, and an x-extent covering the
/// expected front excursion.
pub fn suggest_grid(
    p: &ModelParams,
    t_final: f64,
    c_star: Option<f64>,
    hx: f64,
    hz: f64,
) -> Result<Grid2D> {
    let line = LineConfig::default();
    let (_, gamma23) = line_pair(p, 2.0 * p.delta() / 3.0, &line)?;
    let mut b = 4.0;
    while gamma23.eval(b) >= 1e-12 && b < 64.0 {
        b += 1.0;
    }
    let x_back = 15.0f64;
    let x_fwd = c_star.map_or(15.0, |c| c * t_final + 10.0);
    let n_lo = (x_back / hx).ceil() as usize;
    let n_hi = (x_fwd / hx).ceil() as usize;
    let n_hi = if (n_lo + n_hi) % 2 == 1 { n_hi + 1 } else { n_hi };
    let x = Grid1D::new(-(n_lo as f64) * hx, n_hi as f64 * hx, n_lo + n_hi + 1)?;
    let z = Grid1D::symmetric_with_spacing(b, hz)?;
    Ok(Grid2D::new(x, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GrowthProfile;
    use approx::assert_relative_eq;

    fn flat_params(r0: f64, range: f64) -> ModelParams {
        let samples: Vec<(f64, f64)> = (0..43)
            .map(|i| (-range + 2.0 * range * i as f64 / 42.0, r0))
            .collect();
        ModelParams::new(
            GrowthProfile::tabulated(samples, 0.002).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_is_fixed_point() {
        let p = flat_params(1.0, 6.0);
        let grid = Grid2D::boxed(5.0, 5.0, 21, 21).unwrap();
        let scheme = StepScheme::new(&p, grid, 0.05).unwrap();
        let s0 = SimState::new(Field2D::zeros(grid));
        let s1 = scheme.step(s0).unwrap();
        assert!(s1.field.max_abs() == 0.0);
        assert_relative_eq!(s1.t, 0.05);
    }

    #[test]
    fn center_mass_tracks_logistic_ode() {
        // x-uniform data: the z-mass at the center obeys m' = (r0 - k0 m) m
        let p = flat_params(1.0, 21.0);
        let grid = Grid2D::boxed(20.0, 20.0, 81, 161).unwrap();
        let gamma: Vec<f64> = grid.z.nodes().map(|z| (-z * z / 2.0).exp()).collect();
        let weights = quadrature_weights(&grid.z);
        let m0: f64 = gamma
            .iter()
            .zip(&weights)
            .map(|(g, w)| 0.4 * g * w)
            .sum();
        let logistic = |t: f64| {
            let k = 1.0; // r0 / k0
            k * m0 * (t).exp() / (k + m0 * ((t).exp() - 1.0))
        };
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let scheme = StepScheme::new(&p, grid, dt).unwrap();
            let mut field = Field2D::zeros(grid);
            for i in 1..grid.nx() - 1 {
                for j in 1..grid.nz() - 1 {
                    field.data[grid.index(i, j)] = 0.4 * gamma[j];
                }
            }
            let mut s = SimState::new(field);
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                s = scheme.step(s).unwrap();
            }
            let ci = grid.x.center_index();
            let m: f64 = s
                .field
                .slice(ci)
                .iter()
                .zip(&weights)
                .map(|(v, w)| v * w)
                .sum();
            errs.push((m - logistic(1.0)).abs());
        }
        assert!(errs[0] < 0.02, "coarse-dt error {}", errs[0]);
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 0.8, "dt order {order} (errors {errs:?})");
    }

    #[test]
    fn single_step_mass_change_is_second_order() {
        let p = flat_params(1.0, 9.0);
        let grid = Grid2D::boxed(8.0, 8.0, 65, 65).unwrap();
        let wx = quadrature_weights(&grid.x);
        let wz = quadrature_weights(&grid.z);
        let init = Field2D::from_fn(grid, |x, z| {
            let v = (-(x * x + z * z) / 2.0).exp();
            if v > 1e-14 { 0.5 * v } else { 0.0 }
        });
        // zero the ring for the Dirichlet condition
        let mut init = init;
        for i in 0..grid.nx() {
            init.set(i, 0, 0.0);
            init.set(i, grid.nz() - 1, 0.0);
        }
        for j in 0..grid.nz() {
            init.set(0, j, 0.0);
            init.set(grid.nx() - 1, j, 0.0);
        }
        let m0 = SimState::new(init.clone()).total_mass(&wx, &wz);

        let mut diffs = Vec::new();
        for dt in [0.1, 0.05] {
            let one = StepScheme::new(&p, grid, dt).unwrap();
            let half = StepScheme::new(&p, grid, dt / 2.0).unwrap();
            let s = SimState::new(init.clone());
            let a = one.step(s.clone()).unwrap().total_mass(&wx, &wz) - m0;
            let b2 = half
                .step(half.step(s.clone()).unwrap())
                .unwrap()
                .total_mass(&wx, &wz)
                - m0;
            diffs.push((a - b2).abs());
        }
        let order = (diffs[0] / diffs[1]).log2();
        assert!(order > 1.7, "one-step order {order} (diffs {diffs:?})");
    }

    #[test]
    fn imex_orders_in_dt_and_h() {
        let p = flat_params(0.5, 9.0);
        // dt order: fixed grid, self-convergence against a tiny-dt reference
        let grid = Grid2D::boxed(8.0, 8.0, 65, 65).unwrap();
        let init = |g: Grid2D| {
            Field2D::from_fn(g, |x, z| {
                let v = (-(x * x + z * z) / 2.0).exp();
                if x.abs() < g.x.hi() - 1e-9 && z.abs() < g.z.hi() - 1e-9 {
                    0.5 * v
                } else {
                    0.0
                }
            })
        };
        let run = |g: Grid2D, dt: f64, t: f64| -> Field2D {
            let scheme = StepScheme::new(&p, g, dt).unwrap();
            let mut s = SimState::new(init(g));
            for _ in 0..(t / dt).round() as usize {
                s = scheme.step(s).unwrap();
            }
            s.field
        };
        let t = 0.5;
        let reference = run(grid, 0.003125, t);
        let mut errs = Vec::new();
        for dt in [0.05, 0.025] {
            let f = run(grid, dt, t);
            let err = f
                .data
                .iter()
                .zip(&reference.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let order_dt = (errs[0] / errs[1]).log2();
        assert!(order_dt > 0.9, "dt order {order_dt} (errors {errs:?})");

        // h order: tiny dt, compare coarse grids against the finest
        let t = 0.25;
        let dt = 0.00125;
        let fine_grid = Grid2D::boxed(8.0, 8.0, 129, 129).unwrap();
        let fine = run(fine_grid, dt, t);
        let mut errs_h = Vec::new();
        for n in [33usize, 65] {
            let g = Grid2D::boxed(8.0, 8.0, n, n).unwrap();
            let f = run(g, dt, t);
            let mut err = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let x = g.x.node(i);
                    let z = g.z.node(j);
                    err = err.max((f.get(i, j) - fine.interp_clamped(x, z).0).abs());
                }
            }
            errs_h.push(err);
        }
        let order_h = (errs_h[0] / errs_h[1]).log2();
        assert!(order_h > 1.9, "h order {order_h} (errors {errs_h:?})");
    }

    #[test]
    fn clip_budget_without_cross_term() {
        // for B = 0 the implicit operator is an M-matrix and the suggested
        // dt keeps the explicit reaction positive, so nothing is clipped;
        // the centered cross stencil at B > 0 undershoots at truncation
        // level (documented), bounded well below any dynamical scale
        for (b_slope, budget) in [(0.0, 1e-12), (1.0, 1e-7)] {
            let p = ModelParams::new(
                GrowthProfile::quadratic_auto_delta(1.0, 1.0).unwrap(),
                Kernel::constant(1.0).unwrap(),
                b_slope,
            )
            .unwrap();
            let grid = Grid2D::boxed(8.0, 12.0, 81, 121).unwrap();
            let dt = suggest_dt(&p, &grid).unwrap();
            let scheme = StepScheme::new(&p, grid, dt).unwrap();
            let gamma: Vec<f64> = crate::eigen::solve_interval_on(&p, 0.0, &grid.z)
                .unwrap()
                .gamma;
            let mut s = SimState::new(plateau_gamma(grid, &gamma, 1.0, -4.0, 4.0));
            for _ in 0..200 {
                s = scheme.step(s).unwrap();
            }
            assert!(
                s.max_clip_fraction < budget,
                "B = {b_slope}: clip fraction {} above {budget}",
                s.max_clip_fraction
            );
        }
    }

    #[test]
    fn oversized_dt_triggers_instability_error() {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.25).unwrap(),
            Kernel::constant(1e-6).unwrap(),
            0.0,
        )
        .unwrap();
        let grid = Grid2D::boxed(6.0, 6.0, 31, 31).unwrap();
        // growth ~ e^t with nearly no competition: a huge dt amplifies
        // every step until the blow-up guard fires
        let scheme = StepScheme::new(&p, grid, 8.0).unwrap();
        let gamma: Vec<f64> = grid.z.nodes().map(|z| (-z * z / 2.0).exp()).collect();
        let mut s = SimState::new(plateau_gamma(grid, &gamma, 1.0, -4.0, 4.0));
        let mut hit = false;
        for _ in 0..50 {
            match scheme.step(s) {
                Ok(next) => s = next,
                Err(Error::Instability { sup, .. }) => {
                    assert!(sup > 1e6);
                    hit = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(hit, "blow-up guard never fired");
    }

    #[test]
    fn invasion_errors_when_front_reaches_boundary() {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 0.25).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        // far too short in x for a t = 40 run
        let grid = Grid2D::boxed(8.0, 14.0, 65, 113).unwrap();
        let scheme = StepScheme::new(&p, grid, 0.01).unwrap();
        assert!(matches!(
            run_invasion(&p, grid, &scheme, 40.0, 0.01, &SimOptions::default()),
            Err(Error::DomainTooSmall(_))
        ));
    }

    #[test]
    fn extinction_zero_initial_datum_is_flagged() {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, 1.0).unwrap(),
            Kernel::constant(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        let grid = Grid2D::boxed(6.0, 10.0, 31, 51).unwrap();
        let scheme = StepScheme::new(&p, grid, 0.01).unwrap();
        let opts = SimOptions {
            amplitude: Some(0.0),
            ..Default::default()
        };
        let (_, fit) = run_extinction(&p, grid, &scheme, 1.0, &opts).unwrap();
        assert_eq!(fit.flag, FitFlag::ZeroField);
        assert!(fit.rate.is_none());
    }
}

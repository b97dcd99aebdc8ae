//! Task runners: each consumes the validated config, runs the solvers and
//! writes artifacts into the output directory.

use anyhow::{bail, Context};
use serde_json::json;

use clinewave::discretize::{Grid1D, Grid2D};
use clinewave::eigen::{self, Classification, LineConfig};

use clinewave::simulate::{self, SimOptions, StepScheme};
use clinewave::waves::{self, DiagnosticReport, HomotopyConfig, LadderConfig, WaveSolution};

use crate::config::RunConfig;
use crate::output::OutputDir;

pub fn run_eigen(cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<()> {
    let section = cfg.eigen.as_ref().expect("validated");
    let p = cfg.model.build()?;
    let line_cfg = section.line_config();

    let results = match section.mode.as_str() {
        "line" => {
            let pair = eigen::solve_line(&p, section.nu, &line_cfg)?;
            let class = eigen::classify(&p, &line_cfg)?;
            if section.gamma_csv {
                let rows: Vec<Vec<f64>> = pair
                    .grid
                    .nodes()
                    .zip(&pair.gamma)
                    .map(|(z, g)| vec![z, *g])
                    .collect();
                out.write_csv("gamma.csv", "z,gamma", &rows)?;
            }
            json!({
                "mode": "line",
                "nu": section.nu,
                "lambda": pair.lambda,
                "error_estimate": pair.error_estimate,
                "residual": pair.residual,
                "classification": class,
                "c_star": class.c_star(),
                "grid": { "b": pair.grid.hi(), "n": pair.grid.len(), "h": pair.grid.h() },
            })
        }
        "interval" => {
            let b = section.b.context("validation error: [eigen] interval mode needs `b`")?;
            let n = section.n.context("validation error: [eigen] interval mode needs `n`")?;
            let pair = eigen::solve_interval(&p, section.nu, b, n)?;
            if section.gamma_csv {
                let rows: Vec<Vec<f64>> = pair
                    .grid
                    .nodes()
                    .zip(&pair.gamma)
                    .map(|(z, g)| vec![z, *g])
                    .collect();
                out.write_csv("gamma.csv", "z,gamma", &rows)?;
            }
            json!({
                "mode": "interval",
                "nu": section.nu,
                "lambda": pair.lambda,
                "residual": pair.residual,
                "grid": { "b": b, "n": n, "h": pair.grid.h() },
            })
        }
        "box2d" => {
            let r_half = section
                .r_half
                .context("validation error: [eigen] box2d mode needs `r_half`")?;
            let n = section
                .n_box
                .context("validation error: [eigen] box2d mode needs `n_box`")?;
            let pair = eigen::solve_box_2d(&p, r_half, n)?;
            if section.gamma_csv {
                let grid = pair.upsilon.grid;
                let mut rows = Vec::new();
                for i in 0..grid.nx() {
                    for j in 0..grid.nz() {
                        rows.push(vec![grid.x.node(i), grid.z.node(j), pair.upsilon.get(i, j)]);
                    }
                }
                out.write_csv("upsilon.csv", "x,z,upsilon", &rows)?;
            }
            json!({
                "mode": "box2d",
                "mu": pair.mu,
                "r_half": pair.r_half,
                "residual": pair.residual,
            })
        }
        other => bail!("validation error: unknown [eigen] mode `{other}`"),
    };
    out.write_summary("eigen", cfg.seed, results)
}

fn homotopy_config(section: &crate::config::WaveSection) -> HomotopyConfig {
    let d = HomotopyConfig::default();
    HomotopyConfig {
        gamma_reg: section.gamma_reg,
        epsilon: section.epsilon,
        tau_step: section.tau_step.unwrap_or(d.tau_step),
        tau_step_min: section.tau_step_min.unwrap_or(d.tau_step_min),
        newton_tol: section.newton_tol.unwrap_or(d.newton_tol),
        ..d
    }
}

fn diagnostics_json(d: &DiagnosticReport) -> serde_json::Value {
    serde_json::to_value(d).unwrap_or_else(|_| json!({}))
}

fn dump_wave(out: &OutputDir, sol: &WaveSolution, write_grid: bool) -> anyhow::Result<()> {
    if write_grid {
        let grid = sol.u.grid;
        let mut rows = Vec::with_capacity(grid.nx() * grid.nz());
        for i in 0..grid.nx() {
            for j in 0..grid.nz() {
                rows.push(vec![grid.x.node(i), grid.z.node(j), sol.u.get(i, j)]);
            }
        }
        out.write_csv("u_grid.csv", "x,z,u", &rows)?;
    }
    let grid = sol.u.grid;
    let rows: Vec<Vec<f64>> = (0..grid.nx())
        .map(|i| vec![grid.x.node(i), sol.diagnostics.mass_profile[i]])
        .collect();
    out.write_csv("mass_profile.csv", "x,mass", &rows)?;
    Ok(())
}

pub fn run_wave(cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<()> {
    let section = cfg.wave.as_ref().expect("validated");
    let p = cfg.model.build()?;
    let homotopy = homotopy_config(section);

    let results = match section.mode.as_str() {
        "minimal" => {
            let ladder = LadderConfig {
                rungs: section
                    .ladder
                    .clone()
                    .unwrap_or_else(|| LadderConfig::default().rungs),
                hx: section.hx,
                hz: section.hz,
                c_tol: section.c_tol.unwrap_or(5e-3),
                u_tol: section.u_tol.unwrap_or(5e-2),
                epsilon_fraction: 0.0025,
                homotopy,
            };
            let (sol, rungs) = waves::refine_to_strip(&p, &ladder)?;
            dump_wave(out, &sol, section.grid_csv)?;
            json!({
                "mode": "minimal",
                "c": sol.c,
                "epsilon": sol.epsilon,
                "tau": sol.tau,
                "residual": sol.residual,
                "diagnostics_pass": sol.diagnostics.passed(),
                "diagnostics": diagnostics_json(&sol.diagnostics),
                "rungs": serde_json::to_value(&rungs)?,
            })
        }
        "fast" => {
            let a = section.a.context("validation error: [wave] fast mode needs `a`")?;
            let b = section.b.context("validation error: [wave] fast mode needs `b`")?;
            let c = section.c.context("validation error: [wave] fast mode needs `c`")?;
            let grid = Grid2D::new(
                Grid1D::symmetric_with_spacing(a, section.hx)?,
                Grid1D::symmetric_with_spacing(b, section.hz)?,
            );
            let fast_cfg = waves::FastWaveConfig::default();
            let sol = waves::solve_fast_wave(&p, c, grid, &fast_cfg)?;
            dump_wave(out, &sol, section.grid_csv)?;
            json!({
                "mode": "fast",
                "c": sol.c,
                "epsilon": sol.epsilon,
                "tau": sol.tau,
                "residual": sol.residual,
                "diagnostics_pass": sol.diagnostics.passed(),
                "diagnostics": diagnostics_json(&sol.diagnostics),
            })
        }
        other => bail!("validation error: unknown [wave] mode `{other}`"),
    };
    out.write_summary("wave", cfg.seed, results)
}

pub fn run_simulate(cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<()> {
    let section = cfg.simulate.as_ref().expect("validated");
    let p = cfg.model.build()?;
    let line_cfg = LineConfig::default();

    let opts = SimOptions {
        output_every: section.output_every,
        amplitude: section.amplitude,
        snapshot_every: section.dump_every,
        ..Default::default()
    };

    let (state, results) = match section.mode.as_str() {
        "invasion" => {
            let class = eigen::classify(&p, &line_cfg)?;
            let c_star = match class {
                Classification::Invading { c_star, .. } => c_star,
                other => bail!("invasion run needs the invading regime, got {other:?}"),
            };
            let grid =
                simulate::suggest_grid(&p, section.t_final, Some(c_star), section.hx, section.hz)?;
            let dt = match section.dt {
                Some(dt) => dt,
                None => simulate::suggest_dt(&p, &grid)?,
            };
            let scheme = StepScheme::new(&p, grid, dt)?;
            let (state, fit) =
                simulate::run_invasion(&p, grid, &scheme, section.t_final, section.theta, &opts)?;
            let results = json!({
                "mode": "invasion",
                "c_star": c_star,
                "fit": serde_json::to_value(fit)?,
                "relative_speed_error": (fit.speed - c_star).abs() / c_star,
                "dt": dt,
                "theta": section.theta,
                "grid": {
                    "x_lo": grid.x.lo(), "x_hi": grid.x.hi(), "nx": grid.nx(),
                    "b": grid.z.hi(), "nz": grid.nz(),
                },
                "max_clip_fraction": state.max_clip_fraction,
            });
            (state, results)
        }
        "extinction" => {
            let class = eigen::classify(&p, &line_cfg)?;
            let lambda = match class {
                Classification::Extinct { lambda } => lambda,
                other => bail!("extinction run needs the extinct regime, got {other:?}"),
            };
            let grid = simulate::suggest_grid(&p, section.t_final, None, section.hx, section.hz)?;
            let dt = match section.dt {
                Some(dt) => dt,
                None => simulate::suggest_dt(&p, &grid)?,
            };
            let scheme = StepScheme::new(&p, grid, dt)?;
            let (state, fit) = simulate::run_extinction(&p, grid, &scheme, section.t_final, &opts)?;
            let results = json!({
                "mode": "extinction",
                "lambda": lambda,
                "fit": serde_json::to_value(fit)?,
                "relative_rate_error": fit.rate.map(|r| (r - lambda).abs() / lambda),
                "dt": dt,
                "grid": {
                    "x_lo": grid.x.lo(), "x_hi": grid.x.hi(), "nx": grid.nx(),
                    "b": grid.z.hi(), "nz": grid.nz(),
                },
                "max_clip_fraction": state.max_clip_fraction,
            });
            (state, results)
        }
        other => bail!("validation error: unknown [simulate] mode `{other}`"),
    };

    // time series: front position (NaN when absent), sup ratio, total mass
    let mut rows = Vec::new();
    for (k, (t, ratio)) in state.norm_history.iter().enumerate() {
        let front = state
            .front_history
            .iter()
            .find(|(tf, _)| (tf - t).abs() < 1e-12)
            .map(|(_, x)| *x)
            .unwrap_or(f64::NAN);
        let mass = state.mass_history.get(k).map(|(_, m)| *m).unwrap_or(f64::NAN);
        rows.push(vec![*t, front, *ratio, mass]);
    }
    out.write_csv("timeseries.csv", "t,front_x,sup_ratio,total_mass", &rows)?;

    // periodic grid dumps, one file per kept snapshot
    for (idx, (t, field)) in state.snapshots.iter().enumerate() {
        let grid = field.grid;
        let mut rows = Vec::with_capacity(grid.nx() * grid.nz());
        for i in 0..grid.nx() {
            for j in 0..grid.nz() {
                rows.push(vec![grid.x.node(i), grid.z.node(j), field.get(i, j)]);
            }
        }
        out.write_csv(&format!("field_{idx:04}_t{t:.3}.csv"), "x,z,n", &rows)?;
    }
    out.write_summary("simulate", cfg.seed, results)
}

pub fn run_sweep(cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<()> {
    let section = cfg.sweep.as_ref().expect("validated");
    if section.a_count == 0 || section.b_count == 0 {
        bail!("validation error: [sweep] grid must be nonempty");
    }
    let mut line_cfg = LineConfig::default();
    if let Some(h) = section.h_target {
        line_cfg.h_target = h;
    }

    let a_of = |i: usize| {
        section.a_min
            + (section.a_max - section.a_min) * i as f64 / (section.a_count.max(2) - 1) as f64
    };
    let b_of = |j: usize| {
        section.b_min
            + (section.b_max - section.b_min) * j as f64 / (section.b_count.max(2) - 1) as f64
    };

    let points: Vec<(usize, usize)> = (0..section.b_count)
        .flat_map(|j| (0..section.a_count).map(move |i| (i, j)))
        .collect();

    let workers = std::env::var("CLINEWAVE_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("worker pool")?;

    #[derive(Clone)]
    struct Row {
        a: f64,
        b: f64,
        result: std::result::Result<Classification, String>,
    }

    let base = &cfg.model;
    let rows: Vec<Row> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (a_of(i), b_of(j));
                let result = sweep_point(base, a, b, &line_cfg).map_err(|e| e.to_string());
                Row { a, b, result }
            })
            .collect()
    });

    // per-row CSV
    let mut csv_rows = Vec::with_capacity(rows.len());
    for row in &rows {
        let (class, lambda, c_star) = match &row.result {
            Ok(c) => (
                match c {
                    Classification::Extinct { .. } => "extinct".to_string(),
                    Classification::Invading { .. } => "invading".to_string(),
                    Classification::Marginal { .. } => "marginal".to_string(),
                },
                format!("{:.17e}", c.lambda()),
                c.c_star().map(|v| format!("{v:.17e}")).unwrap_or_default(),
            ),
            Err(e) => (format!("error: {}", e.replace(',', ";")), String::new(), String::new()),
        };
        csv_rows.push(vec![
            format!("{:.17e}", row.a),
            format!("{:.17e}", row.b),
            lambda,
            class,
            c_star,
        ]);
    }
    out.write_csv_rows("sweep.csv", "a_sel,b_slope,lambda,classification,c_star", &csv_rows)?;

    // empirical boundary per b row: the sign flip of lambda along a,
    // against the dichotomy curve a (b^2+1) = 1
    let cell = (section.a_max - section.a_min) / (section.a_count.max(2) - 1) as f64;
    let mut boundary_rows = Vec::new();
    let mut max_distance = 0.0f64;
    let mut flips = 0usize;
    for j in 0..section.b_count {
        let b = b_of(j);
        let analytic = 1.0 / (b * b + 1.0);
        let mut empirical: Option<f64> = None;
        for i in 0..section.a_count.saturating_sub(1) {
            let here = &rows[j * section.a_count + i];
            let next = &rows[j * section.a_count + i + 1];
            if let (Ok(c0), Ok(c1)) = (&here.result, &next.result) {
                let flip = matches!(c0, Classification::Invading { .. })
                    && !matches!(c1, Classification::Invading { .. });
                if matches!(c0, Classification::Marginal { .. }) {
                    empirical = Some(here.a);
                    break;
                }
                if flip {
                    empirical = Some(0.5 * (here.a + next.a));
                    break;
                }
            }
        }
        if let Some(a_emp) = empirical {
            let distance = (a_emp - analytic).abs();
            if analytic >= section.a_min && analytic <= section.a_max {
                max_distance = max_distance.max(distance);
                flips += 1;
            }
            boundary_rows.push(vec![b, a_emp, analytic, distance]);
        }
    }
    out.write_csv("boundary.csv", "b_slope,a_empirical,a_analytic,distance", &boundary_rows)?;

    let n_err = rows.iter().filter(|r| r.result.is_err()).count();
    let results = json!({
        "points": rows.len(),
        "errors": n_err,
        "workers": workers,
        "lattice_cell_a": cell,
        "boundary_rows": flips,
        "max_boundary_distance": max_distance,
        "boundary_within_one_cell": max_distance <= cell,
    });
    out.write_summary("sweep", cfg.seed, results)
}

fn sweep_point(
    base: &crate::config::ModelSection,
    a_sel: f64,
    b_slope: f64,
    line_cfg: &LineConfig,
) -> anyhow::Result<Classification> {
    use clinewave::model::{GrowthProfile, Kernel, ModelParams};
    // the sweep varies (A, B) over the quadratic template; kernel and r_max
    // come from the base model section
    let (r_max, kernel) = match (&base.growth, &base.kernel) {
        (crate::config::GrowthSection::Quadratic { r_max, .. }, k) => {
            let kernel = match k {
                crate::config::KernelSection::Constant { value } => Kernel::constant(*value)?,
                crate::config::KernelSection::Gaussian {
                    base,
                    amplitude,
                    width,
                } => {
                    let (b, a, w) = (*base, *amplitude, *width);
                    Kernel::function(b, b + a, move |z, zp| {
                        b + a * (-((z - zp) * (z - zp)) / (2.0 * w * w)).exp()
                    })?
                }
            };
            (*r_max, kernel)
        }
        _ => bail!("sweep needs a quadratic growth template"),
    };
    let growth = GrowthProfile::quadratic(
        r_max,
        a_sel,
        clinewave::model::largest_admissible_delta(r_max, a_sel),
    )?;
    let p = ModelParams::new(growth, kernel, b_slope)?;
    Ok(eigen::classify(&p, line_cfg)?)
}

pub fn dispatch(task: crate::config::Task, cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<()> {
    match task {
        crate::config::Task::Eigen => run_eigen(cfg, out),
        crate::config::Task::Wave => run_wave(cfg, out),
        crate::config::Task::Simulate => run_simulate(cfg, out),
        crate::config::Task::Sweep => run_sweep(cfg, out),
    }
}


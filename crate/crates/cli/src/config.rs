//! Run configuration: one TOML file, one task per invocation.

use anyhow::{bail, Context};
use serde::Deserialize;

use clinewave::eigen::LineConfig;
use clinewave::model::{GrowthProfile, Kernel, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Eigen,
    Wave,
    Simulate,
    Sweep,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Task::Eigen => "eigen",
            Task::Wave => "wave",
            Task::Simulate => "simulate",
            Task::Sweep => "sweep",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must match the subcommand.
    pub task: Option<Task>,
    /// Reserved for randomized initial data; recorded in the summary so
    /// reruns are reproducible.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub eigen: Option<EigenSection>,
    pub wave: Option<WaveSection>,
    pub simulate: Option<SimulateSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub b_slope: f64,
    /// Confinement constant; defaults to the largest admissible value for
    /// quadratic profiles.
    pub delta: Option<f64>,
    pub growth: GrowthSection,
    pub kernel: KernelSection,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthSection {
    Quadratic { r_max: f64, a_sel: f64 },
    Tabulated { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSection {
    Constant {
        value: f64,
    },
    /// `k(z, z') = base + amplitude * exp(-(z - z')^2 / (2 width^2))`,
    /// with exact pinch bounds `[base, base + amplitude]`.
    Gaussian {
        base: f64,
        amplitude: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSection {
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_eigen_mode")]
    pub mode: String,
    /// Interval mode half-width and node count.
    pub b: Option<f64>,
    pub n: Option<usize>,
    /// 2D box mode half-width and nodes per side.
    pub r_half: Option<f64>,
    pub n_box: Option<usize>,
    pub b0: Option<f64>,
    pub b_cap: Option<f64>,
    pub h_target: Option<f64>,
    pub rel_tol: Option<f64>,
    #[serde(default = "default_true")]
    pub gamma_csv: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSection {
    #[serde(default = "default_wave_mode")]
    pub mode: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    #[serde(default = "default_h")]
    pub hx: f64,
    #[serde(default = "default_h")]
    pub hz: f64,
    pub epsilon: Option<f64>,
    #[serde(default = "default_gamma_reg")]
    pub gamma_reg: f64,
    pub tau_step: Option<f64>,
    pub tau_step_min: Option<f64>,
    pub newton_tol: Option<f64>,
    /// Speed for fast mode (must exceed the minimal speed).
    pub c: Option<f64>,
    /// Ladder of (a, b) rungs for minimal mode.
    pub ladder: Option<Vec<(f64, f64)>>,
    pub c_tol: Option<f64>,
    pub u_tol: Option<f64>,
    #[serde(default = "default_true")]
    pub grid_csv: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub mode: String,
    pub t_final: f64,
    pub dt: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default = "default_h_sim")]
    pub hx: f64,
    #[serde(default = "default_h_sim")]
    pub hz: f64,
    pub amplitude: Option<f64>,
    /// Write a full grid dump every this many records (0 = never).
    #[serde(default)]
    pub dump_every: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub a_min: f64,
    pub a_max: f64,
    pub a_count: usize,
    pub b_min: f64,
    pub b_max: f64,
    pub b_count: usize,
    pub h_target: Option<f64>,
}

fn default_eigen_mode() -> String {
    "line".into()
}
fn default_wave_mode() -> String {
    "minimal".into()
}
fn default_true() -> bool {
    true
}
fn default_h() -> f64 {
    0.2
}
fn default_h_sim() -> f64 {
    0.25
}
fn default_gamma_reg() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.01
}
fn default_output_every() -> usize {
    20
}

impl ModelSection {
    pub fn build(&self) -> anyhow::Result<ModelParams> {
        let growth = match &self.growth {
            GrowthSection::Quadratic { r_max, a_sel } => {
                let delta = self
                    .delta
                    .unwrap_or_else(|| clinewave::model::largest_admissible_delta(*r_max, *a_sel));
                GrowthProfile::quadratic(*r_max, *a_sel, delta)
                    .context("invalid [model.growth]")?
            }
            GrowthSection::Tabulated { samples } => {
                let delta = self
                    .delta
                    .context("validation error: [model] needs `delta` for tabulated growth")?;
                GrowthProfile::tabulated(samples.clone(), delta)
                    .context("invalid [model.growth]")?
            }
        };
        let kernel = match &self.kernel {
            KernelSection::Constant { value } => {
                Kernel::constant(*value).context("invalid [model.kernel]")?
            }
            KernelSection::Gaussian {
                base,
                amplitude,
                width,
            } => {
                if !(*width > 0.0) || !(*amplitude >= 0.0) {
                    bail!("validation error: [model.kernel] gaussian needs width > 0, amplitude >= 0");
                }
                let (b, a, w) = (*base, *amplitude, *width);
                Kernel::function(b, b + a, move |z, zp| {
                    b + a * (-((z - zp) * (z - zp)) / (2.0 * w * w)).exp()
                })
                .context("invalid [model.kernel]")?
            }
        };
        ModelParams::new(growth, kernel, self.b_slope).context("invalid [model]")
    }
}

impl EigenSection {
    pub fn line_config(&self) -> LineConfig {
        let d = LineConfig::default();
        LineConfig {
            b0: self.b0.unwrap_or(d.b0),
            b_cap: self.b_cap.unwrap_or(d.b_cap),
            h_target: self.h_target.unwrap_or(d.h_target),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            boundary_rel: d.boundary_rel,
        }
    }
}

/// Parse and validate a config file for a given task.
pub fn load(path: &std::path::Path, task: Task) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("parse error in {}: {e}", path.display()))?;
    if let Some(declared) = cfg.task {
        if declared != task {
            bail!("validation error: config declares task `{declared}` but `{task}` was invoked");
        }
    }
    let section_present = match task {
        Task::Eigen => cfg.eigen.is_some(),
        Task::Wave => cfg.wave.is_some(),
        Task::Simulate => cfg.simulate.is_some(),
        Task::Sweep => cfg.sweep.is_some(),
    };
    if !section_present {
        bail!("validation error: missing section `{task}` in {}", path.display());
    }
    Ok(cfg)
}

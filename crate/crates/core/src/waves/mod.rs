//! Travelling-wave profiles: the local problem by monotone iteration, the
//! homotopy from the local regularization to the full nonlocal box problem
//! with the speed pinned by the normalization `u(0,0) = eps`, the strip
//! refinement toward the minimal-speed wave, the fast-wave construction for
//! `c > c*`, and the a priori bounds as runtime diagnostics.

mod bounds;
mod context;
mod diagnostics;
mod fast;
mod homotopy;
mod local;
mod strip;

pub use bounds::{
    rotate_to_xy, rotate_to_xz, rotated_cover_grid, subsolution_h, supersolution_w,
    FastWaveFrame, SubsolutionParams,
};
pub use context::WaveContext;
pub use diagnostics::{BoundCheck, DiagnosticReport};
pub use fast::{solve_fast_wave, FastWaveConfig};
pub use homotopy::{solve_box_homotopy, solve_local, HomotopyConfig};
pub use strip::{refine_to_strip, LadderConfig, LadderRung};

use crate::discretize::Field2D;
use crate::eigen::EigenPair;
use crate::error::Result;
use crate::model::ModelParams;

/// A travelling-wave profile on a box, with its speed and diagnostics.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub c: f64,
    pub u: Field2D,
    /// Normalization value `u(0,0)`.
    pub epsilon: f64,
    /// Homotopy parameter reached (1 for the full nonlocal problem).
    pub tau: f64,
    /// Sup norm of the discrete travelling-wave residual over the interior.
    pub residual: f64,
    pub diagnostics: DiagnosticReport,
}

/// Dirichlet data for the left edge of the box: the interval eigenfunction
/// with confinement shift `delta/3` on the z-grid.
pub fn boundary_profile(p: &ModelParams, b: f64, n: usize) -> Result<EigenPair> {
    crate::eigen::solve_interval(p, p.delta() / 3.0, b, n)
}

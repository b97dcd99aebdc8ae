//! Sub- and supersolutions for the fast-wave construction (`c > c*`), and
//! the shear change of variables between the cline frame `(x, z)` and the
//! rotated frame `(x, y)` in which the drift operator has no cross term.

use crate::discretize::{Field2D, Grid1D, Grid2D};
use crate::eigen::{line_pair, GammaLine, LineConfig, MinimalSpeed};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Rotated-frame data for a fixed speed `c > c*`: the decay exponent `mu`
/// (largest root of `mu^2 + c s mu + (c*^2/4) s^2 = 0` with `s^2 = B^2+1`),
/// the line eigenpair, and evaluators for the bounding functions.
#[derive(Debug, Clone)]
pub struct FastWaveFrame {
    pub c: f64,
    pub c_star: f64,
    /// Largest (least negative) root.
    pub mu: f64,
    /// Smallest root.
    pub mu_minus: f64,
    /// `sqrt(B^2 + 1)`.
    pub s: f64,
    pub b_slope: f64,
    pub lambda0: f64,
    pub gamma0: GammaLine,
    k_upper: f64,
}

impl FastWaveFrame {
    pub fn new(p: &ModelParams, c: f64, line_cfg: &LineConfig) -> Result<Self> {
        let (lambda0, gamma0) = line_pair(p, 0.0, line_cfg)?;
        let c_star = match crate::eigen::minimal_speed(lambda0, p.b_slope) {
            MinimalSpeed::Speed(v) => v,
            MinimalSpeed::Extinct => {
                return Err(Error::ExtinctionRegime { lambda: lambda0 })
            }
        };
        if c <= c_star {
            return Err(Error::InvalidParameter(format!(
                "fast waves need c > c* (c = {c}, c* = {c_star})"
            )));
        }
        let s = p.bb().sqrt();
        // mu^2 + c s mu + (c*^2/4) s^2 = 0
        let disc = (c * c - c_star * c_star).sqrt() * s;
        let mu = 0.5 * (-c * s + disc);
        let mu_minus = 0.5 * (-c * s - disc);
        Ok(Self {
            c,
            c_star,
            mu,
            mu_minus,
            s,
            b_slope: p.b_slope,
            lambda0,
            gamma0,
            k_upper: p.kernel.upper(),
        })
    }

    /// Rotated abscissa of a cline-frame point:
    /// `X = s x + B z / s`.
    pub fn x_rot(&self, x: f64, z: f64) -> f64 {
        self.s * x + self.b_slope * z / self.s
    }

    /// Supersolution in the rotated frame: `w(x,y) = e^{mu x} Gamma0(s y)`.
    pub fn w_xy(&self, x: f64, y: f64) -> f64 {
        (self.mu * x).exp() * self.gamma0.eval(self.s * y)
    }

    /// Supersolution transported to the cline frame:
    /// `e^{mu (s x + B z / s)} Gamma0(z)`, the exponential bound.
    pub fn w_xz(&self, x: f64, z: f64) -> f64 {
        (self.mu * self.x_rot(x, z)).exp() * self.gamma0.eval(z)
    }

    /// Bound constant of the kernel-weighted supersolution integral:
    /// `C = k^+ int e^{mu B z / s} Gamma0(z) dz`.
    pub fn integral_constant(&self) -> f64 {
        let a = self.mu * self.b_slope / self.s;
        let integral = match &self.gamma0 {
            GammaLine::Gaussian { kappa } => {
                // int e^{a z - kappa z^2 / 2} dz
                (2.0 * std::f64::consts::PI / kappa).sqrt() * (a * a / (2.0 * kappa)).exp()
            }
            GammaLine::Sampled(pair) => {
                let w = crate::discretize::quadrature_weights(&pair.grid);
                pair.grid
                    .nodes()
                    .zip(&pair.gamma)
                    .zip(&w)
                    .map(|((z, g), wi)| wi * (a * z).exp() * g)
                    .sum()
            }
        };
        self.k_upper * integral
    }

    /// Admissible subsolution parameters for a strip of half-height `b`:
    /// the exponent tweak must keep `rho > 0`, and the amplitude `A` must
    /// push the positive part of `h` into the region where the supersolution
    /// integral is dominated, `x >= (1/mu) ln(rho/C) + B b / s`.
    pub fn subsolution_params(&self, b: f64, eps_exp: Option<f64>) -> Result<SubsolutionParams> {
        let eps_max = (-self.mu).min(self.mu - self.mu_minus);
        let eps = eps_exp.unwrap_or(0.5 * eps_max);
        if !(eps > 0.0) || eps >= eps_max {
            return Err(Error::InvalidParameter(format!(
                "eps_exp = {eps} violates 0 < eps < min(-mu, mu - mu_minus) = {eps_max}"
            )));
        }
        let me = self.mu - eps;
        let rho = -(me * me + self.c * self.s * me + self.c_star * self.c_star / 4.0 * self.s * self.s);
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_exp = {eps} leaves rho = {rho} <= 0; the subsolution inequality fails"
            )));
        }
        let c_int = self.integral_constant();
        let x_good = (rho / c_int).ln() / self.mu + self.b_slope * b / self.s;
        let a_min = (eps * x_good).exp().max(1.0 + 1e-9);
        Ok(SubsolutionParams {
            eps_exp: eps,
            a_min,
            rho,
            integral_constant: c_int,
            x_good,
        })
    }

    /// Subsolution in the rotated frame:
    /// `h(x,y) = (A^{-1} e^{mu x} - e^{(mu - eps) x}) Gamma0(s y)`.
    pub fn h_xy(&self, a_coeff: f64, eps_exp: f64, x: f64, y: f64) -> f64 {
        ((self.mu * x).exp() / a_coeff - ((self.mu - eps_exp) * x).exp())
            * self.gamma0.eval(self.s * y)
    }

    /// Positive part of the subsolution in the cline frame.
    pub fn h0_xz(&self, a_coeff: f64, eps_exp: f64, x: f64, z: f64) -> f64 {
        let xr = self.x_rot(x, z);
        (((self.mu * xr).exp() / a_coeff - ((self.mu - eps_exp) * xr).exp())
            * self.gamma0.eval(z))
        .max(0.0)
    }

    /// Sign-change abscissa of `h`: nonnegative iff `x >= ln(A) / eps`.
    pub fn h_sign_change(&self, a_coeff: f64, eps_exp: f64) -> f64 {
        a_coeff.ln() / eps_exp
    }
}

/// Admissibility data for the subsolution.
#[derive(Debug, Clone, Copy)]
pub struct SubsolutionParams {
    pub eps_exp: f64,
    /// Smallest admissible amplitude `A`.
    pub a_min: f64,
    pub rho: f64,
    pub integral_constant: f64,
    /// Right of this abscissa the subsolution inequality holds.
    pub x_good: f64,
}

/// Evaluate the supersolution `w(x, y) = e^{mu x} Gamma0(sqrt(B^2+1) y)`
/// for `c > c*`.
pub fn supersolution_w(p: &ModelParams, c: f64, x: f64, y: f64) -> Result<f64> {
    let frame = FastWaveFrame::new(p, c, &LineConfig::default())?;
    Ok(frame.w_xy(x, y))
}

/// Evaluate the subsolution `h(x, y)`, validating `(eps_exp, A)`
/// admissibility for the trait half-width `b`.
pub fn subsolution_h(
    p: &ModelParams,
    c: f64,
    a_coeff: f64,
    eps_exp: f64,
    b: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    let frame = FastWaveFrame::new(p, c, &LineConfig::default())?;
    let params = frame.subsolution_params(b, Some(eps_exp))?;
    if a_coeff < params.a_min {
        return Err(Error::InvalidParameter(format!(
            "A = {a_coeff} below the admissible threshold {}; the positive set of h \
             would leave the region x >= (1/mu) ln(rho/C) + B b / sqrt(B^2+1) = {}",
            params.a_min, params.x_good
        )));
    }
    Ok(frame.h_xy(a_coeff, eps_exp, x, y))
}

/// Grid covering the sheared image of a cline-frame box, at comparable
/// resolution: `|y| <= b / s` and `|x| <= s a + B b / s`.
pub fn rotated_cover_grid(grid: &Grid2D, b_slope: f64) -> Result<Grid2D> {
    let s = (b_slope * b_slope + 1.0).sqrt();
    let a = grid.x.hi();
    let b = grid.z.hi();
    let x_half = s * a + b_slope * b / s;
    let y_half = b / s;
    let x = Grid1D::symmetric_with_spacing(x_half, grid.x.h())?;
    let y = Grid1D::symmetric_with_spacing(y_half, grid.z.h() / s)?;
    Ok(Grid2D::new(x, y))
}

/// Resample a cline-frame field to the rotated frame:
/// `v(x, y) = u((x - B y) / s, s y)`. Returns the count of target nodes
/// whose preimage fell outside the source grid (clamped).
pub fn rotate_to_xy(u: &Field2D, b_slope: f64, target: &Grid2D) -> (Field2D, usize) {
    let s = (b_slope * b_slope + 1.0).sqrt();
    let mut clamped = 0usize;
    let v = Field2D::from_fn(*target, |x, y| {
        let (val, clip) = u.interp_clamped((x - b_slope * y) / s, s * y);
        if clip {
            clamped += 1;
        }
        val
    });
    (v, clamped)
}

/// Inverse resampling: `u(x, z) = v(s x + B z / s, z / s)`.
pub fn rotate_to_xz(v: &Field2D, b_slope: f64, target: &Grid2D) -> (Field2D, usize) {
    let s = (b_slope * b_slope + 1.0).sqrt();
    let mut clamped = 0usize;
    let u = Field2D::from_fn(*target, |x, z| {
        let (val, clip) = v.interp_clamped(s * x + b_slope * z / s, z / s);
        if clip {
            clamped += 1;
        }
        val
    });
    (u, clamped)
}

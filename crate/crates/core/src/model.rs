//! Model coefficients: the growth profile `r`, the competition kernel `k`,
//! the cline slope `B`, the confinement constant `delta`, structural
//! assumption checks and the biological rescaling to dimensionless form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Natural cubic spline through strictly increasing abscissae. Evaluation is
/// restricted to the sample range.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots (natural boundary conditions).
    d2: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::InvalidParameter(
                "spline needs at least two samples with matching lengths".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        // Solve the tridiagonal moment system for natural end conditions.
        let mut d2 = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            let mut sub = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[k] = 2.0 * (h0 + h1);
                sub[k] = h1;
                rhs[k] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            // Thomas algorithm; the system is diagonally dominant.
            for k in 1..m {
                let h0 = xs[k + 1] - xs[k];
                let w = h0 / diag[k - 1];
                diag[k] -= w * sub[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            d2[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                d2[k + 1] = (rhs[k] - sub[k] * d2[k + 2]) / diag[k];
            }
        }
        Ok(Self { xs, ys, d2 })
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < self.lo() || x > self.hi() {
            return Err(Error::OutOfRange {
                z: x,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        Ok(a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.d2[i] + (b * b * b - b) * self.d2[i + 1]) * h * h / 6.0)
    }
}

/// Growth rate `r(z)` together with the confinement constant `delta` of the
/// structural bound `r(z) <= 1/delta - delta z^2`.
#[derive(Debug, Clone)]
pub struct GrowthProfile {
    kind: GrowthKind,
    delta: f64,
}

#[derive(Debug, Clone)]
pub enum GrowthKind {
    /// `r(z) = r_max - a_sel z^2`
    Quadratic { r_max: f64, a_sel: f64 },
    Tabulated {
        spline: CubicSpline,
        samples: Vec<(f64, f64)>,
    },
}

/// Largest `delta` with `r_max <= 1/delta` and `delta <= a_sel` for a
/// quadratic profile. The eigenvalue family uses `delta/3` and `2 delta/3`
/// shifts, so the constant must be explicit.
pub fn largest_admissible_delta(r_max: f64, a_sel: f64) -> f64 {
    if r_max <= 0.0 {
        a_sel
    } else {
        a_sel.min(1.0 / r_max)
    }
}

impl GrowthProfile {
    pub fn quadratic(r_max: f64, a_sel: f64, delta: f64) -> Result<Self> {
        if !(r_max > 0.0) || !(a_sel > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadratic growth needs r_max > 0 and a_sel > 0 (got {r_max}, {a_sel})"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(Self {
            kind: GrowthKind::Quadratic { r_max, a_sel },
            delta,
        })
    }

    /// Quadratic profile with the largest admissible confinement constant.
    pub fn quadratic_auto_delta(r_max: f64, a_sel: f64) -> Result<Self> {
        Self::quadratic(r_max, a_sel, largest_admissible_delta(r_max, a_sel))
    }

    pub fn tabulated(samples: Vec<(f64, f64)>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let spline = CubicSpline::new(xs, ys)?;
        Ok(Self {
            kind: GrowthKind::Tabulated { spline, samples },
            delta,
        })
    }

    pub fn kind(&self) -> &GrowthKind {
        &self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Evaluate the growth rate. Tabulated profiles are clamped to their
    /// sample range: evaluation outside it is an error, not a guess.
    pub fn eval_r(&self, z: f64) -> Result<f64> {
        match &self.kind {
            GrowthKind::Quadratic { r_max, a_sel } => Ok(r_max - a_sel * z * z),
            GrowthKind::Tabulated { spline, .. } => spline.eval(z),
        }
    }

    /// Supremum of `r` (exact for quadratic, max over samples otherwise).
    pub fn max_r(&self) -> f64 {
        match &self.kind {
            GrowthKind::Quadratic { r_max, .. } => *r_max,
            GrowthKind::Tabulated { samples, .. } => samples
                .iter()
                .map(|s| s.1)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Whether the confinement bound `r(z) <= 1/delta - delta z^2` holds for
    /// the stored delta.
    pub fn confinement_holds(&self) -> bool {
        match &self.kind {
            GrowthKind::Quadratic { r_max, a_sel } => {
                self.delta <= *a_sel * (1.0 + 1e-12) && *r_max <= (1.0 / self.delta) * (1.0 + 1e-12)
            }
            GrowthKind::Tabulated { samples, .. } => samples
                .iter()
                .all(|&(z, r)| r <= 1.0 / self.delta - self.delta * z * z),
        }
    }
}

/// Competition kernel with pinch bounds `0 < k^- <= k(z,z') <= k^+`.
#[derive(Clone)]
pub enum Kernel {
    Constant(f64),
    Function {
        lower: f64,
        upper: f64,
        eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Constant(v) => write!(f, "Kernel::Constant({v})"),
            Kernel::Function { lower, upper, .. } => {
                write!(f, "Kernel::Function {{ lower: {lower}, upper: {upper} }}")
            }
        }
    }
}

impl Kernel {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constant kernel value {value} must be positive"
            )));
        }
        Ok(Kernel::Constant(value))
    }

    pub fn function(
        lower: f64,
        upper: f64,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lower > 0.0) || !(upper >= lower) {
            return Err(Error::InvalidParameter(format!(
                "kernel bounds need 0 < k^- <= k^+ (got {lower}, {upper})"
            )));
        }
        Ok(Kernel::Function {
            lower,
            upper,
            eval: Arc::new(eval),
        })
    }

    pub fn eval(&self, z: f64, zp: f64) -> f64 {
        match self {
            Kernel::Constant(v) => *v,
            Kernel::Function { eval, .. } => eval(z, zp),
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Kernel::Constant(v) => *v,
            Kernel::Function { lower, .. } => *lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Kernel::Constant(v) => *v,
            Kernel::Function { upper, .. } => *upper,
        }
    }
}

/// Full coefficient set of the moving-frame equation.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub growth: GrowthProfile,
    pub kernel: Kernel,
    /// Dimensionless cline slope `B >= 0`.
    pub b_slope: f64,
}

impl ModelParams {
    pub fn new(growth: GrowthProfile, kernel: Kernel, b_slope: f64) -> Result<Self> {
        if !(b_slope >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cline slope B = {b_slope} must be >= 0"
            )));
        }
        Ok(Self {
            growth,
            kernel,
            b_slope,
        })
    }

    pub fn delta(&self) -> f64 {
        self.growth.delta()
    }

    /// `B^2 + 1`, the z-diffusion coefficient of the moving-frame operator.
    pub fn bb(&self) -> f64 {
        self.b_slope * self.b_slope + 1.0
    }
}

/// One line of a validation report.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail record of the structural assumptions for a parameter set.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Check the structural assumptions: the confinement bound on `r`, the
/// kernel pinch bounds (spot-checked on a 101 x 101 grid over the operative
/// trait range), and the sign of the cline slope.
pub fn validate_assumptions(p: &ModelParams) -> ValidationReport {
    let mut checks = Vec::new();

    let delta = p.growth.delta();
    match p.growth.kind() {
        GrowthKind::Quadratic { r_max, a_sel } => {
            let ok = delta <= *a_sel * (1.0 + 1e-12) && *r_max <= (1.0 / delta) * (1.0 + 1e-12);
            checks.push(AssumptionCheck {
                name: "confinement bound r(z) <= 1/delta - delta z^2",
                passed: ok,
                detail: format!(
                    "quadratic: delta = {delta} vs a_sel = {a_sel}, r_max = {r_max} vs 1/delta = {}",
                    1.0 / delta
                ),
            });
        }
        GrowthKind::Tabulated { samples, .. } => {
            let violations: Vec<f64> = samples
                .iter()
                .filter(|&&(z, r)| r > 1.0 / delta - delta * z * z)
                .map(|s| s.0)
                .collect();
            checks.push(AssumptionCheck {
                name: "confinement bound r(z) <= 1/delta - delta z^2",
                passed: violations.is_empty(),
                detail: if violations.is_empty() {
                    format!("all {} samples satisfy the bound", samples.len())
                } else {
                    format!("violated at z in {violations:?}")
                },
            });
            let increasing = samples.windows(2).all(|w| w[1].0 > w[0].0);
            checks.push(AssumptionCheck {
                name: "tabulated samples strictly increasing in z",
                passed: increasing,
                detail: String::new(),
            });
        }
    }

    // Operative trait range: tabulated range, or |z| <= sqrt(6)/delta where
    // the Gaussian tail bound localizes the dynamics.
    let (zlo, zhi) = match p.growth.kind() {
        GrowthKind::Tabulated { samples, .. } => (samples[0].0, samples.last().unwrap().0),
        GrowthKind::Quadratic { .. } => {
            let zbar = 6.0f64.sqrt() / delta;
            (-zbar, zbar)
        }
    };
    let (lo, up) = (p.kernel.lower(), p.kernel.upper());
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    for i in 0..101 {
        let z = zlo + (zhi - zlo) * i as f64 / 100.0;
        for j in 0..101 {
            let zp = zlo + (zhi - zlo) * j as f64 / 100.0;
            let v = p.kernel.eval(z, zp);
            kmin = kmin.min(v);
            kmax = kmax.max(v);
        }
    }
    checks.push(AssumptionCheck {
        name: "kernel bounds 0 < k^- <= k <= k^+",
        passed: lo > 0.0 && kmin >= lo - 1e-12 * lo.abs() && kmax <= up + 1e-12 * up.abs(),
        detail: format!("declared [{lo}, {up}], observed [{kmin}, {kmax}] on 101x101 grid"),
    });

    checks.push(AssumptionCheck {
        name: "cline slope B >= 0",
        passed: p.b_slope >= 0.0,
        detail: format!("B = {}", p.b_slope),
    });

    ValidationReport { checks }
}

/// Dimensional parameters of the biological model before rescaling.
#[derive(Debug, Clone, Copy)]
pub struct BioParams {
    /// Space diffusion rate.
    pub sigma_x: f64,
    /// Mutation rate.
    pub sigma_m: f64,
    /// Maximal growth rate.
    pub r_max: f64,
    /// Selection-strength denominator (selection strength is `1/(2 V_s)`).
    pub v_s: f64,
    /// Cline steepness in original variables.
    pub b_cline: f64,
    /// Carrying capacity.
    pub k_cap: f64,
}

impl BioParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_x", self.sigma_x),
            ("sigma_m", self.sigma_m),
            ("r_max", self.r_max),
            ("v_s", self.v_s),
            ("b_cline", self.b_cline),
            ("k_cap", self.k_cap),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "BioParams.{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Dimensionless selection coefficient `A = sigma_m^2 / (4 r_max^2 V_s)`.
    pub fn a_sel(&self) -> f64 {
        self.sigma_m * self.sigma_m / (4.0 * self.r_max * self.r_max * self.v_s)
    }

    /// Dimensionless cline slope `B = (sigma_x / sigma_m) b`.
    pub fn b_slope(&self) -> f64 {
        self.sigma_x / self.sigma_m * self.b_cline
    }
}

/// Conversion factors between original and rescaled variables: the rescaled
/// time is `time * t`, the rescaled space is `space * x`, the rescaled trait
/// is `trait_ * y`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleFactors {
    pub time: f64,
    pub space: f64,
    pub trait_: f64,
}

use serde::Serialize;

/// Rescale dimensional parameters to the dimensionless model: quadratic
/// growth with `r_max = 1`, constant kernel `1/(K r_max)` and slope `B`.
pub fn rescale_bio(bio: &BioParams) -> Result<(ModelParams, ScaleFactors)> {
    bio.validate()?;
    let a_sel = bio.a_sel();
    let growth = GrowthProfile::quadratic(1.0, a_sel, largest_admissible_delta(1.0, a_sel))?;
    let kernel = Kernel::constant(1.0 / (bio.k_cap * bio.r_max))?;
    let params = ModelParams::new(growth, kernel, bio.b_slope())?;
    let scales = ScaleFactors {
        time: bio.r_max,
        space: (2.0 * bio.r_max).sqrt() / bio.sigma_x,
        trait_: (2.0 * bio.r_max).sqrt() / bio.sigma_m,
    };
    Ok((params, scales))
}

/// Minimal propagation speed in the original variables. `c_star` is the
/// dimensionless minimal speed of the rescaled model and is cross-checked
/// against the closed form to relative 1e-12.
pub fn speed_original_units(bio: &BioParams, c_star: f64) -> Result<f64> {
    bio.validate()?;
    let a = bio.a_sel();
    let bb = bio.b_slope().powi(2) + 1.0;
    let crit = a * bb;
    if crit > 1.0 {
        return Err(Error::ExtinctionRegime {
            lambda: crit.sqrt() - 1.0,
        });
    }
    let inner = 1.0 - bio.sigma_m / (2.0 * bio.r_max * bio.v_s.sqrt()) * bb.sqrt();
    let speed = (2.0 * bio.r_max).sqrt() * bio.sigma_x * inner.max(0.0).sqrt() / bb.sqrt();

    // Same quantity through the unit conversion of the dimensionless speed.
    let (_, scales) = rescale_bio(bio)?;
    let converted = c_star * scales.time / scales.space;
    let scale = speed.abs().max(converted.abs()).max(1e-300);
    if (speed - converted).abs() > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!(
            "c_star = {c_star} is inconsistent with BioParams: converted speed {converted} \
             vs closed form {speed}"
        )));
    }
    Ok(speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_r_quadratic_vertex_and_roots() {
        let g = GrowthProfile::quadratic(1.0, 0.25, 0.2).unwrap();
        assert_eq!(g.eval_r(0.0).unwrap(), 1.0);
        assert_eq!(g.eval_r(2.0).unwrap(), 0.0);
        let g = GrowthProfile::quadratic(1.0, 1.0, 0.5).unwrap();
        assert_eq!(g.eval_r(1.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_r_tabulated_matches_samples_and_errors_outside() {
        let samples: Vec<(f64, f64)> = (0..21)
            .map(|i| {
                let z = -2.0 + 0.2 * i as f64;
                (z, 1.0 - 0.3 * z * z)
            })
            .collect();
        let g = GrowthProfile::tabulated(samples, 0.2).unwrap();
        assert_relative_eq!(g.eval_r(1.0).unwrap(), 0.7, epsilon = 1e-12);
        // between samples the spline tracks the smooth generator closely
        assert_relative_eq!(g.eval_r(0.5).unwrap(), 1.0 - 0.3 * 0.25, epsilon = 1e-3);
        assert!(matches!(
            g.eval_r(3.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn tabulated_rejects_non_increasing_samples() {
        assert!(GrowthProfile::tabulated(vec![(0.0, 1.0), (0.0, 0.5)], 0.1).is_err());
    }

    fn quadratic_params(a_sel: f64, delta: f64, b: f64) -> ModelParams {
        ModelParams::new(
            GrowthProfile::quadratic(1.0, a_sel, delta).unwrap(),
            Kernel::constant(1.0).unwrap(),
            b,
        )
        .unwrap()
    }

    #[test]
    fn validate_accepts_admissible_delta() {
        let report = validate_assumptions(&quadratic_params(0.25, 0.2, 1.0));
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn validate_rejects_delta_above_a_sel() {
        let report = validate_assumptions(&quadratic_params(0.25, 0.3, 1.0));
        assert!(!report.passed());
        assert!(!report.checks[0].passed);
    }

    #[test]
    fn validate_constant_kernel_passes() {
        let p = quadratic_params(0.25, 0.2, 0.0);
        let report = validate_assumptions(&p);
        assert!(report.checks.iter().any(|c| c.name.contains("kernel") && c.passed));
        assert_eq!(p.kernel.lower(), 1.0);
        assert_eq!(p.kernel.upper(), 1.0);
    }

    #[test]
    fn validate_monotone_in_delta() {
        // any smaller positive delta keeps a passing profile passing
        for delta in [0.25, 0.1, 0.05, 0.01] {
            let report = validate_assumptions(&quadratic_params(0.25, delta, 1.0));
            assert!(report.passed(), "delta = {delta}");
        }
    }

    fn bio(sigma_x: f64, sigma_m: f64, r_max: f64, v_s: f64, b: f64, k: f64) -> BioParams {
        BioParams {
            sigma_x,
            sigma_m,
            r_max,
            v_s,
            b_cline: b,
            k_cap: k,
        }
    }

    #[test]
    fn rescale_bio_selection_coefficient() {
        let (p, _) = rescale_bio(&bio(1.0, 2.0, 1.0, 1.0, 0.1, 1.0)).unwrap();
        match p.growth.kind() {
            GrowthKind::Quadratic { r_max, a_sel } => {
                assert_eq!(*r_max, 1.0);
                assert_eq!(*a_sel, 1.0); // 4 / (4 * 1 * 1)
            }
            _ => panic!("expected quadratic growth"),
        }
    }

    #[test]
    fn rescale_bio_slope_equals_cline_when_rates_match() {
        let (p, _) = rescale_bio(&bio(1.3, 1.3, 1.0, 4.0, 0.7, 1.0)).unwrap();
        assert_relative_eq!(p.b_slope, 0.7, max_relative = 1e-14);
    }

    #[test]
    fn rescale_bio_unit_kernel() {
        let (p, _) = rescale_bio(&bio(1.0, 1.0, 1.0, 4.0, 0.1, 1.0)).unwrap();
        match p.kernel {
            Kernel::Constant(v) => assert_eq!(v, 1.0),
            _ => panic!("expected constant kernel"),
        }
    }

    fn closed_form_c_star(a: f64, b: f64) -> f64 {
        let bb = b * b + 1.0;
        let lambda = (a * bb).sqrt() - 1.0;
        2.0 * (-lambda / bb).sqrt()
    }

    #[test]
    fn speed_kpp_limit_as_selection_vanishes() {
        let b = bio(2.0f64.sqrt(), 2.0f64.sqrt(), 1.0, 1e18, 1e-18, 1.0);
        let c = speed_original_units(&b, closed_form_c_star(b.a_sel(), b.b_slope())).unwrap();
        assert!((c - 2.0).abs() < 1e-6, "c = {c}");
    }

    #[test]
    fn speed_zero_at_extinction_boundary() {
        // A (B^2+1) = 1 exactly
        let b = bio(1.0, 1.0, 1.0, 0.25, 1e-300, 1.0);
        assert_relative_eq!(b.a_sel(), 1.0, max_relative = 1e-14);
        let c = speed_original_units(&b, 0.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn speed_rejects_extinction_regime() {
        let b = bio(1.0, 1.0, 1.0, 0.2, 1.0, 1.0);
        assert!(b.a_sel() * (b.b_slope().powi(2) + 1.0) > 1.0);
        assert!(matches!(
            speed_original_units(&b, 1.0),
            Err(Error::ExtinctionRegime { .. })
        ));
    }

    #[test]
    fn speed_agrees_with_eigen_route_on_random_samples() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 30 {
            let b = BioParams {
                sigma_x: rng.random_range(0.2..3.0),
                sigma_m: rng.random_range(0.2..3.0),
                r_max: rng.random_range(0.2..3.0),
                v_s: rng.random_range(0.5..20.0),
                b_cline: rng.random_range(0.0..1.5f64).max(1e-6),
                k_cap: rng.random_range(0.2..5.0),
            };
            let a = b.a_sel();
            let bb = b.b_slope().powi(2) + 1.0;
            if a * bb >= 1.0 {
                continue; // invasion regime only
            }
            checked += 1;
            // the dimensionless route: closed-form line eigenvalue into the
            // minimal-speed formula, then unit conversion
            let lambda = crate::eigen::quadratic_line_lambda(1.0, a, b.b_slope(), 0.0);
            let c_star = match crate::eigen::minimal_speed(lambda, b.b_slope()) {
                crate::eigen::MinimalSpeed::Speed(c) => c,
                _ => unreachable!(),
            };
            let (_, scales) = rescale_bio(&b).unwrap();
            let converted = c_star * scales.time / scales.space;
            let direct = speed_original_units(&b, c_star).unwrap();
            assert_relative_eq!(direct, converted, max_relative = 1e-10);
        }
    }

    #[test]
    fn speed_cross_checks_against_dimensionless_route() {
        let b = bio(1.0, 1.0, 1.0, 4.0, 1e-300, 1.0);
        assert_relative_eq!(b.a_sel(), 1.0 / 16.0, max_relative = 1e-14);
        let c_star = closed_form_c_star(1.0 / 16.0, 0.0);
        let c = speed_original_units(&b, c_star).unwrap();
        // conversion: c_orig = c_star * time / space = c_star * sqrt(1/2)
        assert_relative_eq!(c, c_star * 0.5f64.sqrt(), max_relative = 1e-12);
        // inconsistent c_star is rejected
        assert!(speed_original_units(&b, c_star * 1.001).is_err());
    }
}

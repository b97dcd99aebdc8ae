//! Slower spreading-speed example: the weak-selection limit approaches the
//! classical front speed 2 as the selection coefficient vanishes (B = 0).

use clinewave::model::{GrowthProfile, Kernel, ModelParams};
use clinewave::simulate::{self, SimOptions, StepScheme};

#[test]
fn weak_selection_trend_toward_kpp_speed() {
    let t_final = 30.0;
    let mut fitted = Vec::new();
    for a_sel in [0.04, 0.01] {
        let p = ModelParams::new(
            GrowthProfile::quadratic_auto_delta(1.0, a_sel).unwrap(),
            Kernel::constant(1.0).unwrap(),
            0.0,
        )
        .unwrap();
        let c_star = 2.0 * (1.0 - a_sel.sqrt()).sqrt();
        let grid = simulate::suggest_grid(&p, t_final, Some(c_star), 0.25, 0.5).unwrap();
        let dt = simulate::suggest_dt(&p, &grid).unwrap();
        let scheme = StepScheme::new(&p, grid, dt).unwrap();
        let (_, fit) = simulate::run_invasion(
            &p,
            grid,
            &scheme,
            t_final,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        let rel = (fit.speed - c_star).abs() / c_star;
        assert!(
            rel < 0.12,
            "A = {a_sel}: fitted {} vs c* = {c_star} ({:.1}% off)",
            fit.speed,
            100.0 * rel
        );
        fitted.push(fit.speed);
    }
    // weaker selection spreads faster, toward the classical speed 2
    assert!(
        fitted[1] > fitted[0],
        "speeds should increase as selection vanishes: {fitted:?}"
    );
    assert!(fitted[1] < 2.0);
}

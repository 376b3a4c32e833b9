mod common;

use mcf_expanders::critical::{
    find_critical_angle, two_sheeted_for_angle, AngleLandscape, CriticalError, CriticalOptions,
};
use mcf_expanders::profile::{integrate_one_sheeted, integrate_two_sheeted, ShootingOptions};
use proptest::prelude::*;
use std::sync::OnceLock;

fn landscape() -> &'static AngleLandscape {
    static L: OnceLock<AngleLandscape> = OnceLock::new();
    L.get_or_init(|| AngleLandscape::compute(3, 1e-4, &CriticalOptions::default()).unwrap())
}

#[test]
fn critical_angle_in_three_dimensions() {
    let c = landscape().critical;
    assert!((c.alpha_crit_deg - 66.0).abs() < 1.0, "{}", c.alpha_crit_deg);
    assert!(c.alpha_crit_deg > 60.0 && c.alpha_crit_deg < 70.0);
    assert!(c.bracket.0 < c.c_star && c.c_star < c.bracket.1);
    let opts = ShootingOptions::default();
    for end in [c.bracket.0, c.bracket.1] {
        let a = integrate_one_sheeted(end, 3, &opts).unwrap().angle().unwrap();
        assert!(a.angle > c.alpha_crit.angle + c.alpha_crit.uncertainty);
    }
}

#[test]
fn grid_seed_does_not_move_the_minimum() {
    let tol = 0.1f64.to_radians();
    let base = find_critical_angle(3, tol, &CriticalOptions::default()).unwrap();
    for seed in [1, 7, 12345] {
        let opts = CriticalOptions {
            grid_seed: seed,
            ..CriticalOptions::default()
        };
        let r = find_critical_angle(3, tol, &opts).unwrap();
        assert!((r.alpha_crit.angle - base.alpha_crit.angle).abs() < tol);
    }
}

#[test]
fn four_dimensional_baseline() {
    let l = AngleLandscape::compute(4, 1e-4, &CriticalOptions::default()).unwrap();
    let deg = l.critical.alpha_crit_deg;
    assert!((deg - 75.748).abs() < 0.02, "{deg}");
    let first = l.map.entries.first().unwrap().alpha.unwrap();
    let last = l.map.entries.last().unwrap().alpha.unwrap();
    assert!(first > l.critical.alpha_crit.angle && last > l.critical.alpha_crit.angle);
}

#[test]
fn nonuniqueness_at_seventy_five_degrees() {
    let target = 75f64.to_radians();
    let tol = 1e-4;
    let w = landscape().witness(target, tol).unwrap();
    assert!(w.c_low < w.c_star && w.c_star < w.c_high);
    for a in [w.alpha_low, w.alpha_high, w.alpha_two_sheeted] {
        assert!((a.angle - target).abs() < 0.2f64.to_radians());
    }
    assert!((w.alpha_low.angle - target).abs() <= tol);
    assert!((w.alpha_high.angle - target).abs() <= tol);
    assert!(w.max_height_difference > 10.0 * 1e-9);
    let two = integrate_two_sheeted(w.b, 3, &ShootingOptions::default()).unwrap();
    common::check_two_sheeted(&two).unwrap();
}

#[test]
fn below_critical_has_no_pair() {
    let r = landscape().one_sheeted_pair(50f64.to_radians(), 1e-4);
    assert!(matches!(r, Err(CriticalError::BelowCritical { .. })));
}

#[test]
fn two_sheeted_angle_decreases_in_b() {
    let opts = ShootingOptions::default();
    let angles: Vec<f64> = common::log_spaced(1e-2, 5.0, 16)
        .into_iter()
        .map(|b| integrate_two_sheeted(b, 3, &opts).unwrap().angle().unwrap().angle)
        .collect();
    assert!(angles.windows(2).all(|w| w[1] < w[0]), "{angles:?}");
}

#[test]
fn two_sheeted_root_has_target_slope() {
    let target = 66f64.to_radians();
    let root = two_sheeted_for_angle(target, 3, 1e-4, &ShootingOptions::default()).unwrap();
    assert!((root.alpha.angle - target).abs() <= 1e-4);
    assert!((root.final_slope - 1.0 / target.tan()).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pairs_exist_above_the_critical_angle(extra in 2.0f64..18.0) {
        let l = landscape();
        let target = l.critical.alpha_crit.angle + extra.to_radians();
        let tol = 1e-4;
        let p = l.one_sheeted_pair(target, tol).unwrap();
        prop_assert!(p.c_low < l.critical.c_star && l.critical.c_star < p.c_high);
        let opts = ShootingOptions::default();
        for c in [p.c_low, p.c_high] {
            let a = integrate_one_sheeted(c, 3, &opts).unwrap().angle().unwrap().angle;
            prop_assert!((a - target).abs() <= tol);
        }
    }
}

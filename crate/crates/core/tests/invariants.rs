mod common;

use std::f64::consts::FRAC_PI_2;

use mcf_expanders::critical::build_angle_map;
use mcf_expanders::evolve::{make_smoothing, step, EvolutionState, SmoothingFamily};
use mcf_expanders::geometry::{
    area_in_ball, cylinder_exact, parabolic_rescale, ParabolicRescale, RevolutionSurface,
};
use mcf_expanders::profile::{integrate_one_sheeted, integrate_two_sheeted, ShootingOptions};
use proptest::prelude::*;

#[test]
fn properties_hold_on_log_grid() {
    let opts = ShootingOptions::default();
    for c in common::log_spaced(1e-2, 1e2, 20) {
        let p = integrate_one_sheeted(c, 3, &opts).unwrap();
        common::check_one_sheeted(&p).unwrap();
    }
}

#[test]
fn two_sheeted_properties_on_log_grid() {
    let opts = ShootingOptions::default();
    for b in common::log_spaced(1e-2, 5.0, 12) {
        let p = integrate_two_sheeted(b, 3, &opts).unwrap();
        common::check_two_sheeted(&p).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_sheeted_profiles_satisfy_properties(log_c in (1e-2f64).ln()..(1e2f64).ln(), n in 3u32..6) {
        let p = integrate_one_sheeted(log_c.exp(), n, &ShootingOptions::default()).unwrap();
        prop_assert!(common::check_one_sheeted(&p).is_ok(), "{:?}", common::check_one_sheeted(&p));
    }

    #[test]
    fn two_sheeted_profiles_are_convex(log_b in (1e-2f64).ln()..(5f64).ln(), n in 3u32..5) {
        let p = integrate_two_sheeted(log_b.exp(), n, &ShootingOptions::default()).unwrap();
        prop_assert!(common::check_two_sheeted(&p).is_ok(), "{:?}", common::check_two_sheeted(&p));
    }

    #[test]
    fn rescaling_composes(l1 in 0.1f64..10.0, l2 in 0.1f64..10.0, y in -20.0f64..20.0) {
        let s = RevolutionSurface::new(
            |y: f64| (1.7 * y * y + 0.4).sqrt(),
            |y: f64| 1.7 * y / (1.7 * y * y + 0.4).sqrt(),
            3,
            (-5.0, 5.0),
        );
        let a = parabolic_rescale(&parabolic_rescale(&s, l2), l1);
        let b = parabolic_rescale(&s, l1 * l2);
        prop_assert!((a.height(y) - b.height(y)).abs() <= 1e-13 * b.height(y));
        prop_assert!((a.slope(y) - b.slope(y)).abs() <= 1e-13);
    }

    #[test]
    fn cone_is_scale_invariant(gamma in 0.2f64..5.0, l in 0.1f64..10.0, y in -10.0f64..10.0) {
        let c = RevolutionSurface::double_cone(gamma, 3, (-1.0, 1.0));
        let r = c.parabolic_rescale(l);
        prop_assert!((r.height(y) - c.height(y)).abs() <= 1e-14 * (1.0 + c.height(y)));
    }

    #[test]
    fn area_is_monotone_in_radius(center in -2.0f64..2.0, r1 in 0.2f64..4.0, dr in 0.0f64..2.0) {
        let s = RevolutionSurface::new(
            |y: f64| (y * y + 1.0).sqrt(),
            |y: f64| y / (y * y + 1.0).sqrt(),
            3,
            (-10.0, 10.0),
        );
        let a = area_in_ball(&s, center, r1).unwrap();
        let b = area_in_ball(&s, center, r1 + dr).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-10));
    }

    #[test]
    fn rescaled_area_scales_quadratically(l in 0.3f64..3.0, rho in 1.2f64..3.0) {
        let s = RevolutionSurface::new(
            |y: f64| (y * y + 1.0).sqrt(),
            |y: f64| y / (y * y + 1.0).sqrt(),
            3,
            (-10.0, 10.0),
        );
        let a = area_in_ball(&s, 0.0, rho).unwrap();
        let b = area_in_ball(&s.parabolic_rescale(l), 0.0, l * rho).unwrap();
        prop_assert!((b - l * l * a).abs() <= 1e-8 * b);
    }

    #[test]
    fn smoothings_are_even_positive_and_outside(alpha_deg in 20.0f64..88.0, param in 0.05f64..5.0, y in 0.0f64..50.0) {
        for fam in [SmoothingFamily::Hyperbola, SmoothingFamily::Spline] {
            let s = make_smoothing(alpha_deg.to_radians(), fam, param).unwrap();
            prop_assert!(s.height(y) > 0.0);
            prop_assert_eq!(s.height(y), s.height(-y));
            prop_assert!(s.outside_cone);
            prop_assert!(s.height(y) >= s.gamma * y * (1.0 - 1e-15));
            if y > s.window.1 {
                prop_assert!((s.height(y) - s.gamma * y).abs() <= 1e-9 * (1.0 + s.gamma * y));
            }
        }
    }

    #[test]
    fn cylinder_satisfies_discrete_equation(r in 0.5f64..3.0, frac in 0.0f64..0.9) {
        // with u_yy = 0 the flow is u_t = -1/u; check it for the exact
        // solution by a centred difference in time
        let t = frac * r * r / 2.0;
        let h = 1e-6 * r * r;
        let tp = (t + h).min(r * r / 2.0 * 0.95);
        let tm = (t - h).max(0.0);
        let ut = (cylinder_exact(r, tp).unwrap() - cylinder_exact(r, tm).unwrap()) / (tp - tm);
        let u = cylinder_exact(r, 0.5 * (tp + tm)).unwrap();
        prop_assert!((ut + 1.0 / u).abs() <= 1e-6 * (1.0 / u));
    }
}

#[test]
fn uniform_data_takes_the_implicit_cylinder_step() {
    // the flux differences vanish on uniform data, leaving the explicit
    // reaction update (u1 - u0)/dt = -1/u0 away from the fixed ends
    let (u0, dt) = (1.3, 1e-3);
    let mut s = EvolutionState::from_fn(|_| u0, 5.0, 100, 3, 1e-3).unwrap();
    step(&mut s, dt).unwrap();
    let u1 = u0 - dt / u0;
    for (y, u) in s.grid.iter().zip(&s.u) {
        if y.abs() <= 2.0 {
            assert!((u - u1).abs() <= 1e-14, "y={y}: {u} vs {u1}");
        }
    }
}

#[test]
fn angle_map_invariants() {
    let opts = ShootingOptions::default();
    let map = build_angle_map(3, 1e-2, 1e2, 64, &opts).unwrap();
    let pts: Vec<_> = map.converged().collect();
    assert_eq!(pts.len(), map.entries.len());
    for (_, a, _) in &pts {
        assert!(*a > 0.0 && *a < FRAC_PI_2);
    }
    let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert!(pts[0].1 > min && pts[pts.len() - 1].1 > min);
    for w in pts.windows(2).filter(|w| w[0].0 > 2f64.sqrt()) {
        assert!(w[1].1 >= w[0].1 - (w[0].2 + w[1].2), "{w:?}");
    }

    // a halved tolerance reproduces every entry within the summed uncertainty
    let fine = build_angle_map(3, 1e-2, 1e2, 64, &opts.with_tol(5e-10)).unwrap();
    for (a, b) in map.entries.iter().zip(&fine.entries) {
        let gap = (a.alpha.unwrap() - b.alpha.unwrap()).abs();
        assert!(gap <= a.uncertainty.unwrap() + b.uncertainty.unwrap(), "C={}", a.c);
    }
}

#[test]
fn angle_map_jumps_shrink_under_refinement() {
    let opts = ShootingOptions::default();
    let jump = |samples| {
        let m = build_angle_map(3, 1e-2, 1e2, samples, &opts).unwrap();
        let pts: Vec<_> = m.converged().collect();
        pts.windows(2).map(|w| (w[1].1 - w[0].1).abs()).fold(0.0, f64::max)
    };
    let coarse = jump(32);
    let fine = jump(128);
    assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
}

//! Independent fixed-step oracles shared by the integration tests.

#![allow(dead_code)]

use mcf_expanders::evolve::scheme::{step_with, Workspace};
use mcf_expanders::evolve::{EvolutionState, EvolveError, StepControl, Stepper};
use mcf_expanders::geometry::cylinder_exact;
use mcf_expanders::profile::{integrate_one_sheeted, ExpanderProfile, Sheet, ShootingOptions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One classical RK4 step for a first-order system in two unknowns.
fn rk4<F: Fn(f64, [f64; 2]) -> [f64; 2]>(f: &F, x: f64, s: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = f(x, s);
    let k2 = f(x + 0.5 * h, [s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = f(x + 0.5 * h, [s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = f(x + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// `(abscissa, height, slope)` of a fixed-step trajectory.
#[derive(Debug, Clone, Copy)]
pub struct OraclePoint {
    pub x: f64,
    pub h: f64,
    pub p: f64,
}

impl OraclePoint {
    pub fn ratio_angle(&self) -> f64 {
        (self.h / self.x).atan()
    }

    pub fn slope_angle(&self) -> f64 {
        self.p.atan()
    }
}

/// RK4 at fixed step `h` for `u'' = (1+p²)((u − p y)/2 + (n−2)/u)`,
/// `u(0) = c`, `u'(0) = 0`, recording the state at each of `stops`
/// (ascending, multiples of `h`).
pub fn one_sheeted(c: f64, n: u32, h: f64, stops: &[f64]) -> Vec<OraclePoint> {
    let k = (n - 2) as f64;
    let f = |y: f64, s: [f64; 2]| [s[1], (1.0 + s[1] * s[1]) * ((s[0] - s[1] * y) / 2.0 + k / s[0])];
    march(&f, 0.0, [c, 0.0], h, stops)
}

/// RK4 for the two-sheeted graph `y(u)` with `y(0) = b`. The first step of
/// length `u_start` uses the axis expansion `y = b + κu²/2`,
/// `κ = b/(2(n−1))`.
pub fn two_sheeted(b: f64, n: u32, h: f64, u_start: f64, stops: &[f64]) -> Vec<OraclePoint> {
    let k = (n - 2) as f64;
    let kappa = b / (2.0 * (n - 1) as f64);
    let f = |u: f64, s: [f64; 2]| {
        [s[1], (1.0 + s[1] * s[1]) * (s[0] / 2.0 - s[1] * (k / u + u / 2.0))]
    };
    let start = [b + 0.5 * kappa * u_start * u_start, kappa * u_start];
    march(&f, u_start, start, h, stops)
}

fn march<F: Fn(f64, [f64; 2]) -> [f64; 2]>(
    f: &F,
    x0: f64,
    s0: [f64; 2],
    h: f64,
    stops: &[f64],
) -> Vec<OraclePoint> {
    let mut out = Vec::with_capacity(stops.len());
    let mut x = x0;
    let mut s = s0;
    let mut i: u64 = 0;
    for &stop in stops {
        // integer step count avoids drift in the abscissa
        let target = ((stop - x0) / h).round() as u64;
        while i < target {
            s = rk4(f, x, s, h);
            i += 1;
            x = x0 + i as f64 * h;
        }
        out.push(OraclePoint { x, h: s[0], p: s[1] });
    }
    out
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Sign changes of `values`, ignoring entries within `eps` of zero.
pub fn sign_changes(values: &[f64], eps: f64) -> usize {
    let signs: Vec<bool> = values
        .iter()
        .filter(|v| v.abs() > eps)
        .map(|v| *v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Positivity, monotonicity, single inflection, no interior maximum of
/// `arctan(u/y)`, `u ≥ C`, and a converged tail angle in `(0, π/2)`.
pub fn check_one_sheeted(p: &ExpanderProfile) -> Result<(), String> {
    if p.sheet != Sheet::OneSheeted {
        return Err("not one-sheeted".into());
    }
    let c = p.shoot_param;
    for s in &p.samples {
        if !(s.height > 0.0) {
            return Err(format!("C={c}: height {} at y={}", s.height, s.abscissa));
        }
        if s.abscissa > 0.0 && !(s.slope > 0.0) {
            return Err(format!("C={c}: slope {} at y={}", s.slope, s.abscissa));
        }
        if s.height < c {
            return Err(format!("C={c}: height {} below C at y={}", s.height, s.abscissa));
        }
    }
    let second = p.second_derivatives();
    let scale = second.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let changes = sign_changes(&second, 1e-12 * scale);
    if changes > 1 {
        return Err(format!("C={c}: u'' changes sign {changes} times"));
    }
    let ratio: Vec<f64> = p
        .samples
        .iter()
        .filter(|s| s.abscissa > 0.0)
        .map(|s| (s.height / s.abscissa).atan())
        .collect();
    for (i, w) in ratio.windows(3).enumerate() {
        if w[1] > w[0].max(w[2]) + 1e-12 {
            return Err(format!("C={c}: arctan(u/y) has an interior maximum at sample {}", i + 1));
        }
    }
    let a = p.angle().map_err(|e| format!("C={c}: {e}"))?;
    if !(a.angle > 0.0 && a.angle < std::f64::consts::FRAC_PI_2) {
        return Err(format!("C={c}: angle {} outside (0, π/2)", a.angle));
    }
    let last = p.last();
    let tail_gap = ((last.height / last.abscissa).atan() - last.slope.atan()).abs();
    if tail_gap > a.uncertainty + 1e-12 {
        return Err(format!("C={c}: tail estimators differ by {tail_gap}"));
    }
    Ok(())
}

/// Positive, convex, with nondecreasing slope.
pub fn check_two_sheeted(p: &ExpanderProfile) -> Result<(), String> {
    let b = p.shoot_param;
    for w in p.samples.windows(2) {
        if !(w[1].height > 0.0) {
            return Err(format!("b={b}: height {} at u={}", w[1].height, w[1].abscissa));
        }
        if w[1].slope < w[0].slope {
            return Err(format!("b={b}: slope decreases at u={}", w[1].abscissa));
        }
    }
    if let Some(v) = p.second_derivatives().iter().find(|v| **v < -p.tol) {
        return Err(format!("b={b}: y_uu = {v}"));
    }
    Ok(())
}

/// Max error on `|y| ≤ 10` at `t = 0.4` and the detected pinch time.
pub fn cylinder_run(cells: usize, rel_change: f64) -> (f64, f64) {
    let mut s = EvolutionState::from_fn(|_| 1.0, 20.0, cells, 3, 1e-3).unwrap();
    let mut st = Stepper::new(StepControl {
        rel_change,
        ..StepControl::default()
    });
    while s.time < 0.4 {
        st.advance_capped(&mut s, 0.4).unwrap();
    }
    let exact = cylinder_exact(1.0, 0.4).unwrap();
    let err = s
        .grid
        .iter()
        .zip(&s.u)
        .filter(|(y, _)| y.abs() <= 10.0)
        .map(|(_, u)| (u - exact).abs())
        .fold(0.0, f64::max);
    loop {
        match st.advance(&mut s) {
            Ok(_) => assert!(s.u.iter().all(|u| *u > 0.0)),
            Err(EvolveError::PinchDetected { t, .. }) => return (err, t),
            Err(e) => panic!("{e}"),
        }
    }
}

/// Worst interior relative deviation from `√(1+t)·u_C(y/√(1+t))` up to
/// `t = 1`, on `[-20, 20]` with 2000 cells.
pub fn expander_error(c: f64, rel_change: f64) -> f64 {
    let p = integrate_one_sheeted(c, 3, &ShootingOptions::default()).unwrap();
    let y = 20.0;
    let mut s = EvolutionState::from_fn(|x| p.eval(x).0, y, 2000, 3, 1e-3).unwrap();
    let mut st = Stepper::new(StepControl {
        rel_change,
        ..StepControl::default()
    });
    let mut worst = 0.0f64;
    while s.time < 1.0 {
        st.advance_capped(&mut s, 1.0).unwrap();
        let r = (1.0 + s.t).sqrt();
        let e = s
            .grid
            .iter()
            .zip(&s.u)
            .filter(|(x, _)| x.abs() <= y / 2.0)
            .map(|(x, u)| {
                let exact = r * p.eval(x / r).0;
                ((u - exact) / exact).abs()
            })
            .fold(0.0, f64::max);
        worst = worst.max(e);
    }
    worst
}

/// Lockstep evolution of an ordered pair; returns the worst violation
/// relative to the height scale.
pub fn ordered_pair_violation(rng: &mut ChaCha8Rng) -> f64 {
    let g = rng.gen_range(50f64..80.0).to_radians().tan();
    let d: f64 = rng.gen_range(0.5..2.0);
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(0.0..0.5), rng.gen_range(0.2..2.0)))
        .collect();
    let lower = move |y: f64| (g * g * y * y + d * d).sqrt();
    let upper = move |y: f64| {
        lower(y) + bumps.iter().map(|(c, a, w)| a * (-((y - c) / w).powi(2)).exp()).sum::<f64>()
    };
    let mut a = EvolutionState::from_fn(lower, 10.0, 256, 3, 1e-3 * d).unwrap();
    let mut b = EvolutionState::from_fn(upper, 10.0, 256, 3, 1e-3 * d).unwrap();
    let n = a.u.len();
    b.u[0] = a.u[0];
    b.u[n - 1] = a.u[n - 1];
    let mut st = Stepper::new(StepControl::default());
    let mut ws = Workspace::default();
    let t_end = 5.0 * d * d;
    let mut worst = 0.0f64;
    loop {
        let ra = st.advance_capped(&mut a, t_end);
        let dt = match &ra {
            Ok(r) => r.dt,
            Err(EvolveError::PinchDetected { .. }) => a.time - b.time,
            Err(e) => panic!("{e}"),
        };
        let rb = step_with(&mut b, dt, &mut ws);
        if let Ok(r) = &rb {
            assert_eq!(r.dt, dt, "both members take the same step");
        }
        let scale = b.u.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        for i in 0..n {
            worst = worst.max((a.u[i] - b.u[i]) / scale);
        }
        if ra.is_err() || rb.is_err() || a.time >= t_end {
            return worst;
        }
    }
}

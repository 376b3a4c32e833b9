//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with step-size control.
//!
//! Fixed-size state arrays, the classic `0.9 * err^(-1/5)` step controller,
//! and an observer callback that sees every accepted step and may stop the
//! integration.

use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError<E> {
    #[error("step size {h:e} fell below the floor at t = {t}")]
    Stalled { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    Budget(usize),
    #[error(transparent)]
    Rhs(E),
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct StepperConfig {
    /// Absolute and relative tolerance (both set to this value).
    pub tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// `(j, θ)`: keep the turn of `atan(y[j])` per step below `θ`, for
    /// curve ODEs whose component `j` is a slope.
    pub max_turn: Option<(usize, f64)>,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            h_init: 1e-4,
            h_max: 0.05,
            max_steps: 5_000_000,
            max_turn: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finish<const N: usize> {
    pub t: f64,
    pub state: [f64; N],
    pub steps: usize,
    pub stopped_by_observer: bool,
}

/// `h_max`, further reduced by the turn limit at state `y` with slope `dy`.
fn step_cap<const N: usize>(cfg: &StepperConfig, y: &[f64; N], dy: &[f64; N]) -> f64 {
    match cfg.max_turn {
        Some((j, turn)) => {
            let rate = (dy[j] / (1.0 + y[j] * y[j])).abs();
            if rate > 0.0 {
                cfg.h_max.min(turn / rate)
            } else {
                cfg.h_max
            }
        }
        None => cfg.h_max,
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrate `y' = rhs(t, y)` from `t0` towards `t_end`.
///
/// `observer(t, y)` is called once with the initial state and after every
/// accepted step; returning [`Control::Stop`] ends the integration early.
pub fn integrate<const N: usize, E, F, O>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    cfg: &StepperConfig,
    mut observer: O,
) -> Result<Finish<N>, StepError<E>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    O: FnMut(f64, &[f64; N]) -> Control,
{
    let mut t = t0;
    let mut y = y0;
    if observer(t, &y) == Control::Stop {
        return Ok(Finish {
            t,
            state: y,
            steps: 0,
            stopped_by_observer: true,
        });
    }
    let mut k1 = rhs(t, &y).map_err(StepError::Rhs)?;
    let mut h = cfg.h_init.min(step_cap(cfg, &y, &k1)).min(t_end - t0);
    let mut steps = 0usize;

    while t < t_end {
        if steps >= cfg.max_steps {
            return Err(StepError::Budget(cfg.max_steps));
        }
        let floor = 1e-14 * t.abs().max(1.0);
        if h < floor {
            return Err(StepError::Stalled { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)])).map_err(StepError::Rhs)?;
        let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)])).map_err(StepError::Rhs)?;
        let k4 = rhs(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        )
        .map_err(StepError::Rhs)?;
        let k5 = rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )
        .map_err(StepError::Rhs)?;
        let k6 = rhs(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        )
        .map_err(StepError::Rhs)?;
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = rhs(t + h, &y_new).map_err(StepError::Rhs)?;

        let mut err = 0.0f64;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.tol + cfg.tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            steps += 1;
            if observer(t, &y) == Control::Stop {
                return Ok(Finish {
                    t,
                    state: y,
                    steps,
                    stopped_by_observer: true,
                });
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(step_cap(cfg, &y, &k1));
        } else {
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= fac;
        }
    }

    Ok(Finish {
        t,
        state: y,
        steps,
        stopped_by_observer: false,
    })
}

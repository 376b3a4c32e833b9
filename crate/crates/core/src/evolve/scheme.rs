//! Conservative implicit finite differences for the axisymmetric graph flow
//!
//! ```text
//! u_t = u_yy / (1 + u_y²) − (n−2)/u
//! ```
//!
//! The curvature term is written as the flux difference
//! `(atan(D₊u) − atan(D₋u)) / h`, which is nondecreasing in both
//! neighbours, and taken implicitly. The reaction term is explicit; the map
//! `u ↦ u − dt (n−2)/u` is increasing, so every step is order preserving.
//!
//! The self-similar frame evolves `v = u/√s` against `z = y/√s`,
//! `τ = ln(s/t₀)` with `s = t + t₀`:
//!
//! ```text
//! v_τ = v_zz / (1 + v_z²) − (n−2)/v − v/2 + (z/2) v_z
//! ```
//!
//! whose stationary solutions are the expanders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ParabolicRescale;
use crate::numerics::solve_tridiagonal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("implicit solve failed at t = {t} after {retries} step halvings")]
    NonlinearSolveFailure { t: f64, retries: usize },
    #[error("pinch detected at t = {t} (min height {min_height:e})")]
    PinchDetected { t: f64, min_height: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state is not running: {0:?}")]
    NotRunning(Status),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case")]
pub enum Frame {
    Physical,
    /// Heights and abscissas divided by `√(t + t0)`; the state's time
    /// variable is `τ = ln((t + t0)/t0)`.
    SelfSimilar { t0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Running,
    Pinched { t_pinch: f64 },
    SurvivedToTmax,
    BarrierCertified,
}

/// Number of most recent history entries that must be strictly decreasing
/// before a floor crossing counts as pinching.
pub const PINCH_TREND: usize = 10;

/// Heights on a uniform grid symmetric about the axis, with Dirichlet data
/// at both ends held at their initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub frame: Frame,
    pub dimension: u32,
    /// Physical time.
    pub t: f64,
    /// Frame time: `t` itself, or `τ` in the self-similar frame.
    pub time: f64,
    /// Abscissas in the frame's variable.
    pub grid: Vec<f64>,
    /// Heights in the frame's variable.
    pub u: Vec<f64>,
    /// `(t, min u)` in physical variables, one entry per accepted step.
    pub min_history: Vec<(f64, f64)>,
    pub status: Status,
    /// Physical height below which a decreasing minimum counts as a pinch.
    pub pinch_floor: f64,
    pub steps: usize,
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// `max |Δu_i| / u_i`.
    pub rel_change: f64,
    /// `max |Δu_i| / dt`.
    pub rate: f64,
    pub newton_iterations: usize,
    pub retries: usize,
}

/// Step halvings allowed when the implicit solve fails.
pub const MAX_RETRIES: usize = 12;

const NEWTON_MAX_ITER: usize = 40;
const NEWTON_TOL: f64 = 1e-14;

impl EvolutionState {
    /// Sample `f` on `cells + 1` uniform nodes of `[-half_width, half_width]`.
    pub fn from_fn<F: Fn(f64) -> f64>(
        f: F,
        half_width: f64,
        cells: usize,
        dimension: u32,
        pinch_floor: f64,
    ) -> Result<Self, EvolveError> {
        if cells < 4 || cells % 2 != 0 {
            return Err(EvolveError::InvalidParameter(format!(
                "cell count must be even and at least 4, got {cells}"
            )));
        }
        if !(half_width > 0.0) || dimension < 3 {
            return Err(EvolveError::InvalidParameter(format!(
                "need half width > 0 and n >= 3, got {half_width}, {dimension}"
            )));
        }
        let mid = cells / 2;
        // built from the centre outwards so the grid is exactly symmetric
        let h = half_width / mid as f64;
        let grid: Vec<f64> = (0..=cells)
            .map(|i| {
                if i >= mid {
                    (i - mid) as f64 * h
                } else {
                    -((mid - i) as f64 * h)
                }
            })
            .collect();
        let u: Vec<f64> = grid.iter().map(|&y| f(y)).collect();
        if let Some((i, &v)) = u.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(EvolveError::InvalidParameter(format!(
                "initial height u({}) = {v} is not positive",
                grid[i]
            )));
        }
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            frame: Frame::Physical,
            dimension,
            t: 0.0,
            time: 0.0,
            grid,
            u,
            min_history: vec![(0.0, min)],
            status: Status::Running,
            pinch_floor,
            steps: 0,
        })
    }

    /// Switch an initial physical state to the self-similar frame with
    /// time origin `t0 > 0`.
    pub fn into_self_similar(mut self, t0: f64) -> Result<Self, EvolveError> {
        if self.frame != Frame::Physical || self.t != 0.0 || !(t0 > 0.0) {
            return Err(EvolveError::InvalidParameter(
                "self-similar frame needs an initial physical state and t0 > 0".into(),
            ));
        }
        let r = t0.sqrt();
        self.grid.iter_mut().for_each(|z| *z /= r);
        self.u.iter_mut().for_each(|v| *v /= r);
        self.frame = Frame::SelfSimilar { t0 };
        Ok(self)
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn half_width(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `√(t + t0)`, or 1 in the physical frame.
    pub fn scale(&self) -> f64 {
        match self.frame {
            Frame::Physical => 1.0,
            Frame::SelfSimilar { t0 } => (self.t + t0).sqrt(),
        }
    }

    /// Smallest physical height.
    pub fn min_height(&self) -> f64 {
        self.scale() * self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Physical pinch floor at the current time. In the self-similar frame
    /// the floor grows with the parabolic length scale `√((t + t0)/t0)`.
    pub fn effective_floor(&self) -> f64 {
        match self.frame {
            Frame::Physical => self.pinch_floor,
            Frame::SelfSimilar { t0 } => self.pinch_floor * ((self.t + t0) / t0).sqrt(),
        }
    }

    /// Physical abscissas and heights.
    pub fn physical(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.scale();
        (
            self.grid.iter().map(|y| s * y).collect(),
            self.u.iter().map(|u| s * u).collect(),
        )
    }

    /// Physical time reached after a frame-time step from `time` to `next`.
    fn physical_time(&self, next: f64) -> f64 {
        match self.frame {
            Frame::Physical => next,
            Frame::SelfSimilar { t0 } => t0 * next.exp_m1(),
        }
    }
}

impl ParabolicRescale for EvolutionState {
    /// `y ↦ λy`, `u ↦ λu`, `t ↦ λ²t`; the pinch floor scales with heights.
    fn parabolic_rescale(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        let l2 = lambda * lambda;
        s.t *= l2;
        s.pinch_floor *= lambda;
        s.min_history = self
            .min_history
            .iter()
            .map(|&(t, m)| (l2 * t, lambda * m))
            .collect();
        match self.frame {
            Frame::Physical => {
                s.time *= l2;
                s.grid.iter_mut().for_each(|y| *y *= lambda);
                s.u.iter_mut().for_each(|u| *u *= lambda);
            }
            // rescaled variables are unchanged when t0 scales with λ²
            Frame::SelfSimilar { t0 } => s.frame = Frame::SelfSimilar { t0: l2 * t0 },
        }
        s
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    w: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    res: Vec<f64>,
    scratch: Vec<f64>,
    central: Vec<bool>,
}

/// One implicit step of frame-time `dt`, halving `dt` on solver failure.
///
/// On success the state advances and the step report is returned. A floor
/// crossing with a strictly decreasing recent trend marks the state
/// pinched and returns [`EvolveError::PinchDetected`].
pub fn step(state: &mut EvolutionState, dt: f64) -> Result<StepReport, EvolveError> {
    step_with(state, dt, &mut Workspace::default())
}

pub fn step_with(
    state: &mut EvolutionState,
    dt: f64,
    ws: &mut Workspace,
) -> Result<StepReport, EvolveError> {
    let (dt, iters, retries) = trial(state, dt, ws)?;
    let report = commit(state, dt, iters, retries, ws);
    check_pinch(state)?;
    Ok(report)
}

/// Solve for the next level into the workspace without touching the state.
fn trial(
    state: &EvolutionState,
    dt: f64,
    ws: &mut Workspace,
) -> Result<(f64, usize, usize), EvolveError> {
    if state.status != Status::Running {
        return Err(EvolveError::NotRunning(state.status));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EvolveError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut dt = dt;
    for retries in 0..=MAX_RETRIES {
        if let Some(iters) = solve_implicit(state, dt, ws) {
            return Ok((dt, iters, retries));
        }
        dt *= 0.5;
    }
    Err(EvolveError::NonlinearSolveFailure {
        t: state.t,
        retries: MAX_RETRIES,
    })
}

/// `max |Δu_i| / u_i` and `max |Δu_i|` between the state and the trial level.
fn change(state: &EvolutionState, ws: &Workspace) -> (f64, f64) {
    let mut rel = 0.0f64;
    let mut abs = 0.0f64;
    for (old, new) in state.u.iter().zip(&ws.w) {
        let d = (new - old).abs();
        abs = abs.max(d);
        rel = rel.max(d / old.min(*new));
    }
    (rel, abs)
}

fn commit(
    state: &mut EvolutionState,
    dt: f64,
    newton_iterations: usize,
    retries: usize,
    ws: &mut Workspace,
) -> StepReport {
    let (rel, abs) = change(state, ws);
    std::mem::swap(&mut state.u, &mut ws.w);
    state.time += dt;
    state.t = state.physical_time(state.time);
    state.steps += 1;
    let m = state.min_height();
    state.min_history.push((state.t, m));
    StepReport {
        dt,
        rel_change: rel,
        rate: abs / dt,
        newton_iterations,
        retries,
    }
}

/// Step-size control on the relative height change per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Target `max |Δu_i| / u_i` per step.
    pub rel_change: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_change: 1e-2,
            dt_init: 1e-4,
            dt_min: 1e-14,
            dt_max: 0.1,
        }
    }
}

/// Adaptive driver around [`step_with`].
#[derive(Debug, Clone)]
pub struct Stepper {
    pub control: StepControl,
    pub dt: f64,
    ws: Workspace,
}

impl Stepper {
    pub fn new(control: StepControl) -> Self {
        Self {
            control,
            dt: control.dt_init,
            ws: Workspace::default(),
        }
    }

    /// Take one accepted step, shrinking the step until the relative change
    /// is at most twice the target.
    pub fn advance(&mut self, state: &mut EvolutionState) -> Result<StepReport, EvolveError> {
        self.advance_capped(state, f64::INFINITY)
    }

    /// As [`Stepper::advance`] without stepping past frame time `until`.
    pub fn advance_capped(
        &mut self,
        state: &mut EvolutionState,
        until: f64,
    ) -> Result<StepReport, EvolveError> {
        let c = self.control;
        loop {
            let dt = self.dt.min(c.dt_max).min(until - state.time);
            let (dt, iters, retries) = trial(state, dt, &mut self.ws)?;
            let (rel, _) = change(state, &self.ws);
            let target = c.rel_change;
            if rel > 2.0 * target && dt > c.dt_min {
                self.dt = (dt * (0.9 * target / rel).max(0.1)).max(c.dt_min);
                continue;
            }
            let grow = if rel > 0.0 { (0.9 * target / rel).min(2.0) } else { 2.0 };
            self.dt = (dt * grow).clamp(c.dt_min, c.dt_max);
            let report = commit(state, dt, iters, retries, &mut self.ws);
            check_pinch(state)?;
            return Ok(report);
        }
    }
}

/// Whether the state has crossed the pinch floor with a strictly
/// decreasing recent minimum; marks it pinched if so.
pub fn check_pinch(state: &mut EvolutionState) -> Result<(), EvolveError> {
    let h = &state.min_history;
    let (t, m) = *h.last().unwrap();
    if m >= state.effective_floor() || h.len() <= PINCH_TREND {
        return Ok(());
    }
    let recent = &h[h.len() - PINCH_TREND - 1..];
    if recent.windows(2).all(|w| w[1].1 < w[0].1) {
        state.status = Status::Pinched { t_pinch: t };
        return Err(EvolveError::PinchDetected { t, min_height: m });
    }
    Ok(())
}

/// Newton iteration for the implicit step into `ws.w`. Returns the
/// iteration count, or `None` on failure.
fn solve_implicit(state: &EvolutionState, dt: f64, ws: &mut Workspace) -> Option<usize> {
    let n = state.u.len();
    let h = state.spacing();
    let k = (state.dimension - 2) as f64;
    let u = &state.u;
    let self_similar = matches!(state.frame, Frame::SelfSimilar { .. });

    ws.w.clear();
    ws.w.extend_from_slice(u);
    ws.rhs.clear();
    ws.rhs.extend(u.iter().map(|&v| v - dt * k / v));
    for buf in [&mut ws.lower, &mut ws.diag, &mut ws.upper, &mut ws.res] {
        buf.clear();
        buf.resize(n - 2, 0.0);
    }

    // Central advection where the old-level cell Péclet number allows it,
    // upwind elsewhere.
    ws.central.clear();
    if self_similar {
        for i in 1..n - 1 {
            let dp = (u[i + 1] - u[i]) / h;
            let dm = (u[i] - u[i - 1]) / h;
            let a = (1.0 / (1.0 + dp * dp)).min(1.0 / (1.0 + dm * dm));
            let b = 0.5 * state.grid[i];
            ws.central.push(b.abs() * h <= 2.0 * a);
        }
    }

    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut prev_update = f64::INFINITY;
    for iter in 1..=NEWTON_MAX_ITER {
        let w = &ws.w;
        for j in 0..n - 2 {
            let i = j + 1;
            let dp = (w[i + 1] - w[i]) / h;
            let dm = (w[i] - w[i - 1]) / h;
            let ap = 1.0 / (1.0 + dp * dp);
            let am = 1.0 / (1.0 + dm * dm);
            let mut op = (dp.atan() - dm.atan()) / h;
            let mut d_lo = am / (h * h);
            let mut d_up = ap / (h * h);
            let mut d_mid = -(ap + am) / (h * h);
            if self_similar {
                let b = 0.5 * state.grid[i];
                op -= 0.5 * w[i];
                d_mid -= 0.5;
                if ws.central[j] {
                    op += b * (w[i + 1] - w[i - 1]) / (2.0 * h);
                    d_up += b / (2.0 * h);
                    d_lo -= b / (2.0 * h);
                } else if b > 0.0 {
                    op += b * (w[i + 1] - w[i]) / h;
                    d_up += b / h;
                    d_mid -= b / h;
                } else {
                    op += b * (w[i] - w[i - 1]) / h;
                    d_mid += b / h;
                    d_lo -= b / h;
                }
            }
            ws.res[j] = -(w[i] - dt * op - ws.rhs[i]);
            ws.lower[j] = -dt * d_lo;
            ws.diag[j] = 1.0 - dt * d_mid;
            ws.upper[j] = -dt * d_up;
        }
        solve_tridiagonal(&ws.lower, &ws.diag, &ws.upper, &mut ws.res, &mut ws.scratch)?;
        let mut update = 0.0f64;
        for j in 0..n - 2 {
            let d = ws.res[j];
            if !d.is_finite() {
                return None;
            }
            ws.w[j + 1] += d;
            update = update.max(d.abs());
            if !(ws.w[j + 1] > 0.0) {
                return None;
            }
        }
        let rel = update / scale;
        if rel <= NEWTON_TOL || (rel < 1e-10 && update >= prev_update) {
            return Some(iter);
        }
        if iter > 3 && update > prev_update {
            return None;
        }
        prev_update = update;
    }
    None
}

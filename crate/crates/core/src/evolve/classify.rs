//! Repulsion versus coalescence of smoothed double cones.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scheme::{EvolutionState, EvolveError, Frame, Status, StepControl, Stepper};
use super::smoothing::{make_smoothing, ConeSmoothing, SmoothingError, SmoothingFamily};
use crate::critical::{find_critical_angle, CriticalAngleResult, CriticalError, CriticalOptions};
use crate::numerics::linear_fit;
use crate::profile::{integrate_one_sheeted, ExpanderProfile, ProfileError, ShootingOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bracket end {alpha_deg}° classified {found:?}, expected {expected:?}")]
    InvalidBracket {
        alpha_deg: f64,
        found: Decision,
        expected: Decision,
    },
    #[error("undecided at {alpha_deg}° inside bracket [{lo_deg}°, {hi_deg}°]")]
    Inconclusive {
        alpha_deg: f64,
        lo_deg: f64,
        hi_deg: f64,
        probes: Vec<Verdict>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    Physical,
    SelfSimilar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub dimension: u32,
    pub frame: FrameChoice,
    /// Physical half-width `Y`; default `20·max(1, 1/γ)·max(1, u_α(0))`.
    pub half_width: Option<f64>,
    /// Grid spacing in units of `u_α(0)`; the cell count is rounded up to
    /// an even number.
    pub spacing: f64,
    /// Physical time horizon; default `1e6·u_α(0)²`.
    pub t_max: Option<f64>,
    pub control: StepControl,
    /// Pinch floor as a fraction of `u_α(0)`.
    pub pinch_floor: f64,
    /// Rescaled heights changing slower than this (per unit of `ln t`)
    /// count as stationary.
    pub stationary_rate: f64,
    /// Span of `ln t` over which stationarity must persist.
    pub stationary_span: f64,
    /// Window `[a, b]·u_α(0)²` for the min-height growth fit.
    pub growth_window: (f64, f64),
    pub use_barrier: bool,
    /// Precomputed `α*_crit`; computed on demand when absent.
    pub critical: Option<CriticalAngleResult>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            dimension: 3,
            frame: FrameChoice::SelfSimilar,
            half_width: None,
            spacing: 0.02,
            t_max: None,
            control: StepControl::default(),
            pinch_floor: 1e-3,
            stationary_rate: 1e-4,
            stationary_span: 1.0,
            growth_window: (1.0, 4.0),
            use_barrier: true,
            critical: None,
        }
    }
}

/// Parameters with every default resolved for a given smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub dimension: u32,
    pub frame: FrameChoice,
    pub half_width: f64,
    pub cells: usize,
    pub t_max: f64,
    pub control: StepControl,
    pub pinch_floor: f64,
    pub stationary_rate: f64,
    pub stationary_span: f64,
    pub growth_window: (f64, f64),
    pub use_barrier: bool,
    pub alpha_crit: Option<f64>,
}

impl SolverParams {
    pub fn resolve(&self, s: &ConeSmoothing) -> Result<ResolvedParams, ClassifyError> {
        let u0 = s.tip_height();
        let half_width = self
            .half_width
            .unwrap_or(20.0 * (1.0f64).max(1.0 / s.gamma) * u0.max(1.0));
        if !(half_width > 0.0 && self.spacing > 0.0) {
            return Err(ClassifyError::InvalidParameter(
                "half width and spacing must be positive".into(),
            ));
        }
        let mut cells = (2.0 * half_width / (self.spacing * u0)).ceil() as usize;
        cells += cells % 2;
        let t_max = self.t_max.unwrap_or(1e6 * u0 * u0);
        if !(t_max > 0.0) {
            return Err(ClassifyError::InvalidParameter("t_max must be positive".into()));
        }
        Ok(ResolvedParams {
            dimension: self.dimension,
            frame: self.frame,
            half_width,
            cells: cells.max(4),
            t_max,
            control: self.control,
            pinch_floor: self.pinch_floor * u0,
            stationary_rate: self.stationary_rate,
            stationary_span: self.stationary_span,
            growth_window: (
                self.growth_window.0 * u0 * u0,
                self.growth_window.1 * u0 * u0,
            ),
            use_barrier: self.use_barrier,
            alpha_crit: self.critical.map(|c| c.alpha_crit.angle),
        })
    }

    /// Longer horizon (doubling `ln(1 + t_max/t0)`) and a finer grid.
    pub fn refined(&self, s: &ConeSmoothing) -> Self {
        let u0 = s.tip_height();
        let t0 = u0 * u0;
        let t_max = self.t_max.unwrap_or(1e6 * t0);
        let tau = (1.0 + t_max / t0).ln();
        Self {
            t_max: Some(t0 * (2.0 * tau).exp_m1()),
            spacing: 0.5 * self.spacing,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Repulsion,
    Coalescence,
    Undecided,
}

/// A rescaled expander lying below the initial profile; by comparison the
/// evolution stays above the expanding barrier and cannot pinch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpanderBarrier {
    /// Shoot parameter of the barrier expander.
    pub c: f64,
    pub expander_alpha: f64,
    /// The barrier is `λ·u_C(y/λ)`.
    pub lambda: f64,
    /// `min (u_α − λ u_C(·/λ)) / u_α` over the checked points.
    pub min_relative_gap: f64,
    pub checked_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum UndecidedReason {
    /// Horizon reached without pinching or a growing minimum.
    Horizon { t_max: f64, growth_exponent: Option<f64> },
    SolverFailure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Pinch {
        t_pinch: f64,
        min_height: f64,
    },
    Barrier(ExpanderBarrier),
    /// The rescaled profile stopped moving: the flow has settled on an
    /// expander and the minimum grows like `√t`.
    Stationary {
        t: f64,
        rate: f64,
        growth_exponent: Option<f64>,
    },
    SurvivedToTmax {
        t_max: f64,
        growth_exponent: Option<f64>,
    },
    Undecided(UndecidedReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub alpha: f64,
    pub alpha_deg: f64,
    pub decision: Decision,
    pub evidence: Evidence,
    pub smoothing: ConeSmoothing,
    pub params: ResolvedParams,
    pub steps: usize,
    /// `t` and min height at the end of the run.
    pub final_time: f64,
    pub final_min_height: f64,
    /// `(t, min u)` at roughly logarithmic spacing.
    pub min_history: Vec<(f64, f64)>,
}

/// Slope of `ln(min u)` against `ln t` over the physical window.
pub fn growth_exponent(history: &[(f64, f64)], window: (f64, f64)) -> Option<f64> {
    let pts: Vec<_> = history
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .map(|(t, m)| (t.ln(), m.ln()))
        .collect();
    let span = pts.last()?.0 - pts.first()?.0;
    // the window must be covered
    if pts.len() < 3 || span < 0.75 * (window.1 / window.0).ln() {
        return None;
    }
    linear_fit(&pts).map(|(slope, _)| slope)
}

fn thin_history(h: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &(t, m)) in h.iter().enumerate() {
        let keep = match out.last() {
            None => true,
            Some(&(tl, _)) => k + 1 == h.len() || t >= tl * 1.05 + 1e-12,
        };
        if keep {
            out.push((t, m));
        }
    }
    out
}

/// Try to fit `λ·u_C(y/λ)` below the smoothing for the given one-sheeted
/// expander, halving `λ` from 1.
///
/// The expander's tail beyond its last sample is bounded by its last
/// tangent, which is valid once `u_C'' < 0` there.
pub fn find_barrier(smoothing: &ConeSmoothing, expander: &ExpanderProfile) -> Option<ExpanderBarrier> {
    let last = expander.last();
    let curv = *expander.second_derivatives().last()?;
    let g = smoothing.gamma;
    if !(last.slope < g && last.height <= g * last.abscissa && curv <= 0.0) {
        return None;
    }
    let alpha = expander.angle().ok()?.angle;
    let s = &expander.samples;
    let mut lambda = 1.0;
    for _ in 0..80 {
        let mut min_gap = f64::INFINITY;
        let mut checked = 0;
        let mut ok = true;
        for j in 0..s.len() {
            let mut xs = [s[j].abscissa, f64::NAN];
            if j + 1 < s.len() {
                xs[1] = 0.5 * (s[j].abscissa + s[j + 1].abscissa);
            }
            for x in xs.into_iter().filter(|x| x.is_finite()) {
                let y = lambda * x;
                let ua = smoothing.height(y);
                let gap = (ua - lambda * expander.eval(x).0) / ua;
                checked += 1;
                min_gap = min_gap.min(gap);
                if gap < 0.0 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            return Some(ExpanderBarrier {
                c: expander.shoot_param,
                expander_alpha: alpha,
                lambda,
                min_relative_gap: min_gap,
                checked_points: checked,
            });
        }
        lambda *= 0.5;
    }
    None
}

/// Evolves smoothings and classifies them, caching the critical expander
/// used for barrier certificates.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub params: SolverParams,
    critical_expander: Option<ExpanderProfile>,
}

impl Classifier {
    pub fn new(mut params: SolverParams) -> Result<Self, ClassifyError> {
        let mut critical_expander = None;
        if params.use_barrier {
            let crit = match params.critical {
                Some(c) => c,
                None => find_critical_angle(params.dimension, 1e-4, &CriticalOptions::default())?,
            };
            params.critical = Some(crit);
            critical_expander = Some(integrate_one_sheeted(
                crit.c_star,
                params.dimension,
                &ShootingOptions::default(),
            )?);
        }
        Ok(Self {
            params,
            critical_expander,
        })
    }

    pub fn alpha_crit(&self) -> Option<f64> {
        self.params.critical.map(|c| c.alpha_crit.angle)
    }

    pub fn classify(&self, smoothing: &ConeSmoothing) -> Result<Verdict, ClassifyError> {
        self.classify_observed(smoothing, |_| {})
    }

    /// As [`Classifier::classify`], calling `observer` with the initial
    /// state and after every accepted step.
    pub fn classify_observed<O: FnMut(&EvolutionState)>(
        &self,
        smoothing: &ConeSmoothing,
        mut observer: O,
    ) -> Result<Verdict, ClassifyError> {
        let p = self.params.resolve(smoothing)?;
        let verdict = |decision, evidence, state: &EvolutionState| Verdict {
            alpha: smoothing.alpha,
            alpha_deg: smoothing.alpha.to_degrees(),
            decision,
            evidence,
            smoothing: *smoothing,
            params: p,
            steps: state.steps,
            final_time: state.t,
            final_min_height: state.min_height(),
            min_history: thin_history(&state.min_history),
        };

        let mut state = initial_state(smoothing, &p)?;
        observer(&state);

        if let (true, Some(exp), Some(ac)) = (p.use_barrier, &self.critical_expander, p.alpha_crit) {
            if smoothing.outside_cone && smoothing.alpha > ac {
                if let Some(b) = find_barrier(smoothing, exp) {
                    state.status = Status::BarrierCertified;
                    return Ok(verdict(Decision::Coalescence, Evidence::Barrier(b), &state));
                }
            }
        }

        let horizon = match state.frame {
            Frame::Physical => p.t_max,
            Frame::SelfSimilar { t0 } => (p.t_max / t0).ln_1p(),
        };
        let mut stepper = Stepper::new(p.control);
        let mut quiet_since: Option<f64> = None;
        let mut last_rate = f64::INFINITY;
        while state.time < horizon {
            match stepper.advance_capped(&mut state, horizon) {
                Ok(report) => {
                    observer(&state);
                    last_rate = report.rate;
                    if let Frame::SelfSimilar { .. } = state.frame {
                        if report.rate < p.stationary_rate && state.t >= p.growth_window.1 {
                            let since = *quiet_since.get_or_insert(state.time);
                            if state.time - since >= p.stationary_span {
                                let ev = Evidence::Stationary {
                                    t: state.t,
                                    rate: report.rate,
                                    growth_exponent: growth_exponent(
                                        &state.min_history,
                                        p.growth_window,
                                    ),
                                };
                                return Ok(verdict(Decision::Coalescence, ev, &state));
                            }
                        } else {
                            quiet_since = None;
                        }
                    }
                }
                Err(EvolveError::PinchDetected { t, min_height }) => {
                    observer(&state);
                    let ev = Evidence::Pinch {
                        t_pinch: t,
                        min_height,
                    };
                    return Ok(verdict(Decision::Repulsion, ev, &state));
                }
                Err(e) => {
                    let ev = Evidence::Undecided(UndecidedReason::SolverFailure {
                        message: e.to_string(),
                    });
                    return Ok(verdict(Decision::Undecided, ev, &state));
                }
            }
        }
        state.status = Status::SurvivedToTmax;
        let growth = growth_exponent(&state.min_history, p.growth_window);
        let h = &state.min_history;
        let settled = match state.frame {
            // the rescaled profile has nearly stopped moving
            Frame::SelfSimilar { .. } => last_rate < p.stationary_rate,
            // the minimum grows at close to the expander rate over the
            // last decade of t
            Frame::Physical => {
                let late = growth_exponent(h, (0.1 * state.t, state.t));
                matches!(late, Some(e) if e > 0.4)
            }
        };
        let late = h.iter().find(|(t, _)| *t >= 0.1 * state.t).map(|p| p.1);
        let growing = matches!(late, Some(m) if state.min_height() > m);
        if growing && settled {
            let ev = Evidence::SurvivedToTmax {
                t_max: state.t,
                growth_exponent: growth,
            };
            Ok(verdict(Decision::Coalescence, ev, &state))
        } else {
            let ev = Evidence::Undecided(UndecidedReason::Horizon {
                t_max: state.t,
                growth_exponent: growth,
            });
            Ok(verdict(Decision::Undecided, ev, &state))
        }
    }
}

pub fn initial_state(s: &ConeSmoothing, p: &ResolvedParams) -> Result<EvolutionState, ClassifyError> {
    let y = p.half_width;
    let mut state = EvolutionState::from_fn(|x| s.height(x), y, p.cells, p.dimension, p.pinch_floor)?;
    // Dirichlet data on the cone itself
    let last = state.u.len() - 1;
    state.u[0] = s.gamma * y;
    state.u[last] = s.gamma * y;
    Ok(match p.frame {
        FrameChoice::Physical => state,
        FrameChoice::SelfSimilar => {
            let u0 = s.tip_height();
            state.into_self_similar(u0 * u0)?
        }
    })
}

/// Evolve the smoothing until it pinches, is certified, or reaches the
/// horizon.
pub fn evolve_and_classify(
    smoothing: &ConeSmoothing,
    params: &SolverParams,
) -> Result<Verdict, ClassifyError> {
    Classifier::new(*params)?.classify(smoothing)
}

/// Bisection result for the PDE critical angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeCriticalEstimate {
    pub alpha: f64,
    pub alpha_deg: f64,
    /// Final `(repulsion, coalescence)` angles in radians.
    pub bracket: (f64, f64),
    pub family: SmoothingFamily,
    pub param: f64,
    /// Every probe, sorted by angle.
    pub probes: Vec<Verdict>,
    /// Whether both final bracket ends keep their verdicts with a doubled
    /// half-width.
    pub doubled_half_width_consistent: bool,
    pub alpha_crit_ode: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    /// Initial bracket in radians.
    pub bracket: (f64, f64),
    pub tol_angle: f64,
    /// Re-run the final bracket ends with a doubled half-width.
    pub check_half_width: bool,
    /// Refined retries of an undecided probe.
    pub refinements: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            bracket: (50f64.to_radians(), 80f64.to_radians()),
            tol_angle: 0.25f64.to_radians(),
            check_half_width: true,
            refinements: 2,
        }
    }
}

/// Classify at `alpha`, retrying with refined parameters while the verdict
/// is undecided.
fn probe(
    classifier: &Classifier,
    family: SmoothingFamily,
    param: f64,
    alpha: f64,
    refinements: usize,
) -> Result<Verdict, ClassifyError> {
    let s = make_smoothing(alpha, family, param)?;
    let mut v = classifier.classify(&s)?;
    let mut params = classifier.params;
    for _ in 0..refinements {
        if v.decision != Decision::Undecided {
            break;
        }
        params = params.refined(&s);
        let refined = Classifier {
            params,
            critical_expander: classifier.critical_expander.clone(),
        };
        v = refined.classify(&s)?;
    }
    Ok(v)
}

/// Bisection on the cone angle between a repulsion and a coalescence
/// angle.
pub fn estimate_critical_angle_pde(
    family: SmoothingFamily,
    param: f64,
    opts: &BisectionOptions,
    params: &SolverParams,
) -> Result<PdeCriticalEstimate, ClassifyError> {
    if !(opts.tol_angle >= 0.25f64.to_radians() - 1e-15) {
        return Err(ClassifyError::InvalidParameter(format!(
            "tol_angle must be at least 0.25°, got {}°",
            opts.tol_angle.to_degrees()
        )));
    }
    let classifier = Classifier::new(*params)?;
    let (mut lo, mut hi) = opts.bracket;
    let ends: Vec<Verdict> = [lo, hi]
        .par_iter()
        .map(|&a| probe(&classifier, family, param, a, opts.refinements))
        .collect::<Result<_, _>>()?;
    for (v, expected) in ends.iter().zip([Decision::Repulsion, Decision::Coalescence]) {
        if v.decision != expected {
            return Err(ClassifyError::InvalidBracket {
                alpha_deg: v.alpha_deg,
                found: v.decision,
                expected,
            });
        }
    }
    let mut probes = ends;
    while hi - lo > opts.tol_angle {
        let mid = 0.5 * (lo + hi);
        let v = probe(&classifier, family, param, mid, opts.refinements)?;
        let decision = v.decision;
        probes.push(v);
        match decision {
            Decision::Repulsion => lo = mid,
            Decision::Coalescence => hi = mid,
            Decision::Undecided => {
                probes.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
                return Err(ClassifyError::Inconclusive {
                    alpha_deg: mid.to_degrees(),
                    lo_deg: lo.to_degrees(),
                    hi_deg: hi.to_degrees(),
                    probes,
                });
            }
        }
    }
    let mut consistent = true;
    if opts.check_half_width {
        let wide: Vec<Decision> = [lo, hi]
            .par_iter()
            .map(|&a| -> Result<Decision, ClassifyError> {
                let s = make_smoothing(a, family, param)?;
                let base = classifier.params.resolve(&s)?;
                let c = Classifier {
                    params: SolverParams {
                        half_width: Some(2.0 * base.half_width),
                        ..classifier.params
                    },
                    critical_expander: classifier.critical_expander.clone(),
                };
                Ok(probe(&c, family, param, a, opts.refinements)?.decision)
            })
            .collect::<Result<_, _>>()?;
        consistent = wide == [Decision::Repulsion, Decision::Coalescence];
    }
    probes.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let alpha = 0.5 * (lo + hi);
    Ok(PdeCriticalEstimate {
        alpha,
        alpha_deg: alpha.to_degrees(),
        bracket: (lo, hi),
        family,
        param,
        probes,
        doubled_half_width_consistent: consistent,
        alpha_crit_ode: classifier.alpha_crit(),
    })
}

/// Classify every angle concurrently; verdicts come back in input order.
pub fn sweep(
    alphas: &[f64],
    family: SmoothingFamily,
    param: f64,
    params: &SolverParams,
    refinements: usize,
) -> Result<Vec<Verdict>, ClassifyError> {
    let classifier = Classifier::new(*params)?;
    alphas
        .par_iter()
        .map(|&a| probe(&classifier, family, param, a, refinements))
        .collect()
}

/// Streams physical snapshots `(t, y, u)` in long format every `cadence`
/// accepted steps.
pub struct SnapshotWriter<W: Write> {
    writer: csv::Writer<W>,
    cadence: usize,
    seen: usize,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(w: W, cadence: usize) -> csv::Result<Self> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["t", "y", "u"])?;
        Ok(Self {
            writer,
            cadence: cadence.max(1),
            seen: 0,
        })
    }

    pub fn observe(&mut self, state: &EvolutionState) -> csv::Result<()> {
        let due = self.seen % self.cadence == 0 || state.status != Status::Running;
        self.seen += 1;
        if !due {
            return Ok(());
        }
        let (y, u) = state.physical();
        for (y, u) in y.iter().zip(&u) {
            self.writer
                .write_record(&[state.t.to_string(), y.to_string(), u.to_string()])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))
    }
}

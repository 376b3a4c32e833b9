//! Rotationally symmetric self-expanders and their asymptotic cone angles.
//!
//! A self-expander `M` satisfies `H = -x·ν/2`. For a hypersurface of
//! revolution about the `x₁` axis generated by a planar curve `(y, u)`,
//! `u = |x̂|`, this becomes an ODE for the generating curve. Two graph forms
//! are solved:
//!
//! * one-sheeted: `u = u(y)`, shot from the axis crossing `u(0) = C`,
//!   `u_y(0) = 0`:
//!   `u_yy = (1 + u_y²) ((u − y u_y)/2 + (n − 2)/u)`
//! * two-sheeted: `y = y(u)`, shot from `y(0) = b`, `y_u(0) = 0`:
//!   `y_uu = (1 + y_u²) (y/2 − y_u ((n − 2)/u + u/2))`
//!
//! The derivation of the second form and of the axis limit
//! `y_uu(0) = b / (2(n − 1))` is written up in `docs/derivation.md`.
//!
//! Both integrations stop at the abscissa horizon or once the curve is at
//! distance `max(radius_horizon, 2·shoot_param)` from the origin, whichever
//! comes first. The expander equation is stiff far from the origin (the
//! relaxation rate towards the asymptotic ray grows linearly with `|x|`), so
//! the radius bound keeps explicit stepping affordable at extreme shoot
//! parameters.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{first_derivative_weights, hermite};
use crate::ode::{self, Control, StepError, StepperConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("height {u} is not positive at y = {y}")]
    Domain { y: f64, u: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("adaptive stepping failed: {0}")]
    StepFailure(String),
    #[error(
        "tail estimators disagree: ratio angle {ratio_angle}, slope angle {slope_angle} \
         (limit {limit})"
    )]
    NotConverged {
        ratio_angle: f64,
        slope_angle: f64,
        limit: f64,
    },
    #[error("two-sheeted profile lost convexity at u = {at}: y_uu = {value}")]
    ConvexityLoss { at: f64, value: f64 },
    #[error("profile has {0} samples, need at least 3")]
    TooFewSamples(usize),
    #[error("malformed profile data: {0}")]
    Format(String),
}

impl<E: Into<ProfileError>> From<StepError<E>> for ProfileError {
    fn from(e: StepError<E>) -> Self {
        match e {
            StepError::Rhs(inner) => inner.into(),
            other => ProfileError::StepFailure(match other {
                StepError::Stalled { t, h } => format!("step {h:e} below floor at {t}"),
                StepError::Budget(n) => format!("step budget {n} exhausted"),
                StepError::Rhs(_) => unreachable!(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    OneSheeted,
    TwoSheeted,
}

/// One stored point of a generating curve.
///
/// For one-sheeted profiles `(abscissa, height, slope) = (y, u, u_y)`; for
/// two-sheeted profiles `(u, y, y_u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub abscissa: f64,
    pub height: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    /// Radians.
    pub angle: f64,
    /// Radians.
    pub uncertainty: f64,
}

impl AngleEstimate {
    pub fn degrees(&self) -> f64 {
        self.angle.to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Abscissa horizon: `y_max` (one-sheeted) or `u_max` (two-sheeted).
    pub horizon: f64,
    /// Distance from the origin after which integration stops.
    pub radius_horizon: f64,
    /// Local error tolerance (absolute and relative).
    pub tol: f64,
    /// `SlopeOverflow` cap on `|slope|`.
    pub slope_cap: f64,
    /// Largest step, which is also the coarsest sample spacing.
    pub max_step: f64,
    /// Largest turn of the tangent per step, radians; keeps samples dense
    /// where the curve bends quickly.
    pub max_turn: f64,
    /// Angle tolerance for the tail convergence test, radians.
    pub angle_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            radius_horizon: 100.0,
            tol: 1e-9,
            slope_cap: 89.999f64.to_radians().tan(),
            max_step: 0.01,
            max_turn: 2e-3,
            angle_tol: 1e-4,
        }
    }
}

impl ShootingOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return Err(ProfileError::InvalidParameter(format!(
                "tol must lie in (0, 1e-3], got {}",
                self.tol
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ProfileError::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.radius_horizon > 0.0
            && self.slope_cap > 0.0
            && self.max_step > 0.0
            && self.max_turn > 0.0)
        {
            return Err(ProfileError::InvalidParameter(
                "radius horizon, slope cap, max step and max turn must be positive".into(),
            ));
        }
        Ok(())
    }

    fn stepper(&self) -> StepperConfig {
        StepperConfig {
            tol: self.tol,
            h_init: 1e-4f64.min(self.max_step),
            h_max: self.max_step,
            max_steps: 5_000_000,
            max_turn: Some((1, self.max_turn)),
        }
    }
}

/// A computed generating curve of a rotationally symmetric self-expander.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpanderProfile {
    pub dimension: u32,
    pub sheet: Sheet,
    /// `C = u(0)` (one-sheeted) or `b = y(0)` (two-sheeted).
    pub shoot_param: f64,
    pub samples: Vec<Sample>,
    pub horizon: f64,
    pub tol: f64,
    /// The slope cap was hit; the samples end there.
    pub slope_overflow: bool,
    /// Asymptotic angle, when the tail estimators agreed.
    pub angle: Option<AngleEstimate>,
}

fn check_dimension(n: u32) -> Result<(), ProfileError> {
    if n < 3 {
        return Err(ProfileError::InvalidParameter(format!(
            "dimension must be at least 3, got {n}"
        )));
    }
    Ok(())
}

/// Right-hand side of the one-sheeted graph equation, `u_yy(y, u, u_y)`.
pub fn one_sheeted_rhs(n: u32, y: f64, u: f64, p: f64) -> Result<f64, ProfileError> {
    if !(u > 0.0) {
        return Err(ProfileError::Domain { y, u });
    }
    Ok((1.0 + p * p) * (0.5 * (u - p * y) + (n as f64 - 2.0) / u))
}

/// Right-hand side of the two-sheeted graph equation, `y_uu(u, y, y_u)`,
/// with the removable singularity at the axis replaced by its limit.
pub fn two_sheeted_rhs(n: u32, u: f64, y: f64, q: f64) -> f64 {
    let k = n as f64 - 2.0;
    if u == 0.0 {
        return y / (2.0 * (k + 1.0));
    }
    (1.0 + q * q) * (0.5 * y - q * (k / u + 0.5 * u))
}

/// Shoot the one-sheeted expander with `u(0) = c`, `u_y(0) = 0`.
pub fn integrate_one_sheeted(
    c: f64,
    n: u32,
    opts: &ShootingOptions,
) -> Result<ExpanderProfile, ProfileError> {
    check_dimension(n)?;
    opts.validate()?;
    if !(c.is_finite() && c > 0.0) {
        return Err(ProfileError::InvalidParameter(format!(
            "C must be positive and finite, got {c}"
        )));
    }
    let r_stop = opts.radius_horizon.max(2.0 * c);
    let mut samples = Vec::with_capacity(1024);
    let mut overflow = false;
    ode::integrate::<2, ProfileError, _, _>(
        |y, s| Ok([s[1], one_sheeted_rhs(n, y, s[0], s[1])?]),
        0.0,
        [c, 0.0],
        opts.horizon,
        &opts.stepper(),
        |y, s| {
            samples.push(Sample {
                abscissa: y,
                height: s[0],
                slope: s[1],
            });
            if s[1].abs() > opts.slope_cap {
                overflow = true;
                return Control::Stop;
            }
            if y.hypot(s[0]) >= r_stop {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    let mut profile = ExpanderProfile {
        dimension: n,
        sheet: Sheet::OneSheeted,
        shoot_param: c,
        samples,
        horizon: opts.horizon,
        tol: opts.tol,
        slope_overflow: overflow,
        angle: None,
    };
    profile.angle = asymptotic_angle(&profile, opts.angle_tol).ok();
    Ok(profile)
}

/// Shoot the two-sheeted expander `y = y(u)` with `y(0) = b`, `y_u(0) = 0`.
pub fn integrate_two_sheeted(
    b: f64,
    n: u32,
    opts: &ShootingOptions,
) -> Result<ExpanderProfile, ProfileError> {
    check_dimension(n)?;
    opts.validate()?;
    if !(b.is_finite() && b > 0.0) {
        return Err(ProfileError::InvalidParameter(format!(
            "b must be positive and finite, got {b}"
        )));
    }
    let r_stop = opts.radius_horizon.max(2.0 * b);
    let mut samples = Vec::with_capacity(1024);
    let mut overflow = false;
    ode::integrate::<2, ProfileError, _, _>(
        |u, s| Ok([s[1], two_sheeted_rhs(n, u, s[0], s[1])]),
        0.0,
        [b, 0.0],
        opts.horizon,
        &opts.stepper(),
        |u, s| {
            samples.push(Sample {
                abscissa: u,
                height: s[0],
                slope: s[1],
            });
            if s[1].abs() > opts.slope_cap {
                overflow = true;
                return Control::Stop;
            }
            if u.hypot(s[0]) >= r_stop {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    for s in &samples {
        let yuu = two_sheeted_rhs(n, s.abscissa, s.height, s.slope);
        if yuu < -opts.tol {
            return Err(ProfileError::ConvexityLoss {
                at: s.abscissa,
                value: yuu,
            });
        }
    }
    let mut profile = ExpanderProfile {
        dimension: n,
        sheet: Sheet::TwoSheeted,
        shoot_param: b,
        samples,
        horizon: opts.horizon,
        tol: opts.tol,
        slope_overflow: overflow,
        angle: None,
    };
    profile.angle = asymptotic_angle(&profile, opts.angle_tol).ok();
    Ok(profile)
}

/// Axial coordinate, radial coordinate and `d radius / d axial` of a sample.
fn cone_coordinates(sheet: Sheet, s: &Sample) -> (f64, f64, f64) {
    match sheet {
        Sheet::OneSheeted => (s.abscissa, s.height, s.slope),
        Sheet::TwoSheeted => (s.height, s.abscissa, 1.0 / s.slope),
    }
}

/// Tail estimate of the asymptotic angle of a profile.
///
/// The estimate is the mean of `arctan(radius/axial)` and the angle of the
/// tangent at the last sample. For expanders both approach the limit from
/// opposite sides at the same `1/r²` rate, so the mean cancels the leading
/// error. The uncertainty is the disagreement of the two plus the
/// tail-variation bound `D / y_end`, with `D` the largest
/// `y² |(u/y)_y|` over the outer half of the samples.
pub fn asymptotic_angle(profile: &ExpanderProfile, tol: f64) -> Result<AngleEstimate, ProfileError> {
    let last = profile
        .samples
        .last()
        .ok_or(ProfileError::TooFewSamples(0))?;
    let (axial, radial, drdz) = cone_coordinates(profile.sheet, last);
    if !(axial > 0.0) {
        return Err(ProfileError::NotConverged {
            ratio_angle: FRAC_PI_2,
            slope_angle: drdz.atan(),
            limit: 10.0 * tol,
        });
    }
    let ratio_angle = (radial / axial).atan();
    let slope_angle = if drdz.is_finite() { drdz.atan() } else { FRAC_PI_2 };
    let disagreement = (ratio_angle - slope_angle).abs();
    if disagreement > 10.0 * tol {
        return Err(ProfileError::NotConverged {
            ratio_angle,
            slope_angle,
            limit: 10.0 * tol,
        });
    }
    let half = profile.samples.last().map(|s| s.abscissa * 0.5).unwrap_or(0.0);
    let d = profile
        .samples
        .iter()
        .filter(|s| s.abscissa >= half)
        .map(|s| {
            let (z, r, dr) = cone_coordinates(profile.sheet, s);
            if z > 0.0 && dr.is_finite() {
                z * (dr - r / z).abs()
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max);
    let angle = 0.5 * (ratio_angle + slope_angle);
    let tan = angle.tan();
    let tail = d / axial / (1.0 + tan * tan);
    Ok(AngleEstimate {
        angle,
        uncertainty: disagreement + tail,
    })
}

/// Largest residual of `H + x·ν/2` over the interior samples of a profile.
///
/// The curvature term comes from 5-point finite differences of the tangent
/// angle `arctan(slope)` on the sample abscissas.
pub fn expander_residual(profile: &ExpanderProfile) -> Result<f64, ProfileError> {
    let s = &profile.samples;
    if s.len() < 3 {
        return Err(ProfileError::TooFewSamples(s.len()));
    }
    let k = profile.dimension as f64 - 2.0;
    let mut worst = 0.0f64;
    for i in 1..s.len() - 1 {
        let lo = i.saturating_sub(2).min(s.len().saturating_sub(5));
        let hi = (lo + 5).min(s.len());
        let xs: Vec<f64> = s[lo..hi].iter().map(|p| p.abscissa).collect();
        let w = first_derivative_weights(s[i].abscissa, &xs);
        // differencing the tangent angle stays accurate where the graph steepens
        let turn: f64 = s[lo..hi].iter().zip(&w).map(|(p, w)| w * p.slope.atan()).sum();
        let Sample {
            abscissa: x,
            height: h,
            slope: p,
        } = s[i];
        let wlen = (1.0 + p * p).sqrt();
        let r = match profile.sheet {
            // (n−2)/(u W) − u''/W³ + (u − y u')/(2W), with u''/W² = (arctan u')'
            Sheet::OneSheeted => k / (h * wlen) - turn / wlen + (h - x * p) / (2.0 * wlen),
            // y''/W³ + (n−2) y'/(u W) − (y − u y')/(2W)
            Sheet::TwoSheeted => turn / wlen + k * p / (x * wlen) - (h - x * p) / (2.0 * wlen),
        };
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

impl ExpanderProfile {
    /// Asymptotic angle, or `NotConverged` if the tail estimators disagreed.
    pub fn angle(&self) -> Result<AngleEstimate, ProfileError> {
        match self.angle {
            Some(a) => Ok(a),
            None => asymptotic_angle(self, 1e-4),
        }
    }

    pub fn last(&self) -> Sample {
        *self.samples.last().expect("profile has samples")
    }

    /// Height and slope at abscissa `x`, by cubic Hermite interpolation.
    ///
    /// One-sheeted profiles are extended evenly to `x < 0`. Beyond the last
    /// sample the profile continues along its last tangent.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let (ax, sign) = match self.sheet {
            Sheet::OneSheeted if x < 0.0 => (-x, -1.0),
            _ => (x, 1.0),
        };
        let s = &self.samples;
        let last = s[s.len() - 1];
        if ax >= last.abscissa {
            return (
                last.height + last.slope * (ax - last.abscissa),
                sign * last.slope,
            );
        }
        let j = s.partition_point(|p| p.abscissa <= ax).max(1);
        let (a, b) = (s[j - 1], s[j]);
        let (v, d) = hermite(
            a.abscissa, a.height, a.slope, b.abscissa, b.height, b.slope, ax,
        );
        (v, sign * d)
    }

    /// Second derivative at every sample, evaluated from the ODE.
    pub fn second_derivatives(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match self.sheet {
                Sheet::OneSheeted => {
                    one_sheeted_rhs(self.dimension, s.abscissa, s.height, s.slope)
                        .unwrap_or(f64::NAN)
                }
                Sheet::TwoSheeted => two_sheeted_rhs(self.dimension, s.abscissa, s.height, s.slope),
            })
            .collect()
    }

    pub fn header(&self) -> ProfileHeader {
        ProfileHeader {
            n: self.dimension,
            sheet: self.sheet,
            shoot_param: self.shoot_param,
            alpha: self.angle.map(|a| a.angle),
            alpha_deg: self.angle.map(|a| a.angle.to_degrees()),
            uncertainty: self.angle.map(|a| a.uncertainty),
            tol: self.tol,
            horizon: self.horizon,
            slope_overflow: self.slope_overflow,
            samples: self.samples.len(),
        }
    }

    /// Write the samples as CSV with columns `abscissa,height,slope`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ProfileError> {
        let mut wr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wr.serialize(s).map_err(|e| ProfileError::Format(e.to_string()))?;
        }
        wr.flush().map_err(|e| ProfileError::Format(e.to_string()))
    }

    /// Rebuild a profile from a JSON header and the CSV written by
    /// [`ExpanderProfile::write_csv`]. Lines starting with `#` are skipped.
    pub fn from_parts<R: Read>(header: &ProfileHeader, csv_data: R) -> Result<Self, ProfileError> {
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(csv_data);
        let samples = rd
            .deserialize()
            .collect::<Result<Vec<Sample>, _>>()
            .map_err(|e| ProfileError::Format(e.to_string()))?;
        let angle = match (header.alpha, header.uncertainty) {
            (Some(angle), Some(uncertainty)) => Some(AngleEstimate { angle, uncertainty }),
            _ => None,
        };
        Ok(Self {
            dimension: header.n,
            sheet: header.sheet,
            shoot_param: header.shoot_param,
            samples,
            horizon: header.horizon,
            tol: header.tol,
            slope_overflow: header.slope_overflow,
            angle,
        })
    }
}

/// JSON metadata accompanying a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub n: u32,
    pub sheet: Sheet,
    pub shoot_param: f64,
    pub alpha: Option<f64>,
    pub alpha_deg: Option<f64>,
    pub uncertainty: Option<f64>,
    pub tol: f64,
    pub horizon: f64,
    pub slope_overflow: bool,
    pub samples: usize,
}

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RevolutionSurface;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("smoothing is not positive: u({y}) = {u}")]
    NotPositive { y: f64, u: f64 },
}

/// The bridge replacing the tip of the double cone `γ|y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothingKind {
    /// `√(γ²y² + δ²)`.
    Hyperbola { delta: f64 },
    /// Polynomial on `[-b, b]` matching `γ|y|` to second order at `±b`.
    Spline { b: f64, coefficients: [f64; 6] },
}

/// Which family [`make_smoothing`] should build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingFamily {
    Hyperbola,
    Spline,
}

/// Hyperbola heights within this distance of the cone count as equal to it
/// when reporting the smoothing window.
pub const HYPERBOLA_WINDOW_TOL: f64 = 1e-10;

/// An even, positive initial profile agreeing with the cone away from a
/// window around the tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSmoothing {
    pub alpha: f64,
    pub gamma: f64,
    pub kind: SmoothingKind,
    /// `(a, b)` outside of which the profile equals `γ|y|` (to
    /// [`HYPERBOLA_WINDOW_TOL`] for the hyperbola).
    pub window: (f64, f64),
    pub outside_cone: bool,
}

pub fn make_smoothing(
    alpha: f64,
    family: SmoothingFamily,
    param: f64,
) -> Result<ConeSmoothing, SmoothingError> {
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(SmoothingError::InvalidParameter(format!(
            "alpha must lie in (0, π/2), got {alpha}"
        )));
    }
    if !(param > 0.0 && param.is_finite()) {
        return Err(SmoothingError::InvalidParameter(format!(
            "smoothing parameter must be positive, got {param}"
        )));
    }
    let gamma = alpha.tan();
    let (kind, window) = match family {
        SmoothingFamily::Hyperbola => {
            let w = param * param / (2.0 * gamma * HYPERBOLA_WINDOW_TOL);
            (SmoothingKind::Hyperbola { delta: param }, (-w, w))
        }
        SmoothingFamily::Spline => {
            let b = param;
            // the unique quintic matching value, slope and curvature at ±b
            // is even, leaving three nonzero coefficients
            let coefficients = [
                3.0 * gamma * b / 8.0,
                0.0,
                3.0 * gamma / (4.0 * b),
                0.0,
                -gamma / (8.0 * b * b * b),
                0.0,
            ];
            (SmoothingKind::Spline { b, coefficients }, (-b, b))
        }
    };
    let mut s = ConeSmoothing {
        alpha,
        gamma,
        kind,
        window,
        outside_cone: false,
    };
    let reach = match kind {
        SmoothingKind::Hyperbola { delta } => 4.0 * delta / gamma.min(1.0),
        SmoothingKind::Spline { b, .. } => b,
    };
    let mut outside = true;
    for i in 0..=4000 {
        let y = reach * i as f64 / 4000.0;
        let u = s.height(y);
        if !(u > 0.0) {
            return Err(SmoothingError::NotPositive { y, u });
        }
        // the spline meets the cone at the window edge, up to rounding
        outside &= u >= gamma * y * (1.0 - 1e-14);
    }
    s.outside_cone = outside;
    Ok(s)
}

impl ConeSmoothing {
    pub fn height(&self, y: f64) -> f64 {
        self.derivatives(y).0
    }

    pub fn slope(&self, y: f64) -> f64 {
        self.derivatives(y).1
    }

    /// `(u, u', u'')` at `y`.
    pub fn derivatives(&self, y: f64) -> (f64, f64, f64) {
        let g = self.gamma;
        match self.kind {
            SmoothingKind::Hyperbola { delta } => {
                let r = (g * g * y * y + delta * delta).sqrt();
                (r, g * g * y / r, g * g * delta * delta / (r * r * r))
            }
            SmoothingKind::Spline { b, coefficients: c } => {
                if y.abs() >= b {
                    return (g * y.abs(), g * y.signum(), 0.0);
                }
                let mut v = 0.0;
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for k in (0..6).rev() {
                    v = v * y + c[k];
                    if k >= 1 {
                        d1 = d1 * y + k as f64 * c[k];
                    }
                    if k >= 2 {
                        d2 = d2 * y + (k * (k - 1)) as f64 * c[k];
                    }
                }
                (v, d1, d2)
            }
        }
    }

    /// `u_α(0)`.
    pub fn tip_height(&self) -> f64 {
        self.height(0.0)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SmoothingKind::Hyperbola { .. } => "hyperbola",
            SmoothingKind::Spline { .. } => "spline",
        }
    }

    pub fn surface(&self, half_width: f64) -> RevolutionSurface {
        let s = *self;
        let t = *self;
        RevolutionSurface::new(
            move |y| s.height(y),
            move |y| t.slope(y),
            3,
            (-half_width, half_width),
        )
    }
}

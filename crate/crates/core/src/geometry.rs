//! Surfaces of revolution `{(y, x̂) : |x̂| = u(y)}` in `R^n`, areas inside
//! balls centred on the axis, parabolic rescaling, and two closed-form
//! comparison objects (the shrinking cylinder and the catenoid).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::profile::{ExpanderProfile, Sheet};
use crate::quadrature::{self, QuadratureFailure};
use crate::search::bisect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureFailure),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("t = {t} is at or past the cylinder pinch time {pinch}")]
    PastPinch { t: f64, pinch: f64 },
    #[error("negative height {u} at y = {y}")]
    NegativeHeight { y: f64, u: f64 },
}

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Generatrix `u(y)` with its derivative, rotated about the `y` axis.
#[derive(Clone)]
pub struct RevolutionSurface {
    u: Scalar,
    du: Scalar,
    pub dimension: u32,
    pub domain: (f64, f64),
}

impl fmt::Debug for RevolutionSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RevolutionSurface")
            .field("dimension", &self.dimension)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl RevolutionSurface {
    pub fn new<U, D>(u: U, du: D, dimension: u32, domain: (f64, f64)) -> Self
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            u: Arc::new(u),
            du: Arc::new(du),
            dimension,
            domain,
        }
    }

    pub fn cylinder(radius: f64, dimension: u32, domain: (f64, f64)) -> Self {
        Self::new(move |_| radius, |_| 0.0, dimension, domain)
    }

    /// The double cone `γ|y|`.
    pub fn double_cone(gamma: f64, dimension: u32, domain: (f64, f64)) -> Self {
        Self::new(
            move |y: f64| gamma * y.abs(),
            move |y: f64| gamma * y.signum(),
            dimension,
            domain,
        )
    }

    /// One-sheeted profiles become even graphs on `[-y_end, y_end]`.
    pub fn from_profile(profile: ExpanderProfile) -> Result<Self, GeometryError> {
        if profile.sheet != Sheet::OneSheeted {
            return Err(GeometryError::InvalidParameter(
                "only one-sheeted profiles are graphs over the axis".into(),
            ));
        }
        let end = profile.last().abscissa;
        let n = profile.dimension;
        let p = Arc::new(profile);
        let q = p.clone();
        Ok(Self::new(
            move |y| p.eval(y).0,
            move |y| q.eval(y).1,
            n,
            (-end, end),
        ))
    }

    pub fn height(&self, y: f64) -> f64 {
        (self.u)(y)
    }

    pub fn slope(&self, y: f64) -> f64 {
        (self.du)(y)
    }
}

/// Objects carrying the parabolic scaling `x ↦ λx, t ↦ λ²t`.
pub trait ParabolicRescale: Sized {
    fn parabolic_rescale(&self, lambda: f64) -> Self;
}

impl ParabolicRescale for RevolutionSurface {
    /// `u_λ(y) = λ·u(y/λ)`.
    fn parabolic_rescale(&self, lambda: f64) -> Self {
        let (u, du) = (self.u.clone(), self.du.clone());
        Self {
            u: Arc::new(move |y| lambda * u(y / lambda)),
            du: Arc::new(move |y| du(y / lambda)),
            dimension: self.dimension,
            domain: (lambda * self.domain.0, lambda * self.domain.1),
        }
    }
}

pub fn parabolic_rescale<T: ParabolicRescale>(object: &T, lambda: f64) -> T {
    object.parabolic_rescale(lambda)
}

/// Area of the unit sphere `S^k`.
pub fn unit_sphere_area(k: u32) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        k => 2.0 * PI / (k - 1) as f64 * unit_sphere_area(k - 2),
    }
}

const SCAN_POINTS: usize = 1024;

/// `H^{n-1}(M ∩ B_ρ(c e_1))` for a ball centred on the rotation axis.
pub fn area_in_ball(
    surface: &RevolutionSurface,
    center: f64,
    rho: f64,
) -> Result<f64, GeometryError> {
    area_in_ball_tol(surface, center, rho, 1e-10)
}

/// [`area_in_ball`] with an explicit relative quadrature tolerance.
pub fn area_in_ball_tol(
    surface: &RevolutionSurface,
    center: f64,
    rho: f64,
    tol: f64,
) -> Result<f64, GeometryError> {
    if !(rho > 0.0 && rho.is_finite() && center.is_finite()) {
        return Err(GeometryError::InvalidParameter(format!(
            "need finite center and rho > 0, got {center}, {rho}"
        )));
    }
    let lo = surface.domain.0.max(center - rho);
    let hi = surface.domain.1.min(center + rho);
    if lo >= hi {
        return Ok(0.0);
    }
    let inside = |y: f64| (y - center).powi(2) + surface.height(y).powi(2) - rho * rho;

    // sign changes of `inside` on a fine scan, refined by bisection
    let mut cuts = vec![lo];
    let mut prev = (lo, inside(lo));
    for i in 1..=SCAN_POINTS {
        let y = lo + (hi - lo) * i as f64 / SCAN_POINTS as f64;
        let g = inside(y);
        if (g < 0.0) != (prev.1 < 0.0) {
            let (a, b) = bisect::<std::convert::Infallible, _>(
                |y| Ok(inside(y)),
                prev.0,
                y,
                1e-15 * (1.0 + y.abs()),
                0.0,
                200,
            )
            .unwrap_or((prev.0, y));
            cuts.push(0.5 * (a + b));
        }
        prev = (y, g);
    }
    cuts.push(hi);

    let k = surface.dimension.saturating_sub(2);
    let omega = unit_sphere_area(k);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a || inside(0.5 * (a + b)) >= 0.0 {
            continue;
        }
        let bad = std::cell::Cell::new(None);
        let part = quadrature::integrate(
            |y| {
                let u = surface.height(y);
                if u < 0.0 && bad.get().is_none() {
                    bad.set(Some((y, u)));
                }
                u.max(0.0).powi(k as i32) * (1.0 + surface.slope(y).powi(2)).sqrt()
            },
            a,
            b,
            1e-14,
            tol,
        )?;
        if let Some((y, u)) = bad.get() {
            return Err(GeometryError::NegativeHeight { y, u });
        }
        area += part;
    }
    Ok(omega * area)
}

/// Radius of the cylinder of radius `r` shrinking under the flow in `R^3`.
pub fn cylinder_exact(r: f64, t: f64) -> Result<f64, GeometryError> {
    cylinder_exact_n(r, t, 3)
}

/// `√(R² − 2(n−2)t)`, the cylinder `S^{n-2} × R` under mean curvature flow.
pub fn cylinder_exact_n(r: f64, t: f64, n: u32) -> Result<f64, GeometryError> {
    if !(r > 0.0) || n < 3 {
        return Err(GeometryError::InvalidParameter(format!(
            "need R > 0 and n >= 3, got R = {r}, n = {n}"
        )));
    }
    let pinch = r * r / (2.0 * (n - 2) as f64);
    if t >= pinch {
        return Err(GeometryError::PastPinch { t, pinch });
    }
    Ok((r * r - 2.0 * (n - 2) as f64 * t).sqrt())
}

/// Tangency point `y*` of the line through the origin touching `cosh`,
/// the root of `cosh y = y sinh y`.
pub fn catenoid_tangent_point() -> f64 {
    let (a, b) = bisect::<std::convert::Infallible, _>(
        |y: f64| Ok(y.cosh() - y * y.sinh()),
        0.5,
        2.0,
        1e-15,
        0.0,
        200,
    )
    .expect("root bracketed on [0.5, 2]");
    0.5 * (a + b)
}

/// Half-angle of the tangent cone of the catenoid generatrix `u = cosh y`,
/// measured from the axis like the cone angle `α`.
pub fn catenoid_tangent_cone_angle() -> f64 {
    catenoid_tangent_point().sinh().atan()
}

/// The competing model's critical angle as quoted in the literature, in
/// degrees. It uses a different angle convention and is shown for
/// comparison only.
pub const COMPETING_MODEL_ANGLE_DEG: f64 = 59.0;

//! The angle map `C ↦ α(C)` of one-sheeted expanders, its minimum
//! `α*_crit(n)`, and nonuniqueness witnesses.
//!
//! `α(C) → π/2` at both ends of `(0, ∞)`, so the map attains an interior
//! minimum. Unimodality is not known, so every search starts with a guard
//! scan of the whole grid and reports separated minima instead of picking
//! one.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{
    integrate_one_sheeted, integrate_two_sheeted, AngleEstimate, ExpanderProfile, ProfileError,
    ShootingOptions,
};
use crate::search::{bisect, golden_section, SearchError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticalError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("angle map has {} separated local minima", .brackets.len())]
    MultipleMinima {
        /// `(C_lo, C_hi)` around each minimum.
        brackets: Vec<(f64, f64)>,
        /// Result for the deepest minimum.
        deepest: Box<CriticalAngleResult>,
    },
    #[error("target angle {target} rad is not above the critical angle {alpha_crit} rad")]
    BelowCritical { target: f64, alpha_crit: f64 },
    #[error("no sign change for the two-sheeted angle on b in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("two-sheeted angle is not monotone in b on the scanned range")]
    NotMonotone,
    #[error("too few converged angle-map entries to bracket a minimum")]
    NoMinimum,
}

impl From<SearchError<CriticalError>> for CriticalError {
    fn from(e: SearchError<CriticalError>) -> Self {
        match e {
            SearchError::Eval(e) => e,
            SearchError::NoSignChange { lo, hi, .. } => CriticalError::BracketFailure { lo, hi },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleMapEntry {
    #[serde(rename = "C")]
    pub c: f64,
    /// Radians; `None` when the tail estimators did not converge.
    pub alpha: Option<f64>,
    pub uncertainty: Option<f64>,
}

/// Sampled `C ↦ α(C)` on a log-uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleMap {
    pub dimension: u32,
    pub c_lo: f64,
    pub c_hi: f64,
    /// Offset of the interior grid points as a fraction of one log cell.
    pub grid_offset: f64,
    pub entries: Vec<AngleMapEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AngleMapRow {
    #[serde(rename = "C")]
    c: f64,
    alpha_deg: Option<f64>,
    uncertainty_deg: Option<f64>,
}

impl AngleMap {
    /// Converged entries as `(C, α, uncertainty)`.
    pub fn converged(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.entries
            .iter()
            .filter_map(|e| Some((e.c, e.alpha?, e.uncertainty?)))
    }

    /// CSV with columns `C,alpha_deg,uncertainty_deg`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(AngleMapRow {
                c: e.c,
                alpha_deg: e.alpha.map(f64::to_degrees),
                uncertainty_deg: e.uncertainty.map(f64::to_degrees),
            })?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn angle_of(c: f64, n: u32, opts: &ShootingOptions) -> Result<AngleEstimate, CriticalError> {
    Ok(integrate_one_sheeted(c, n, opts)?.angle()?)
}

/// Log-uniform grid on `[c_lo, c_hi]` whose interior points are shifted by
/// `offset` (in `[0, 1)`) of a cell.
fn grid(c_lo: f64, c_hi: f64, count: usize, offset: f64) -> Vec<f64> {
    let (a, b) = (c_lo.ln(), c_hi.ln());
    let step = (b - a) / (count - 1) as f64;
    (0..count)
        .map(|i| match i {
            0 => c_lo,
            i if i + 1 == count => c_hi,
            i => (a + (i as f64 - 0.5 + offset) * step).exp(),
        })
        .collect()
}

/// Offset in `[0, 1)` derived from a seed, with seed 0 giving a centered
/// grid.
fn seed_offset(seed: u64) -> f64 {
    if seed == 0 {
        return 0.5;
    }
    (seed as f64 * 0.618_033_988_749_894_9).fract()
}

/// Sample `α(C)` on a log-uniform grid of `samples` points.
///
/// Entries whose tail did not converge are kept with `alpha = None`.
pub fn build_angle_map(
    n: u32,
    c_lo: f64,
    c_hi: f64,
    samples: usize,
    opts: &ShootingOptions,
) -> Result<AngleMap, CriticalError> {
    build_angle_map_seeded(n, c_lo, c_hi, samples, opts, 0)
}

pub fn build_angle_map_seeded(
    n: u32,
    c_lo: f64,
    c_hi: f64,
    samples: usize,
    opts: &ShootingOptions,
    seed: u64,
) -> Result<AngleMap, CriticalError> {
    if !(c_lo > 0.0 && c_lo < c_hi && c_hi.is_finite()) {
        return Err(CriticalError::InvalidParameter(format!(
            "need 0 < C_lo < C_hi, got [{c_lo}, {c_hi}]"
        )));
    }
    if samples < 8 {
        return Err(CriticalError::InvalidParameter(format!(
            "need at least 8 samples, got {samples}"
        )));
    }
    let offset = seed_offset(seed);
    let entries = grid(c_lo, c_hi, samples, offset)
        .into_par_iter()
        .map(|c| match angle_of(c, n, opts) {
            Ok(a) => Ok(AngleMapEntry {
                c,
                alpha: Some(a.angle),
                uncertainty: Some(a.uncertainty),
            }),
            Err(CriticalError::Profile(ProfileError::NotConverged { .. })) => Ok(AngleMapEntry {
                c,
                alpha: None,
                uncertainty: None,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AngleMap {
        dimension: n,
        c_lo,
        c_hi,
        grid_offset: offset,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    pub c_lo: f64,
    pub c_hi: f64,
    pub grid: usize,
    pub grid_seed: u64,
    pub shooting: ShootingOptions,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            c_lo: 1e-2,
            c_hi: 1e2,
            grid: 64,
            grid_seed: 0,
            shooting: ShootingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalAngleResult {
    pub n: u32,
    pub alpha_crit: AngleEstimate,
    pub c_star: f64,
    /// Grid neighbours of the minimizer; both have angles above
    /// `alpha_crit + uncertainty`.
    pub bracket: (f64, f64),
    pub alpha_crit_deg: f64,
}

/// Indices of local minima of the converged entries, merged when the ridge
/// separating two of them is within the combined uncertainty.
fn significant_minima(points: &[(f64, f64, f64)]) -> Vec<usize> {
    let mut minima: Vec<usize> = (1..points.len().saturating_sub(1))
        .filter(|&i| points[i].1 < points[i - 1].1 && points[i].1 <= points[i + 1].1)
        .collect();
    let mut merged = true;
    while merged && minima.len() > 1 {
        merged = false;
        for k in 0..minima.len() - 1 {
            let (i, j) = (minima[k], minima[k + 1]);
            let ridge = points[i..=j].iter().map(|p| p.1).fold(f64::MIN, f64::max);
            let unc = points[i..=j].iter().map(|p| p.2).fold(0.0, f64::max);
            if ridge - points[i].1.max(points[j].1) <= 2.0 * unc {
                let drop = if points[i].1 <= points[j].1 { k + 1 } else { k };
                minima.remove(drop);
                merged = true;
                break;
            }
        }
    }
    minima
}

/// Refine a grid minimum by golden-section search in `ln C`.
fn refine_minimum(
    n: u32,
    around: (f64, f64),
    tol_angle: f64,
    opts: &ShootingOptions,
) -> Result<(f64, AngleEstimate), CriticalError> {
    let (a, b) = (around.0.ln(), around.1.ln());
    let mut x_tol = 1e-3;
    loop {
        let m = golden_section(
            |x: f64| Ok::<_, CriticalError>(angle_of(x.exp(), n, opts)?.angle),
            a,
            b,
            x_tol,
            200,
        )?;
        let c_star = m.x.exp();
        let best = angle_of(c_star, n, opts)?;
        let edge = angle_of(m.bracket.0.exp(), n, opts)?
            .angle
            .max(angle_of(m.bracket.1.exp(), n, opts)?.angle);
        let width = edge - best.angle;
        if width < tol_angle || x_tol < 1e-9 {
            return Ok((
                c_star,
                AngleEstimate {
                    angle: best.angle,
                    uncertainty: best.uncertainty + width,
                },
            ));
        }
        x_tol *= 0.1;
    }
}

/// The sampled map together with its located minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleLandscape {
    pub map: AngleMap,
    pub critical: CriticalAngleResult,
    pub options: CriticalOptions,
}

impl AngleLandscape {
    /// Guard scan of the grid followed by golden-section refinement of the
    /// minimum until the angle bracket is narrower than `tol_angle`.
    pub fn compute(n: u32, tol_angle: f64, opts: &CriticalOptions) -> Result<Self, CriticalError> {
        if !(tol_angle >= 1e-4) {
            return Err(CriticalError::InvalidParameter(format!(
                "tol_angle must be at least 1e-4 rad, got {tol_angle}"
            )));
        }
        let map = build_angle_map_seeded(
            n,
            opts.c_lo,
            opts.c_hi,
            opts.grid,
            &opts.shooting,
            opts.grid_seed,
        )?;
        let points: Vec<_> = map.converged().collect();
        let minima = significant_minima(&points);
        if minima.is_empty() {
            return Err(CriticalError::NoMinimum);
        }
        let bracket_of = |i: usize| (points[i - 1].0, points[i + 1].0);
        let deepest = *minima
            .iter()
            .min_by(|&&i, &&j| points[i].1.total_cmp(&points[j].1))
            .unwrap();
        let bracket = bracket_of(deepest);
        let (c_star, alpha_crit) = refine_minimum(n, bracket, tol_angle, &opts.shooting)?;
        let critical = CriticalAngleResult {
            n,
            alpha_crit,
            c_star,
            bracket,
            alpha_crit_deg: alpha_crit.angle.to_degrees(),
        };
        if minima.len() > 1 {
            return Err(CriticalError::MultipleMinima {
                brackets: minima.iter().map(|&i| bracket_of(i)).collect(),
                deepest: Box::new(critical),
            });
        }
        Ok(Self {
            map,
            critical,
            options: *opts,
        })
    }

    /// Both one-sheeted expanders with asymptotic angle `target`, found by
    /// bisection on each monotone branch of the map.
    pub fn one_sheeted_pair(&self, target: f64, tol: f64) -> Result<OneSheetedPair, CriticalError> {
        let crit = &self.critical;
        if target <= crit.alpha_crit.angle + tol || target >= FRAC_PI_2 {
            return Err(CriticalError::BelowCritical {
                target,
                alpha_crit: crit.alpha_crit.angle,
            });
        }
        let n = crit.n;
        let opts = &self.options.shooting;
        let points: Vec<_> = self.map.converged().collect();

        // left branch: walk from C* towards small C until the angle exceeds the target
        let left_seed = points
            .iter()
            .rev()
            .filter(|p| p.0 < crit.c_star)
            .find(|p| p.1 > target)
            .map(|p| p.0)
            .ok_or(CriticalError::BracketFailure {
                lo: self.map.c_lo,
                hi: crit.c_star,
            })?;
        let right_seed = points
            .iter()
            .filter(|p| p.0 > crit.c_star)
            .find(|p| p.1 > target)
            .map(|p| p.0)
            .ok_or(CriticalError::BracketFailure {
                lo: crit.c_star,
                hi: self.map.c_hi,
            })?;

        let solve = |a: f64, b: f64| -> Result<(f64, AngleEstimate), CriticalError> {
            let (lo, hi) = bisect(
                |x: f64| Ok::<_, CriticalError>(angle_of(x.exp(), n, opts)?.angle - target),
                a.ln(),
                b.ln(),
                1e-13,
                0.25 * tol,
                200,
            )?;
            let c = (0.5 * (lo + hi)).exp();
            Ok((c, angle_of(c, n, opts)?))
        };
        let (c_low, alpha_low) = solve(left_seed, crit.c_star)?;
        let (c_high, alpha_high) = solve(crit.c_star, right_seed)?;
        Ok(OneSheetedPair {
            target,
            c_low,
            alpha_low,
            c_high,
            alpha_high,
        })
    }

    /// Two one-sheeted and one two-sheeted expander asymptotic to the same
    /// double cone.
    pub fn witness(&self, target: f64, tol: f64) -> Result<NonuniquenessWitness, CriticalError> {
        let pair = self.one_sheeted_pair(target, tol)?;
        let opts = &self.options.shooting;
        let low = integrate_one_sheeted(pair.c_low, self.critical.n, opts)?;
        let high = integrate_one_sheeted(pair.c_high, self.critical.n, opts)?;
        let two = two_sheeted_for_angle(target, self.critical.n, tol, opts)?;
        Ok(NonuniquenessWitness {
            target_alpha: target,
            c_low: pair.c_low,
            c_high: pair.c_high,
            alpha_low: pair.alpha_low,
            alpha_high: pair.alpha_high,
            c_star: self.critical.c_star,
            b: two.b,
            alpha_two_sheeted: two.alpha,
            max_height_difference: max_height_difference(&low, &high),
        })
    }
}

/// `max |u_low − u_high|` over the common abscissa range.
pub fn max_height_difference(a: &ExpanderProfile, b: &ExpanderProfile) -> f64 {
    let end = a.last().abscissa.min(b.last().abscissa);
    (0..=2000)
        .map(|i| {
            let y = end * i as f64 / 2000.0;
            (a.eval(y).0 - b.eval(y).0).abs()
        })
        .fold(0.0, f64::max)
}

/// `α*_crit(n)` with its minimizer.
pub fn find_critical_angle(
    n: u32,
    tol_angle: f64,
    opts: &CriticalOptions,
) -> Result<CriticalAngleResult, CriticalError> {
    Ok(AngleLandscape::compute(n, tol_angle, opts)?.critical)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSheetedPair {
    pub target: f64,
    pub c_low: f64,
    pub alpha_low: AngleEstimate,
    pub c_high: f64,
    pub alpha_high: AngleEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonuniquenessWitness {
    pub target_alpha: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub alpha_low: AngleEstimate,
    pub alpha_high: AngleEstimate,
    pub c_star: f64,
    pub b: f64,
    pub alpha_two_sheeted: AngleEstimate,
    pub max_height_difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSheetedRoot {
    pub b: f64,
    pub alpha: AngleEstimate,
    /// `y_u` at the last sample; tends to `cot α`.
    pub final_slope: f64,
    pub scan: (f64, f64),
}

fn two_sheeted_angle(b: f64, n: u32, opts: &ShootingOptions) -> Result<AngleEstimate, CriticalError> {
    Ok(integrate_two_sheeted(b, n, opts)?.angle()?)
}

/// Scan range for `b`, then the wider fallback.
const B_SCANS: [(f64, f64); 2] = [(1e-2, 10.0), (1e-3, 100.0)];

/// The two-sheeted expander whose asymptotic angle is `target`.
pub fn two_sheeted_for_angle(
    target: f64,
    n: u32,
    tol: f64,
    opts: &ShootingOptions,
) -> Result<TwoSheetedRoot, CriticalError> {
    if !(target > 0.0 && target < FRAC_PI_2) {
        return Err(CriticalError::InvalidParameter(format!(
            "target angle must lie in (0, π/2), got {target}"
        )));
    }
    let mut last_err = None;
    for (lo, hi) in B_SCANS {
        let scan = crate::numerics::log_space(lo, hi, 24)
            .into_par_iter()
            .map(|b| match two_sheeted_angle(b, n, opts) {
                Ok(a) => Ok(Some((b, a.angle))),
                Err(CriticalError::Profile(ProfileError::NotConverged { .. })) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (bs, angles): (Vec<f64>, Vec<f64>) = scan.into_iter().flatten().unzip();
        let decreasing = angles.windows(2).all(|w| w[1] < w[0]);
        let increasing = angles.windows(2).all(|w| w[1] > w[0]);
        if !(decreasing || increasing) {
            return Err(CriticalError::NotMonotone);
        }
        let Some(k) = angles
            .windows(2)
            .position(|w| (w[0] - target).signum() != (w[1] - target).signum())
        else {
            last_err = Some(CriticalError::BracketFailure { lo, hi });
            continue;
        };
        let (a, b) = bisect(
            |x: f64| Ok::<_, CriticalError>(two_sheeted_angle(x.exp(), n, opts)?.angle - target),
            bs[k].ln(),
            bs[k + 1].ln(),
            1e-13,
            0.25 * tol,
            200,
        )?;
        let b = (0.5 * (a + b)).exp();
        let profile = integrate_two_sheeted(b, n, opts)?;
        return Ok(TwoSheetedRoot {
            b,
            alpha: profile.angle()?,
            final_slope: profile.last().slope,
            scan: (lo, hi),
        });
    }
    Err(last_err.unwrap())
}

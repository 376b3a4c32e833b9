//! Scalar root bracketing and minimization.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError<E> {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error(transparent)]
    Eval(E),
}

/// Bisection for a root of `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `x_tol` or `|f(mid)| <= f_tol`.
/// Returns the final bracket `(lo, hi)` with the root inside.
pub fn bisect<E, F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    f_tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), SearchError<E>>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut f_lo = f(lo).map_err(SearchError::Eval)?;
    let f_hi = f(hi).map_err(SearchError::Eval)?;
    if f_lo == 0.0 {
        return Ok((lo, lo));
    }
    if f_hi == 0.0 {
        return Ok((hi, hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(SearchError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    for _ in 0..max_iter {
        if (hi - lo).abs() <= x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid).map_err(SearchError::Eval)?;
        if f_mid.abs() <= f_tol {
            return Ok((mid, mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    /// Final bracket around `x`.
    pub bracket: (f64, f64),
    /// Largest objective value at the two interior points of the final bracket
    /// minus `value`.
    pub spread: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
///
/// Stops when the bracket is narrower than `x_tol` (absolute, in the
/// coordinate `f` is given).
pub fn golden_section<E, F>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<Minimum, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    for _ in 0..max_iter {
        if (b - a).abs() <= x_tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    let (x, value) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok(Minimum {
        x,
        value,
        bracket: (a, b),
        spread: (fc - fd).abs(),
        evaluations,
    })
}

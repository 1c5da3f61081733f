//! Bracketing root solver for monotone scalar functions.

use crate::error::{Error, Result};

/// Bisection on `[lo, hi]` for a function that changes sign there.
///
/// Runs until the bracket has shrunk to a few ulps, so the returned midpoint
/// is the root to machine precision whenever `f` is monotone.
pub(crate) fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Domain(format!("root not bracketed on [{lo}, {hi}]")));
    }
    let lo_negative = f_lo < 0.0;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        routine: "bisection",
        iterations: MAX_BISECTIONS,
    })
}

const MAX_BISECTIONS: usize = 2000;

//! One-dimensional root finding used by the counterexample constructor.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameter tolerance at which bisection stops.
pub const BISECT_TOL: f64 = 1e-12;
/// Residual the returned root must satisfy, checked after convergence.
pub const BISECT_RESIDUAL: f64 = 1e-10;
/// Iteration cap; 200 halvings exhaust f64 resolution on any finite bracket.
pub const BISECT_MAX_ITER: usize = 200;

/// Finds the root of a continuous, sign-changing `f` on `[lo, hi]` by
/// bisection. The residual check uses `scale` to turn absolute residuals
/// into relative ones for functions far from unit magnitude.
pub fn bisect<F: Real>(mut lo: F, mut hi: F, f: impl Fn(F) -> F, scale: F) -> Result<F> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == F::zero() {
        return Ok(lo);
    }
    if fhi == F::zero() {
        return Ok(hi);
    }
    if (flo > F::zero()) == (fhi > F::zero()) {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    let tol = F::lit(BISECT_TOL);
    let mut mid = lo;
    for _ in 0..BISECT_MAX_ITER {
        mid = (lo + hi) / F::lit(2.0);
        let fmid = f(mid);
        if fmid == F::zero() || hi - lo < tol {
            break;
        }
        if (fmid > F::zero()) == (flo > F::zero()) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    let residual = f(mid).abs() / scale.max(F::one());
    if residual > F::lit(BISECT_RESIDUAL) {
        return Err(Error::NoRoot(format!(
            "bisection stalled: residual {residual} at {mid}"
        )));
    }
    Ok(mid)
}

//! Log-space accumulation helpers. Weight values on a depth-N tree span
//! 2^{-N}..2^{N}; raised to an exponent they overflow f64 long before the
//! depths this crate supports, so sums of powers are carried as logarithms.

use crate::scalar::Real;

/// `ln(exp(a) + exp(b))` without overflow; tolerates `-inf` for empty terms.
/// Equal arguments take the exact branch `a + ln 2`, which keeps folds over
/// locally constant trees both fast and bit-reproducible.
#[inline]
pub(crate) fn log_add_exp<F: Real>(a: F, b: F) -> F {
    if a == b {
        return if a == F::neg_infinity() { a } else { a + F::ln_2() };
    }
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln((exp(a) + exp(b)) / 2)`: log of the average of two exponentials.
/// Equal arguments short-circuit so uniform trees stay bit-exact.
#[inline]
pub(crate) fn log_avg_exp<F: Real>(a: F, b: F) -> F {
    if a == b {
        return a;
    }
    log_add_exp(a, b) - F::ln_2()
}

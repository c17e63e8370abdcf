//! Scaling a weight's multiplicative Haar data by a common factor.
//!
//! The map is nonlinear on weights but exactly linear on splits:
//! scaling every coefficient by `lambda` replaces each split `s` with
//! `1/2 + lambda (s - 1/2)`. That split-level form is the canonical
//! implementation here; the product form exists as a cross-check.
//!
//! For `lambda` in `[0, 1]` the map contracts every split toward 1/2 and
//! therefore never worsens doubling. The convexity bound
//! `prod(1 + lambda (a_j - 1)) >= min(1, prod a_j)` is the scalar heart of
//! that stability and ships with a subset-expansion oracle.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicIndex, HaarSeries, WeightTree};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A coefficient scaling factor, constrained to `[-1, 1]` so that every
/// factor `1 + lambda b_I h_I` stays positive whenever the original
/// factors were.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Lambda(f64);

impl Lambda {
    /// The identity scaling.
    pub const ONE: Lambda = Lambda(1.0);
    /// The scaling that flattens every weight to the constant 1.
    pub const ZERO: Lambda = Lambda(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && (-1.0..=1.0).contains(&value)) {
            return Err(Error::LambdaOutOfRange(value));
        }
        Ok(Lambda(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Is the factor in `[0, 1]`, where the monotonicity statements hold?
    pub fn is_contraction(self) -> bool {
        self.0 >= 0.0
    }
}

impl TryFrom<f64> for Lambda {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Lambda::new(value)
    }
}

impl From<Lambda> for f64 {
    fn from(lambda: Lambda) -> f64 {
        lambda.0
    }
}

impl std::fmt::Display for Lambda {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Scales the multiplicative Haar data of `tree` by `lambda`, split-level
/// form: every split moves to `1/2 + lambda (s - 1/2)`.
///
/// The endpoints are special-cased so `lambda = 1` returns a bit-identical
/// tree and `lambda = 0` the exact uniform tree.
pub fn lambda_op<F: Real>(tree: &WeightTree<F>, lambda: Lambda) -> WeightTree<F> {
    if lambda == Lambda::ONE {
        return tree.clone();
    }
    if lambda == Lambda::ZERO {
        return WeightTree::uniform(tree.depth());
    }
    let half = F::lit(0.5);
    let l = F::lit(lambda.value());
    let splits = tree
        .splits()
        .iter()
        .map(|&s| half + l * (s - half))
        .collect();
    WeightTree::from_splits_unchecked(tree.depth(), splits)
}

/// Product form of the same map: scale the coefficients, then rebuild the
/// weight. Agrees with [`lambda_op`] on the tree the series came from.
pub fn lambda_op_product<F: Real>(series: &HaarSeries<F>, lambda: Lambda) -> Result<WeightTree<F>> {
    series.scaled(F::lit(lambda.value())).weight_tree()
}

/// Both sides of the convexity bound: for `a_j > 0` and `lambda` in
/// `[0, 1]`, `prod(1 + lambda (a_j - 1)) >= min(1, prod a_j)`.
///
/// Returns `(lhs, rhs)`; the caller asserts the contract. Panics on
/// nonpositive factors or `lambda` outside `[0, 1]` (precondition, not a
/// recoverable state).
pub fn convexity_lower_bound<F: Real>(a: &[F], lambda: F) -> (F, F) {
    assert!(
        lambda >= F::zero() && lambda <= F::one(),
        "lambda must lie in [0, 1]"
    );
    let mut lhs = F::one();
    let mut product = F::one();
    for &factor in a {
        assert!(factor > F::zero(), "factors must be positive");
        lhs *= F::one() + lambda * (factor - F::one());
        product *= factor;
    }
    (lhs, product.min(F::one()))
}

/// Elementary symmetric polynomials `e_0..e_n` of the factors, by the
/// standard one-pass recurrence.
pub fn elementary_symmetric<F: Real>(a: &[F]) -> Vec<F> {
    let mut e = vec![F::zero(); a.len() + 1];
    e[0] = F::one();
    for (count, &factor) in a.iter().enumerate() {
        for i in (1..=count + 1).rev() {
            e[i] = e[i] + factor * e[i - 1];
        }
    }
    e
}

/// Binomial coefficient as the scalar type; exact for n <= 20.
pub fn binomial<F: Real>(n: usize, k: usize) -> F {
    if k > n {
        return F::zero();
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k {
        num *= (n - i) as u128;
        den *= (i + 1) as u128;
    }
    F::lit((num / den) as f64)
}

const EXPANSION_MAX_FACTORS: usize = 20;

/// The product `prod(1 + lambda (a_j - 1))` evaluated the slow way:
/// expand over all `2^n` subsets, collecting
/// `sum_i (1 - lambda)^{n-i} lambda^i (sum over i-subsets of prod a)`.
/// An oracle for the fast product; capped at 20 factors.
pub fn symmetric_expansion_oracle<F: Real>(a: &[F], lambda: F) -> Result<F> {
    let n = a.len();
    if n > EXPANSION_MAX_FACTORS {
        return Err(Error::SizeLimit { n, max: EXPANSION_MAX_FACTORS });
    }
    let mut subset_sums = vec![F::zero(); n + 1];
    for mask in 0u32..1u32 << n {
        let size = mask.count_ones() as usize;
        let mut prod = F::one();
        for (j, &factor) in a.iter().enumerate() {
            if mask >> j & 1 == 1 {
                prod *= factor;
            }
        }
        subset_sums[size] += prod;
    }
    let mut total = F::zero();
    for (size, &sum) in subset_sums.iter().enumerate() {
        total += (F::one() - lambda).powi((n - size) as i32) * lambda.powi(size as i32) * sum;
    }
    Ok(total)
}

/// Both sides of the mean-ratio comparison: for `I` inside `J`,
/// `lambda` in `[0, 1]` and `r < 0`,
///
/// `(m_I w_lambda / m_J w_lambda)^r <= max(1, (m_I w / m_J w)^r)`.
///
/// Returns `(lhs, rhs)`. Walks the chain from `J` to `I` once, so only the
/// splits between them enter.
pub fn ratio_comparison<F: Real>(
    tree: &WeightTree<F>,
    lambda: Lambda,
    inner: DyadicIndex,
    outer: DyadicIndex,
    r: F,
) -> Result<(F, F)> {
    if !lambda.is_contraction() {
        return Err(Error::LambdaOutOfRange(lambda.value()));
    }
    if !(r < F::zero()) {
        return Err(Error::BadExponent {
            p: r.as_f64(),
            reason: "ratio comparison requires a negative exponent",
        });
    }
    if !outer.contains(inner) {
        return Err(Error::not_nested(inner, outer));
    }
    if inner.level() > tree.depth() {
        return Err(Error::LevelOutOfRange { level: inner.level(), depth: tree.depth() });
    }
    let half = F::lit(0.5);
    let two = F::lit(2.0);
    let l = F::lit(lambda.value());
    let mut log_base = F::zero();
    let mut log_deformed = F::zero();
    let mut node = outer;
    for step in (0..inner.level() - outer.level()).rev() {
        let s = tree.split(node)?;
        let s_l = half + l * (s - half);
        let go_right = inner.pos() >> step & 1 == 1;
        let (f, f_l) = if go_right {
            (two * (F::one() - s), two * (F::one() - s_l))
        } else {
            (two * s, two * s_l)
        };
        log_base += f.ln();
        log_deformed += f_l.ln();
        let (left, right) = node.children();
        node = if go_right { right } else { left };
    }
    let lhs = (r * log_deformed).exp();
    let rhs = F::one().max((r * log_base).exp());
    Ok((lhs, rhs))
}

//! Weights that repeat a fixed split pattern down the left spine.
//!
//! A pattern `(s_1, ..., s_n)` concentrates mass along the intervals
//! `(0, 2^-k]`: the spine node at level `k` splits with `s_{(k mod n)+1}`
//! and every off-spine interval splits in half, so the weight is constant
//! on each block `(2^-i, 2^-i+1]`. Means and moments over the spine
//! intervals reduce to one-dimensional geometric series, which gives the
//! reverse Holder ratio a closed form and an exact convergence criterion:
//! the moment series converges iff `2^n s_1...s_n < 2^{n/p}`.
//!
//! On top of that sits the geometric construction that, for any `p > 1`,
//! produces a pattern in the reverse Holder class whose coefficient
//! contraction leaves the class: a segment in the pattern cube along which
//! the convergence functional rises through the threshold, with the
//! contraction sliding points along the segment.

use serde::{Deserialize, Serialize};

use crate::dyadic::{WeightTree, DEFAULT_SPLIT_FLOOR, MAX_DEPTH};
use crate::error::{Error, Result};
use crate::lambda::Lambda;
use crate::logspace::log_add_exp;
use crate::scalar::Real;
use crate::solve::bisect;

// ---------------------------------------------------------------------------
// Periodic specifications
// ---------------------------------------------------------------------------

/// A left-spine split pattern `(s_1, ..., s_n)`, cycled with period `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PeriodicSpecWire<F>", into = "PeriodicSpecWire<F>")]
#[serde(bound(
    serialize = "F: Real + Serialize",
    deserialize = "F: Real + serde::de::DeserializeOwned"
))]
pub struct PeriodicSpec<F: Real> {
    s: Vec<F>,
}

#[derive(Serialize, Deserialize)]
struct PeriodicSpecWire<F> {
    period: u32,
    s: Vec<F>,
}

impl<F: Real> From<PeriodicSpec<F>> for PeriodicSpecWire<F> {
    fn from(spec: PeriodicSpec<F>) -> Self {
        PeriodicSpecWire { period: spec.s.len() as u32, s: spec.s }
    }
}

impl<F: Real> TryFrom<PeriodicSpecWire<F>> for PeriodicSpec<F> {
    type Error = Error;

    fn try_from(wire: PeriodicSpecWire<F>) -> Result<Self> {
        if wire.period as usize != wire.s.len() {
            return Err(Error::LengthMismatch {
                depth: wire.period,
                expected: wire.period as usize,
                got: wire.s.len(),
            });
        }
        PeriodicSpec::new(wire.s)
    }
}

impl<F: Real> PeriodicSpec<F> {
    /// Validates every split against the default floor.
    pub fn new(s: Vec<F>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::EmptyPattern);
        }
        let floor = F::lit(DEFAULT_SPLIT_FLOOR);
        let ceil = F::one() - floor;
        for (i, &v) in s.iter().enumerate() {
            if !(v > floor && v < ceil) || !v.is_finite() {
                return Err(Error::SplitOutOfRange {
                    level: i as u32,
                    pos: 0,
                    value: v.as_f64(),
                    floor: floor.as_f64(),
                });
            }
        }
        Ok(PeriodicSpec { s })
    }

    pub fn period(&self) -> u32 {
        self.s.len() as u32
    }

    pub fn splits(&self) -> &[F] {
        &self.s
    }

    /// Split used at spine level `k` (zero-based from the root).
    pub fn split_at_level(&self, k: u32) -> F {
        self.s[(k as usize) % self.s.len()]
    }

    /// The same pattern with its period reduced to the smallest divisor
    /// that reproduces it exactly.
    pub fn canonical(mut self) -> Self {
        let n = self.s.len();
        for d in 1..n {
            if n % d == 0 && (0..n).all(|i| self.s[i] == self.s[i % d]) {
                self.s.truncate(d);
                return self;
            }
        }
        self
    }

    /// `2^n s_1 ... s_n`: the per-period mass growth functional whose
    /// position against `2^{n/p}` decides moment-series convergence.
    pub fn growth(&self) -> F {
        let n = self.s.len() as f64;
        self.s.iter().fold(F::lit(n).exp2(), |acc, &s| acc * s)
    }

    /// `ln` of the block value `c_i` on `(2^-i, 2^-i+1]`, `i >= 1`:
    /// `c_i = 2^i s_1 ... s_{i-1} (1 - s_i)`.
    fn log_block_value(&self, i: u32) -> F {
        let mut acc = F::lit(i as f64) * F::ln_2();
        for k in 0..i - 1 {
            acc += self.split_at_level(k).ln();
        }
        acc + (F::one() - self.split_at_level(i - 1)).ln()
    }

    /// Applies the coefficient contraction coordinatewise:
    /// each `s` moves to `1/2 + lambda (s - 1/2)`.
    pub fn contracted(&self, lambda: Lambda) -> Self {
        let half = F::lit(0.5);
        let l = F::lit(lambda.value());
        PeriodicSpec {
            s: self.s.iter().map(|&s| half + l * (s - half)).collect(),
        }
    }
}

/// The weight tree of the pattern at a given depth: spine splits cycle
/// through the pattern, all off-spine splits are 1/2.
pub fn periodic_weight<F: Real>(spec: &PeriodicSpec<F>, depth: u32) -> Result<WeightTree<F>> {
    let n = spec.period();
    if depth < n || depth > MAX_DEPTH {
        return Err(Error::DepthOutOfRange { depth, min: n, max: MAX_DEPTH });
    }
    let half = F::lit(0.5);
    let mut splits = vec![half; (1usize << depth) - 1];
    for k in 0..depth {
        // Spine node (k, 0) sits at slot 2^k - 1.
        splits[(1usize << k) - 1] = spec.split_at_level(k);
    }
    Ok(WeightTree::from_splits_unchecked(depth, splits))
}

// ---------------------------------------------------------------------------
// Convergence condition and closed-form ratio
// ---------------------------------------------------------------------------

/// Outcome of the moment-series convergence test
/// `2^n s_1...s_n < 2^{n/p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck<F> {
    pub holds: bool,
    /// `threshold - value`; positive iff the condition holds.
    pub margin: F,
    pub value: F,
    pub threshold: F,
}

/// Checks whether the `p`-th moment series of the pattern converges.
pub fn rhp_condition<F: Real>(spec: &PeriodicSpec<F>, p: F) -> Result<ConditionCheck<F>> {
    require_p(p)?;
    let value = spec.growth();
    let threshold = F::lit(spec.period() as f64).exp2().powf(F::one() / p);
    let margin = threshold - value;
    Ok(ConditionCheck { holds: value < threshold, margin, value, threshold })
}

fn require_p<F: Real>(p: F) -> Result<()> {
    if !p.is_finite() || p <= F::one() {
        return Err(Error::BadExponent {
            p: p.as_f64(),
            reason: "requires a finite exponent p > 1",
        });
    }
    Ok(())
}

/// `ln` of the per-period decay ratio of the `p`-th moment series,
/// `(2^n s_1...s_n)^p 2^{-n}`; negative iff the series converges.
fn log_moment_ratio<F: Real>(spec: &PeriodicSpec<F>, p: F) -> F {
    let n = F::lit(spec.period() as f64);
    p * spec.growth().ln() - n * F::ln_2()
}

/// `ln` of `d_{p,m} = sum_{j=1..n} c_{j+m}^p 2^{-(j+m)}`, one period of the
/// moment series starting after block `m`.
fn log_period_sum<F: Real>(spec: &PeriodicSpec<F>, p: F, m: u32) -> F {
    let n = spec.period();
    let mut acc = F::neg_infinity();
    for j in 1..=n {
        let i = j + m;
        let term = p * spec.log_block_value(i) - F::lit(i as f64) * F::ln_2();
        acc = log_add_exp(acc, term);
    }
    acc
}

/// The limiting ratio `(mean of w^p over J_l) / (mean of w over J_l)^p` at
/// the spine interval `J_l = (0, 2^-l]`, in closed form. Depends only on
/// `l mod n`; the explicit `l` enters only through exactly cancelling
/// factors, which the q-independence tests exercise.
pub fn rhp_ratio_closed_form<F: Real>(spec: &PeriodicSpec<F>, p: F, l: u32) -> Result<F> {
    require_p(p)?;
    let check = rhp_condition(spec, p)?;
    if !check.holds {
        return Err(Error::DivergentSeries { excess: (-check.margin).as_f64() });
    }
    let n = spec.period();
    let (q, m) = (l / n, l % n);
    let log_rho_p = log_moment_ratio(spec, p);
    let log_rho_1 = log_moment_ratio(spec, F::one());
    let log_dp = log_period_sum(spec, p, m);
    let log_d1 = log_period_sum(spec, F::one(), m);
    // ln R = l(1-p) ln2 + n(p-1)q ln2 + ln d_p - p ln d_1
    //      + p ln(1 - rho_1) - ln(1 - rho_p)
    let one = F::one();
    let log_r = (F::lit(l as f64) * (one - p) + F::lit((n * q) as f64) * (p - one)) * F::ln_2()
        + log_dp
        - p * log_d1
        + p * (-log_rho_1.exp()).ln_1p()
        - (-log_rho_p.exp()).ln_1p();
    Ok(log_r.exp())
}

/// The same ratio evaluated the slow way: both moment sums truncated at
/// absolute block depth `depth`. A direct oracle for the closed form.
pub fn rhp_ratio_truncated<F: Real>(
    spec: &PeriodicSpec<F>,
    p: F,
    l: u32,
    depth: u32,
) -> Result<F> {
    require_p(p)?;
    if depth <= l {
        return Err(Error::DepthOutOfRange { depth, min: l + 1, max: u32::MAX });
    }
    let mut log_pow = F::neg_infinity();
    let mut log_mean = F::neg_infinity();
    for i in l + 1..=depth {
        let log_c = spec.log_block_value(i);
        let log_len = -F::lit(i as f64) * F::ln_2();
        log_pow = log_add_exp(log_pow, p * log_c + log_len);
        log_mean = log_add_exp(log_mean, log_c + log_len);
    }
    // Normalize both integrals by |J_l| = 2^-l.
    let log_l = F::lit(l as f64) * F::ln_2();
    Ok(((log_pow + log_l) - p * (log_mean + log_l)).exp())
}

/// The exact reverse Holder constant of the infinite-depth pattern:
/// `sup_I (mean of w^p)^{1/p} / mean of w` equals the best spine ratio
/// because the weight is constant on every other dyadic interval.
pub fn rhp_constant_periodic<F: Real>(spec: &PeriodicSpec<F>, p: F) -> Result<F> {
    let mut best = F::one();
    for m in 0..spec.period() {
        let ratio = rhp_ratio_closed_form(spec, p, m)?;
        best = best.max(ratio.powf(F::one() / p));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// The segment geometry in the pattern cube
// ---------------------------------------------------------------------------

/// The segment `t -> (a + (1/2 - a) t, 1 - t/2, ..., 1 - t/2)` in the
/// pattern cube, running from the edge point `(a, 1, ..., 1)` at `t = 0`
/// to the center at `t = 1`, together with the growth functional
/// `g(t) = 2^n prod s_i(t) = (2a + (1 - 2a) t)(2 - t)^{n-1}` along it.
///
/// Coefficient contraction by `lambda` slides segment points toward the
/// center: `t -> 1 - lambda (1 - t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineGeometry<F> {
    period: u32,
    offset: F,
}

impl<F: Real> LineGeometry<F> {
    /// Requires `n >= 2` and `0 < a < 1/(n+1)` (so the growth peaks at an
    /// interior parameter).
    pub fn new(period: u32, offset: F) -> Result<Self> {
        let limit = F::one() / F::lit(period as f64 + 1.0);
        if period < 2 {
            return Err(Error::BadExponent {
                p: period as f64,
                reason: "segment geometry needs period >= 2",
            });
        }
        if !offset.is_finite() || offset <= F::zero() || offset >= limit {
            return Err(Error::OffsetOutOfRange {
                n: period as usize,
                a: offset.as_f64(),
                limit: limit.as_f64(),
            });
        }
        Ok(LineGeometry { period, offset })
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn offset(&self) -> F {
        self.offset
    }

    /// `g(t) = (2a + (1 - 2a) t)(2 - t)^{n-1}` for `t` in `[0, 2]`.
    pub fn value_at(&self, t: F) -> F {
        let two = F::lit(2.0);
        let a = self.offset;
        (two * a + (F::one() - two * a) * t) * (two - t).powi(self.period as i32 - 1)
    }

    /// Interior maximizer `t = 2 (1 - (n+1) a) / (n (1 - 2a))`.
    pub fn t_peak(&self) -> F {
        let a = self.offset;
        let n = F::lit(self.period as f64);
        let two = F::lit(2.0);
        two * (F::one() - (n + F::one()) * a) / (n * (F::one() - two * a))
    }

    /// Peak value in closed form:
    /// `2^n (n-1)^{n-1} (1-a)^n / (n^n (1-2a)^{n-1})`.
    pub fn peak_value(&self) -> F {
        let n = self.period;
        let a = self.offset;
        let nf = F::lit(n as f64);
        let two = F::lit(2.0);
        F::lit(n as f64).exp2() * F::lit((n - 1) as f64).powi(n as i32 - 1)
            * (F::one() - a).powi(n as i32)
            / (nf.powi(n as i32) * (F::one() - two * a).powi(n as i32 - 1))
    }

    /// The pattern at parameter `t`.
    pub fn point_at(&self, t: F) -> Result<PeriodicSpec<F>> {
        let half = F::lit(0.5);
        let a = self.offset;
        let mut s = vec![F::one() - t * half; self.period as usize];
        s[0] = a + (half - a) * t;
        PeriodicSpec::new(s)
    }
}

/// Peak growth along the segment as a function of the offset alone, for
/// callers that have not fixed an offset yet.
pub fn peak_growth<F: Real>(period: u32, offset: F) -> Result<F> {
    Ok(LineGeometry::new(period, offset)?.peak_value())
}

/// The exponent at which period `n` first admits counterexamples:
/// `n ln 2 / (n ln 2 - ln(n+1))`, decreasing in `n` and tending to 1.
pub fn critical_exponent<F: Real>(period: u32) -> Result<F> {
    if period < 2 {
        return Err(Error::BadExponent {
            p: period as f64,
            reason: "critical exponent defined for period >= 2",
        });
    }
    let nlog2 = F::lit(period as f64) * F::ln_2();
    let log_np1 = F::lit(period as f64 + 1.0).ln();
    Ok(nlog2 / (nlog2 - log_np1))
}

const PERIOD_SCAN_LIMIT: u32 = 4096;

/// Smallest period `n >= 2` with `2^{n/p} < 2^n / (n+1)`: the least
/// period whose pattern cube has room for a counterexample at exponent
/// `p`. Exists for every `p > 1`.
pub fn minimal_period<F: Real>(p: F) -> Result<u32> {
    require_p(p)?;
    for n in 2..=PERIOD_SCAN_LIMIT {
        let threshold = F::lit(n as f64).exp2().powf(F::one() / p);
        let ceiling = F::lit(n as f64).exp2() / F::lit(n as f64 + 1.0);
        if threshold < ceiling {
            return Ok(n);
        }
    }
    Err(Error::NoRoot(format!(
        "no admissible period below {PERIOD_SCAN_LIMIT} for p = {}",
        p.as_f64()
    )))
}

// ---------------------------------------------------------------------------
// Counterexample construction
// ---------------------------------------------------------------------------

/// A verified pair of patterns witnessing that coefficient contraction can
/// leave the reverse Holder class: `spec_in` satisfies the convergence
/// condition at exponent `p`, its contraction by `lambda` is `spec_out`,
/// and `spec_out` violates the condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Real + Serialize",
    deserialize = "F: Real + serde::de::DeserializeOwned"
))]
pub struct CounterexampleCert<F: Real> {
    pub p: F,
    pub period: u32,
    /// Offset `a` of the segment's `t = 0` endpoint.
    pub base_offset: F,
    /// Segment parameter of the in-class pattern.
    pub t_start: F,
    /// Segment parameter of the peak, where the contraction lands.
    pub t_peak: F,
    /// Contraction factor mapping `t_start` to `t_peak`.
    pub lambda: Lambda,
    pub spec_in: PeriodicSpec<F>,
    pub spec_out: PeriodicSpec<F>,
    /// Growth functional at the in-class pattern (below threshold).
    pub f_in: F,
    /// Growth functional at the contracted pattern (above threshold).
    pub f_out: F,
    /// `2^{n/p}`, the convergence threshold.
    pub threshold: F,
    /// `threshold - f_in`, strictly positive.
    pub margin_in: F,
    /// `f_out - threshold`, strictly positive.
    pub margin_out: F,
}

/// How far above the threshold to aim the peak, limited by the room the
/// segment has before its `t = 0` endpoint itself crosses the threshold.
fn peak_target_factor<F: Real>(period: u32, threshold: F) -> Result<F> {
    // Largest admissible offset: growth at t = 0 equals the threshold.
    let offset_cap = threshold * (-F::lit(period as f64)).exp2();
    let factor_cap = peak_growth(period, offset_cap)? / threshold;
    // Depth-24 divergence witnesses need the peak a factor 2^{1/k} above
    // the threshold, k the number of whole periods between depth n+2 and
    // 24. Aim 5% past that when the cap allows, else take 98% of the cap.
    let witness_periods = (24u32.saturating_sub(period + 2)) / period;
    let wanted = if witness_periods > 0 {
        F::lit(1.05) * (F::one() / F::lit(witness_periods as f64)).exp2()
    } else {
        F::infinity()
    };
    let best = F::one() + F::lit(0.98) * (factor_cap - F::one());
    Ok(wanted.min(best).max(F::one() + F::lit(1e-6)))
}

/// Builds a counterexample certificate for exponent `p`, choosing the
/// smallest admissible period.
pub fn build_counterexample<F: Real>(p: F) -> Result<CounterexampleCert<F>> {
    build_counterexample_detailed(p, None, F::lit(0.5))
}

/// Full-control variant: an explicit period (which must admit room at
/// `p`), and the interpolation fraction `delta` in (0, 1) placing the
/// in-class point between the segment start and the threshold.
pub fn build_counterexample_detailed<F: Real>(
    p: F,
    period: Option<u32>,
    delta: F,
) -> Result<CounterexampleCert<F>> {
    require_p(p)?;
    if !(delta > F::zero() && delta < F::one()) {
        return Err(Error::BadExponent {
            p: delta.as_f64(),
            reason: "interpolation fraction must lie in (0, 1)",
        });
    }
    let n = match period {
        Some(n) => n,
        None => minimal_period(p)?,
    };
    let threshold = F::lit(n as f64).exp2().powf(F::one() / p);
    let ceiling = F::lit(n as f64).exp2() / F::lit(n as f64 + 1.0);
    if !(threshold < ceiling) {
        // A precondition on the request, not a failed verification: this
        // period admits no pattern whose growth clears the threshold.
        return Err(Error::BadExponent {
            p: p.as_f64(),
            reason: "period too small: the growth ceiling does not clear the class threshold",
        });
    }

    // Peak height at vanishing offset; decides how the offset is chosen.
    let flat_peak = F::lit(n as f64).exp2() * F::lit((n - 1) as f64).powi(n as i32 - 1)
        / F::lit(n as f64).powi(n as i32);
    let offset = if flat_peak < threshold {
        // Raise the peak through an inflated target so both margins are
        // strict; the bracket's upper end is where the segment start
        // itself reaches the threshold.
        let target = threshold * peak_target_factor(n, threshold)?;
        let hi = threshold * (-F::lit(n as f64)).exp2();
        let lo = hi * F::lit(1e-9);
        bisect(lo, hi, |a| peak_growth(n, a).unwrap_or(F::nan()) - target, target)?
    } else {
        // The peak already clears the threshold at any offset; pick one
        // that keeps the segment start well below it.
        (threshold * (-F::lit(n as f64 + 1.0)).exp2())
            .min(F::lit(0.5) / F::lit(n as f64 + 1.0))
    };

    let line = LineGeometry::new(n, offset)?;
    let t_peak = line.t_peak();

    // In-class parameter: where the growth covers `delta` of the gap
    // between its start value and the threshold.
    let start = line.value_at(F::zero());
    let target_in = start + delta * (threshold - start);
    let t_start = bisect(F::zero(), t_peak, |t| line.value_at(t) - target_in, threshold)?;

    let lambda_raw = (F::one() - t_peak) / (F::one() - t_start);
    let lambda = Lambda::new(lambda_raw.as_f64())?;

    let spec_in = line.point_at(t_start)?;
    let spec_out = line.point_at(t_peak)?;

    let cert = CounterexampleCert {
        p,
        period: n,
        base_offset: offset,
        t_start,
        t_peak,
        lambda,
        f_in: spec_in.growth(),
        f_out: spec_out.growth(),
        threshold,
        margin_in: threshold - spec_in.growth(),
        margin_out: spec_out.growth() - threshold,
        spec_in,
        spec_out,
    };
    verify_certificate(&cert)?;
    Ok(cert)
}

/// Re-checks every invariant of a certificate from scratch.
pub fn verify_certificate<F: Real>(cert: &CounterexampleCert<F>) -> Result<()> {
    let fail = |msg: String| Err(Error::CertificateInvalid(msg));
    let strict = F::lit(1e-9);

    let cond_in = rhp_condition(&cert.spec_in, cert.p)?;
    if !(cond_in.holds && cond_in.margin > strict) {
        return fail(format!("in-pattern margin {} not positive", cond_in.margin.as_f64()));
    }
    let cond_out = rhp_condition(&cert.spec_out, cert.p)?;
    if !(!cond_out.holds && cond_out.margin < -strict) {
        return fail(format!("out-pattern margin {} not negative", cond_out.margin.as_f64()));
    }
    let l = cert.lambda.value();
    if !(0.0 < l && l < 1.0) {
        return fail(format!("contraction factor {l} not in (0, 1)"));
    }
    let mapped = cert.spec_in.contracted(cert.lambda);
    for (a, b) in mapped.splits().iter().zip(cert.spec_out.splits()) {
        if (*a - *b).abs() > F::lit(1e-12) {
            return fail(format!(
                "contraction misses the out-pattern: {} vs {}",
                a.as_f64(),
                b.as_f64()
            ));
        }
    }
    let threshold = F::lit(cert.period as f64).exp2().powf(F::one() / cert.p);
    if (threshold - cert.threshold).abs() > F::lit(1e-12) * threshold {
        return fail("stored threshold is inconsistent".into());
    }
    if (cert.f_in - cert.spec_in.growth()).abs() > F::lit(1e-12)
        || (cert.f_out - cert.spec_out.growth()).abs() > F::lit(1e-12) * cert.f_out.max(F::one())
    {
        return fail("stored growth values are inconsistent".into());
    }
    Ok(())
}

/// The depths at which divergence and boundedness witnesses are evaluated:
/// `n + 2` stepping by the period up to 24, with 24 always included.
pub fn witness_depths(period: u32) -> Vec<u32> {
    let mut depths: Vec<u32> = (0..)
        .map(|k| period + 2 + k * period)
        .take_while(|&d| d <= 24)
        .collect();
    if depths.last() != Some(&24) {
        depths.push(24);
    }
    depths
}

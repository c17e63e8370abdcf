//! The class functionals of a weight at finite depth: doubling,
//! flatness (arithmetic vs geometric mean), reverse Holder brackets,
//! two-weight brackets, and the two summation functionals on Haar
//! coefficients.
//!
//! Every functional is a supremum over dyadic intervals and reports the
//! interval attaining it. Subtree statistics are folded bottom-up, one
//! level at a time, inside a single buffer of leaf size; everything that
//! can overflow is carried as a logarithm and only exponentiated in the
//! reported value.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicIndex, HaarSeries, WeightTree};
use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, log_avg_exp};
use crate::scalar::Real;

/// A supremum together with the interval attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attained<F> {
    pub value: F,
    pub at: DyadicIndex,
}

/// Running maximum over nodes; ties keep the first (deepest, leftmost)
/// observation, so results are deterministic.
struct Tracker<F> {
    best: F,
    at: DyadicIndex,
}

impl<F: Real> Tracker<F> {
    fn new(init: F, at: DyadicIndex) -> Self {
        Tracker { best: init, at }
    }

    #[inline]
    fn observe(&mut self, value: F, level: u32, pos: u64) {
        if value > self.best {
            self.best = value;
            self.at = DyadicIndex::new(level, pos).expect("fold positions are in range");
        }
    }
}

fn leftmost_leaf(depth: u32) -> DyadicIndex {
    DyadicIndex::new(depth, 0).expect("depth is within range")
}

fn require_greater_than_one<F: Real>(p: F) -> Result<()> {
    if !p.is_finite() || p <= F::one() {
        return Err(Error::BadExponent {
            p: p.as_f64(),
            reason: "requires a finite exponent p > 1",
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pointwise-local functionals
// ---------------------------------------------------------------------------

/// `sup_I max(m_I w / m_{I_left} w, m_I w / m_{I_right} w)`, the classical
/// parent-to-child mass ratio. Equals `sup max(1/s, 1/(1-s))` over splits.
pub fn doubling_constant<F: Real>(tree: &WeightTree<F>) -> Attained<F> {
    let mut tracker = Tracker::new(F::neg_infinity(), DyadicIndex::ROOT);
    for level in 0..tree.depth() {
        for pos in 0..1u64 << level {
            let node = DyadicIndex::new(level, pos).expect("in range");
            let s = tree.split(node).expect("internal node");
            let worst = (F::one() / s).max(F::one() / (F::one() - s));
            tracker.observe(worst, level, pos);
        }
    }
    Attained { value: tracker.best, at: tracker.at }
}

// ---------------------------------------------------------------------------
// Subtree-statistic functionals
// ---------------------------------------------------------------------------

/// `sup_I (m_I w) / exp(m_I log w)`: arithmetic over geometric mean.
/// Intervals at leaf level score exactly 1, so the result is always >= 1.
pub fn ainf_functional<F: Real>(tree: &WeightTree<F>) -> Attained<F> {
    let depth = tree.depth();
    let mut mean = tree.leaf_log_means();
    let mut logsum = mean.clone();
    let mut tracker = Tracker::new(F::zero(), leftmost_leaf(depth));
    let half = F::lit(0.5);
    let mut inv_count = F::one();
    for level in (0..depth).rev() {
        inv_count *= half;
        for j in 0..1usize << level {
            let g = logsum[2 * j] + logsum[2 * j + 1];
            logsum[j] = g;
            let m = log_avg_exp(mean[2 * j], mean[2 * j + 1]);
            mean[j] = m;
            tracker.observe(m - g * inv_count, level, j as u64);
        }
    }
    Attained { value: tracker.best.exp(), at: tracker.at }
}

/// `sup_I (m_I w^p)^{1/p} / (m_I w)` for `p > 1`. Always >= 1 by the power
/// mean inequality; leaf intervals score exactly 1.
pub fn rhp_functional<F: Real>(tree: &WeightTree<F>, p: F) -> Result<Attained<F>> {
    require_greater_than_one(p)?;
    Ok(moment_ratio_sup(tree, p, |log_meanpow, log_mean| {
        log_meanpow / p - log_mean
    }))
}

/// `sup_I (m_I w) (m_I w^{-1/(p-1)})^{p-1}` for `p > 1`. Always >= 1 by
/// Hoelder; leaf intervals score exactly 1.
pub fn ap_functional<F: Real>(tree: &WeightTree<F>, p: F) -> Result<Attained<F>> {
    require_greater_than_one(p)?;
    let r = -(F::one() / (p - F::one()));
    Ok(moment_ratio_sup(tree, r, |log_meanpow, log_mean| {
        log_mean + (p - F::one()) * log_meanpow
    }))
}

/// Shared fold for functionals of the pair (subtree mean of `w^r`, subtree
/// mean of `w`). `score` receives logs and returns the log of the value.
fn moment_ratio_sup<F: Real>(
    tree: &WeightTree<F>,
    r: F,
    score: impl Fn(F, F) -> F,
) -> Attained<F> {
    let depth = tree.depth();
    let mut mean = tree.leaf_log_means();
    let mut stat = mean.clone();
    for x in stat.iter_mut() {
        *x *= r;
    }
    let mut tracker = Tracker::new(F::zero(), leftmost_leaf(depth));
    let mut count_log = F::zero();
    for level in (0..depth).rev() {
        count_log += F::ln_2();
        for j in 0..1usize << level {
            let s2 = log_add_exp(stat[2 * j], stat[2 * j + 1]);
            stat[j] = s2;
            let m = log_avg_exp(mean[2 * j], mean[2 * j + 1]);
            mean[j] = m;
            tracker.observe(score(s2 - count_log, m), level, j as u64);
        }
    }
    Attained { value: tracker.best.exp(), at: tracker.at }
}

// ---------------------------------------------------------------------------
// Nested-pair functional
// ---------------------------------------------------------------------------

/// `sup { m_J w / m_I w : I, J dyadic, I inside J }`. The inner minimum is
/// always realized on a chain down to leaf level, so one descent with a
/// running maximum of ancestor means suffices. The reported interval is
/// the inner (deep) one.
pub fn a1_functional<F: Real>(tree: &WeightTree<F>) -> Attained<F> {
    let (sup, _) = a1_descend(tree);
    sup
}

/// [`a1_functional`] of every truncation of the tree: entry `d` is the
/// value at depth `d` (entry 0 is trivially 1). All entries come from the
/// same single descent.
pub fn a1_profile<F: Real>(tree: &WeightTree<F>) -> Vec<F> {
    let (_, profile) = a1_descend(tree);
    profile
}

fn a1_descend<F: Real>(tree: &WeightTree<F>) -> (Attained<F>, Vec<F>) {
    let depth = tree.depth();
    let leaves = 1usize << depth;
    let mut log_mean = vec![F::zero(); leaves];
    let mut run_max = vec![F::zero(); leaves];
    let mut profile = Vec::with_capacity(depth as usize + 1);
    profile.push(F::one());
    let mut tracker = Tracker::new(F::zero(), DyadicIndex::ROOT);
    let two = F::lit(2.0);
    let half = F::lit(0.5);
    for level in 0..depth {
        for j in (0..1usize << level).rev() {
            let node = DyadicIndex::new(level, j as u64).expect("in range");
            let s = tree.split(node).expect("internal node");
            let parent_log = log_mean[j];
            let parent_max = run_max[j];
            let (left_log, right_log) = if s == half {
                (parent_log, parent_log)
            } else {
                (parent_log + (two * s).ln(), parent_log + (two * (F::one() - s)).ln())
            };
            log_mean[2 * j] = left_log;
            log_mean[2 * j + 1] = right_log;
            run_max[2 * j] = parent_max.max(left_log);
            run_max[2 * j + 1] = parent_max.max(right_log);
        }
        let child_level = level + 1;
        let mut level_best = F::zero();
        for j in 0..1usize << child_level {
            let v = run_max[j] - log_mean[j];
            if v > level_best {
                level_best = v;
            }
            tracker.observe(v, child_level, j as u64);
        }
        profile.push(level_best.exp());
    }
    (
        Attained { value: tracker.best.exp(), at: tracker.at },
        profile,
    )
}

// ---------------------------------------------------------------------------
// Summation functionals on Haar coefficients
// ---------------------------------------------------------------------------

/// `sup_J (1/|J|) sum_{I inside J} b_I^2` over all dyadic `J` of level
/// <= depth. Zero exactly when all coefficients vanish.
pub fn carleson_norm<F: Real>(series: &HaarSeries<F>) -> Attained<F> {
    let depth = series.depth();
    let mut buf = vec![F::zero(); 1usize << depth];
    let mut tracker = Tracker::new(F::zero(), leftmost_leaf(depth));
    let half = F::lit(0.5);
    for level in (0..depth).rev() {
        for j in 0..1usize << level {
            let node = DyadicIndex::new(level, j as u64).expect("in range");
            let b = series.coeff(node);
            let scaled = b * b * F::lit(level as f64).exp2();
            let v = scaled + (buf[2 * j] + buf[2 * j + 1]) * half;
            buf[j] = v;
            tracker.observe(v, level, j as u64);
        }
    }
    Attained { value: tracker.best, at: tracker.at }
}

/// [`carleson_norm`] of the tree's own Haar expansion, computed straight
/// from the splits: the node term `b_I^2 / |I|` is `(1 - 2 s_I)^2`.
pub fn carleson_norm_tree<F: Real>(tree: &WeightTree<F>) -> Attained<F> {
    let depth = tree.depth();
    let mut buf = vec![F::zero(); 1usize << depth];
    let mut tracker = Tracker::new(F::zero(), leftmost_leaf(depth));
    let half = F::lit(0.5);
    let two = F::lit(2.0);
    for level in (0..depth).rev() {
        for j in 0..1usize << level {
            let node = DyadicIndex::new(level, j as u64).expect("in range");
            let beta = F::one() - two * tree.split(node).expect("internal node");
            let v = beta * beta + (buf[2 * j] + buf[2 * j + 1]) * half;
            buf[j] = v;
            tracker.observe(v, level, j as u64);
        }
    }
    Attained { value: tracker.best, at: tracker.at }
}

/// `sup_J (1/|J|) sum_{I inside J} (m_I w / m_J w)^{-1/(p-1)} b_I^2` with
/// `b_I` the tree's own Haar coefficients. Leaf-level `I` carry no
/// coefficient and are excluded from the sum by construction.
pub fn buckley_functional<F: Real>(tree: &WeightTree<F>, p: F) -> Result<Attained<F>> {
    require_greater_than_one(p)?;
    let r = -(F::one() / (p - F::one()));
    let depth = tree.depth();
    let mut mean = tree.leaf_log_means();
    let mut acc = vec![F::neg_infinity(); 1usize << depth];
    let mut tracker = Tracker::new(F::neg_infinity(), leftmost_leaf(depth));
    let two = F::lit(2.0);
    for level in (0..depth).rev() {
        for j in 0..1usize << level {
            let node = DyadicIndex::new(level, j as u64).expect("in range");
            let s = tree.split(node).expect("internal node");
            let m = log_avg_exp(mean[2 * j], mean[2 * j + 1]);
            mean[j] = m;
            // Own term, already divided by |J|: (m_J)^r (1 - 2s)^2.
            let beta = F::one() - two * s;
            let own = if beta == F::zero() {
                F::neg_infinity()
            } else {
                r * m + two * beta.abs().ln()
            };
            let below = log_add_exp(acc[2 * j], acc[2 * j + 1]) - F::ln_2();
            let total = log_add_exp(own, below);
            acc[j] = total;
            tracker.observe(total - r * m, level, j as u64);
        }
    }
    Ok(Attained { value: tracker.best.exp(), at: tracker.at })
}

// ---------------------------------------------------------------------------
// Two-tree comparison
// ---------------------------------------------------------------------------

/// Worst-case slack, over all internal `J`, of the per-interval bound
///
/// `bracket_J(deformed) <= box_J(base) + bracket_J(base)`
///
/// where `bracket_J` is the [`buckley_functional`] sum at `J` and `box_J`
/// the [`carleson_norm`] sum at `J`, each tree using its own Haar
/// coefficients. The bound holds whenever `deformed` is the base tree with
/// all Haar coefficients scaled by a common factor in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSlack<F> {
    /// Minimum of `rhs - lhs` over internal intervals.
    pub min_slack: F,
    /// Minimum of `(rhs - lhs) / max(rhs, 1)`.
    pub min_relative_slack: F,
    /// Interval attaining the minimum absolute slack.
    pub at: DyadicIndex,
}

pub fn chain_slack<F: Real>(
    base: &WeightTree<F>,
    deformed: &WeightTree<F>,
    p: F,
) -> Result<ChainSlack<F>> {
    require_greater_than_one(p)?;
    if base.depth() != deformed.depth() {
        return Err(Error::DepthMismatch { left: base.depth(), right: deformed.depth() });
    }
    let r = -(F::one() / (p - F::one()));
    let depth = base.depth();
    let leaves = 1usize << depth;
    let mut mean_b = base.leaf_log_means();
    let mut mean_d = deformed.leaf_log_means();
    let mut acc_b = vec![F::neg_infinity(); leaves];
    let mut acc_d = vec![F::neg_infinity(); leaves];
    let mut boxes = vec![F::zero(); leaves];
    let two = F::lit(2.0);
    let half = F::lit(0.5);
    let mut min_slack = F::infinity();
    let mut min_rel = F::infinity();
    let mut at = DyadicIndex::ROOT;
    for level in (0..depth).rev() {
        for j in 0..1usize << level {
            let node = DyadicIndex::new(level, j as u64).expect("in range");
            let s_b = base.split(node).expect("internal node");
            let s_d = deformed.split(node).expect("internal node");

            let m_b = log_avg_exp(mean_b[2 * j], mean_b[2 * j + 1]);
            mean_b[j] = m_b;
            let m_d = log_avg_exp(mean_d[2 * j], mean_d[2 * j + 1]);
            mean_d[j] = m_d;

            let beta_b = F::one() - two * s_b;
            let beta_d = F::one() - two * s_d;

            let own_b = if beta_b == F::zero() {
                F::neg_infinity()
            } else {
                r * m_b + two * beta_b.abs().ln()
            };
            let own_d = if beta_d == F::zero() {
                F::neg_infinity()
            } else {
                r * m_d + two * beta_d.abs().ln()
            };
            let total_b = log_add_exp(own_b, log_add_exp(acc_b[2 * j], acc_b[2 * j + 1]) - F::ln_2());
            let total_d = log_add_exp(own_d, log_add_exp(acc_d[2 * j], acc_d[2 * j + 1]) - F::ln_2());
            acc_b[j] = total_b;
            acc_d[j] = total_d;

            let bx = beta_b * beta_b + (boxes[2 * j] + boxes[2 * j + 1]) * half;
            boxes[j] = bx;

            let rhs = bx + (total_b - r * m_b).exp();
            let lhs = (total_d - r * m_d).exp();
            let slack = rhs - lhs;
            let rel = slack / rhs.max(F::one());
            if slack < min_slack {
                min_slack = slack;
                at = node;
            }
            if rel < min_rel {
                min_rel = rel;
            }
        }
    }
    Ok(ChainSlack { min_slack, min_relative_slack: min_rel, at })
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

/// The functionals depending on an exponent `p > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport<F> {
    pub p: F,
    pub rhp: F,
    pub ap: F,
    pub buckley: F,
}

/// All class functionals of one tree at one depth.
///
/// Plain numbers only; the attaining intervals are available from the
/// individual functions when needed for diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport<F> {
    pub depth: u32,
    pub doubling: F,
    pub ainf: F,
    pub carleson: F,
    pub a1: F,
    pub exponents: Vec<ExponentReport<F>>,
}

/// Evaluates every functional on `tree`, once per exponent in `ps`.
pub fn class_report<F: Real>(tree: &WeightTree<F>, ps: &[F]) -> Result<ClassReport<F>> {
    let mut exponents = Vec::with_capacity(ps.len());
    for &p in ps {
        exponents.push(ExponentReport {
            p,
            rhp: rhp_functional(tree, p)?.value,
            ap: ap_functional(tree, p)?.value,
            buckley: buckley_functional(tree, p)?.value,
        });
    }
    Ok(ClassReport {
        depth: tree.depth(),
        doubling: doubling_constant(tree).value,
        ainf: ainf_functional(tree).value,
        carleson: carleson_norm_tree(tree).value,
        a1: a1_functional(tree).value,
        exponents,
    })
}

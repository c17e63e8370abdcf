//! Dyadic intervals of (0, 1], weights as trees of mass splits, and the
//! Haar expansion connecting the two.
//!
//! A weight of mean one on (0, 1] is stored as a complete binary tree of
//! depth `N`: the node for interval `I` records the fraction `s` of the mass
//! of `I` carried by its left half. Every derived quantity (means, moments,
//! Haar coefficients) is a product along root-to-node chains, accumulated in
//! log space because those products reach 2^{±N}.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::log_add_exp;
use crate::scalar::Real;

/// Splits must stay inside `(floor, 1 - floor)`; this is the default floor.
pub const DEFAULT_SPLIT_FLOOR: f64 = 1e-6;

/// Normalized Haar coefficients must stay below `1 - PARAEXP_MARGIN` in
/// flat norm for the factor-by-factor product of a weight to be positive
/// with a safety margin.
pub const PARAEXP_MARGIN: f64 = 1e-3;

/// Deepest tree this crate will materialize (2^26 leaves).
pub const MAX_DEPTH: u32 = 26;

// ---------------------------------------------------------------------------
// Dyadic indices
// ---------------------------------------------------------------------------

/// The dyadic interval `(pos * 2^-level, (pos + 1) * 2^-level]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicIndex {
    level: u32,
    pos: u64,
}

impl DyadicIndex {
    /// The whole interval (0, 1].
    pub const ROOT: DyadicIndex = DyadicIndex { level: 0, pos: 0 };

    /// Builds an index, rejecting positions that do not exist at the level.
    pub fn new(level: u32, pos: u64) -> Result<Self> {
        if level > 63 || pos >> level != 0 {
            return Err(Error::BadIndex { level, pos });
        }
        Ok(DyadicIndex { level, pos })
    }

    pub fn level(self) -> u32 {
        self.level
    }

    pub fn pos(self) -> u64 {
        self.pos
    }

    /// Left and right halves, one level deeper.
    pub fn children(self) -> (DyadicIndex, DyadicIndex) {
        (
            DyadicIndex { level: self.level + 1, pos: 2 * self.pos },
            DyadicIndex { level: self.level + 1, pos: 2 * self.pos + 1 },
        )
    }

    pub fn parent(self) -> Option<DyadicIndex> {
        (self.level > 0).then(|| DyadicIndex { level: self.level - 1, pos: self.pos / 2 })
    }

    /// Does `self` contain `other` (including equality)?
    pub fn contains(self, other: DyadicIndex) -> bool {
        other.level >= self.level && other.pos >> (other.level - self.level) == self.pos
    }

    pub fn strictly_contains(self, other: DyadicIndex) -> bool {
        other.level > self.level && self.contains(other)
    }

    /// Interval length `2^-level`.
    pub fn length(self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Open lower endpoint.
    pub fn lower(self) -> f64 {
        self.pos as f64 * self.length()
    }

    /// Closed upper endpoint.
    pub fn upper(self) -> f64 {
        (self.pos + 1) as f64 * self.length()
    }

    /// Does the half-open interval contain the point `x`?
    pub fn contains_point(self, x: f64) -> bool {
        self.lower() < x && x <= self.upper()
    }

    /// The level-`level` interval containing `x` in (0, 1].
    pub fn leaf_containing(level: u32, x: f64) -> Result<Self> {
        if !(0.0 < x && x <= 1.0) {
            return Err(Error::BadIndex { level, pos: u64::MAX });
        }
        let scaled = (x * (level as f64).exp2()).ceil() - 1.0;
        let pos = (scaled.max(0.0) as u64).min((1u64 << level) - 1);
        Ok(DyadicIndex { level, pos })
    }

    /// Index into a level-order array of all nodes above `depth`.
    pub(crate) fn slot(self) -> usize {
        ((1u64 << self.level) - 1 + self.pos) as usize
    }
}

/// Value of the L^2-normalized Haar function of `index` at `x`:
/// `-|I|^{-1/2}` on the left half, `+|I|^{-1/2}` on the right, 0 outside.
pub fn haar_value<F: Real>(index: DyadicIndex, x: F) -> F {
    let xf = x.as_f64();
    if !index.contains_point(xf) {
        return F::zero();
    }
    let scale = F::lit(index.level as f64 / 2.0).exp2();
    let (left, _) = index.children();
    if left.contains_point(xf) {
        -scale
    } else {
        scale
    }
}

// ---------------------------------------------------------------------------
// Weight trees
// ---------------------------------------------------------------------------

/// A positive weight of mean one on (0, 1], piecewise constant on the
/// leaves of a depth-`depth` dyadic partition.
///
/// `splits[slot(I)]` is the fraction of the mass of `I` on its left half,
/// stored in level order for all `2^depth - 1` internal nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightTreeWire<F>")]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: Real + serde::de::DeserializeOwned"
))]
pub struct WeightTree<F: Real> {
    depth: u32,
    splits: Vec<F>,
}

#[derive(Deserialize)]
struct WeightTreeWire<F> {
    depth: u32,
    splits: Vec<F>,
}

impl<F: Real> TryFrom<WeightTreeWire<F>> for WeightTree<F> {
    type Error = Error;

    fn try_from(wire: WeightTreeWire<F>) -> Result<Self> {
        WeightTree::new(wire.depth, wire.splits)
    }
}

impl<F: Real> WeightTree<F> {
    /// Validates `splits` (level order, length `2^depth - 1`) against the
    /// default floor and builds the tree.
    pub fn new(depth: u32, splits: Vec<F>) -> Result<Self> {
        Self::with_floor(depth, splits, F::lit(DEFAULT_SPLIT_FLOOR))
    }

    /// Same as [`WeightTree::new`] with an explicit validity floor.
    pub fn with_floor(depth: u32, splits: Vec<F>, floor: F) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange { depth, min: 1, max: MAX_DEPTH });
        }
        let expected = (1usize << depth) - 1;
        if splits.len() != expected {
            return Err(Error::LengthMismatch { depth, expected, got: splits.len() });
        }
        let ceil = F::one() - floor;
        for (slot, &s) in splits.iter().enumerate() {
            if !(s > floor && s < ceil) || !s.is_finite() {
                let level = (usize::BITS - 1 - (slot + 1).leading_zeros()) as u32;
                let pos = (slot + 1 - (1usize << level)) as u64;
                return Err(Error::SplitOutOfRange {
                    level,
                    pos,
                    value: s.as_f64(),
                    floor: floor.as_f64(),
                });
            }
        }
        Ok(WeightTree { depth, splits })
    }

    /// The constant weight 1: every split is 1/2.
    pub fn uniform(depth: u32) -> Self {
        assert!(depth >= 1 && depth <= MAX_DEPTH, "depth {depth} out of range");
        let half = F::lit(0.5);
        WeightTree { depth, splits: vec![half; (1usize << depth) - 1] }
    }

    /// Internal constructor for transforms that preserve validity by
    /// construction (scaling toward 1/2, re-aggregation of positive masses).
    pub(crate) fn from_splits_unchecked(depth: u32, splits: Vec<F>) -> Self {
        debug_assert_eq!(splits.len(), (1usize << depth) - 1);
        debug_assert!(splits.iter().all(|s| *s > F::zero() && *s < F::one()));
        WeightTree { depth, splits }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of internal nodes, `2^depth - 1`.
    pub fn node_count(&self) -> usize {
        self.splits.len()
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.depth
    }

    /// Level-order view of all splits.
    pub fn splits(&self) -> &[F] {
        &self.splits
    }

    /// Left-mass fraction at an internal node.
    pub fn split(&self, index: DyadicIndex) -> Result<F> {
        if index.level >= self.depth {
            return Err(Error::LevelOutOfRange { level: index.level, depth: self.depth });
        }
        Ok(self.splits[index.slot()])
    }

    fn check_level(&self, index: DyadicIndex) -> Result<()> {
        if index.level > self.depth {
            return Err(Error::LevelOutOfRange { level: index.level, depth: self.depth });
        }
        Ok(())
    }

    /// `ln` of the mean of the weight over `index`, summed along the chain
    /// from the root: each step contributes `ln(2s)` or `ln(2(1-s))`.
    pub fn log_mean(&self, index: DyadicIndex) -> Result<F> {
        self.check_level(index)?;
        let two = F::lit(2.0);
        let mut acc = F::zero();
        let mut node = DyadicIndex::ROOT;
        for step in (0..index.level).rev() {
            let s = self.splits[node.slot()];
            let go_right = (index.pos >> step) & 1 == 1;
            let factor = if go_right { two * (F::one() - s) } else { two * s };
            acc += factor.ln();
            let (l, r) = node.children();
            node = if go_right { r } else { l };
        }
        Ok(acc)
    }

    /// Mean of the weight over `index`. The root mean is exactly 1.
    pub fn mean(&self, index: DyadicIndex) -> Result<F> {
        Ok(self.log_mean(index)?.exp())
    }

    /// Mean of the `r`-th power of the weight over `index`, aggregated from
    /// the leaves under `index` in log space.
    pub fn mean_power(&self, index: DyadicIndex, r: F) -> Result<F> {
        self.check_level(index)?;
        let logs = self.subtree_leaf_log_means(index)?;
        let mut acc = F::neg_infinity();
        for &lv in &logs {
            acc = log_add_exp(acc, r * lv);
        }
        let count_log = F::lit((self.depth - index.level) as f64) * F::ln_2();
        Ok((acc - count_log).exp())
    }

    /// Weight value at a point of (0, 1]: the mean over the leaf containing it.
    pub fn evaluate(&self, x: F) -> Result<F> {
        let leaf = DyadicIndex::leaf_containing(self.depth, x.as_f64())?;
        self.mean(leaf)
    }

    /// `ln` of the leaf means under `index`, left to right.
    pub fn subtree_leaf_log_means(&self, index: DyadicIndex) -> Result<Vec<F>> {
        self.check_level(index)?;
        let sub_depth = self.depth - index.level;
        let mut buf = vec![F::zero(); 1usize << sub_depth];
        buf[0] = self.log_mean(index)?;
        let two = F::lit(2.0);
        let half = F::lit(0.5);
        for k in 0..sub_depth {
            let (base_level, base_pos) = (index.level + k, index.pos << k);
            for j in (0..1usize << k).rev() {
                let node = DyadicIndex { level: base_level, pos: base_pos + j as u64 };
                let s = self.splits[node.slot()];
                let parent_log = buf[j];
                if s == half {
                    buf[2 * j] = parent_log;
                    buf[2 * j + 1] = parent_log;
                } else {
                    buf[2 * j] = parent_log + (two * s).ln();
                    buf[2 * j + 1] = parent_log + (two * (F::one() - s)).ln();
                }
            }
        }
        Ok(buf)
    }

    /// `ln` of all leaf means, left to right.
    pub fn leaf_log_means(&self) -> Vec<F> {
        self.subtree_leaf_log_means(DyadicIndex::ROOT)
            .expect("root is always within depth")
    }

    /// All leaf means, left to right. Prefer the log variant at depth where
    /// values overflow.
    pub fn leaf_means(&self) -> Vec<F> {
        self.leaf_log_means().iter().map(|l| l.exp()).collect()
    }

    /// The multiplicative Haar data of the weight: coefficients `b_I` such
    /// that on every leaf the product of `1 + b_I h_I` over the chain of
    /// ancestors reproduces the leaf value exactly. At a node with split
    /// `s`, `b = (1 - 2s) |I|^{1/2}`; exact zeros are omitted.
    pub fn haar_series(&self) -> HaarSeries<F> {
        let mut coeffs = BTreeMap::new();
        for level in 0..self.depth {
            let root_scale = F::lit(-(level as f64) / 2.0).exp2();
            for pos in 0..1u64 << level {
                let node = DyadicIndex { level, pos };
                let s = self.splits[node.slot()];
                let b = (F::one() - F::lit(2.0) * s) * root_scale;
                if b != F::zero() {
                    coeffs.insert(node, b);
                }
            }
        }
        HaarSeries { depth: self.depth, coeffs }
    }

    /// The weight restricted to the coarser partition of depth `depth`:
    /// splits above that level survive unchanged, finer detail is averaged
    /// out (that is what dropping splits does to a mass tree).
    pub fn truncated(&self, depth: u32) -> Result<Self> {
        if depth == 0 || depth > self.depth {
            return Err(Error::DepthOutOfRange { depth, min: 1, max: self.depth });
        }
        Ok(WeightTree {
            depth,
            splits: self.splits[..(1usize << depth) - 1].to_vec(),
        })
    }

    /// The reflection `x -> 1 - x`: positions mirror within each level and
    /// every split flips `s -> 1 - s`.
    pub fn reflected(&self) -> Self {
        let mut splits = vec![F::zero(); self.node_count()];
        for level in 0..self.depth {
            let count = 1u64 << level;
            for pos in 0..count {
                let src = DyadicIndex { level, pos };
                let dst = DyadicIndex { level, pos: count - 1 - pos };
                splits[dst.slot()] = F::one() - self.splits[src.slot()];
            }
        }
        WeightTree { depth: self.depth, splits }
    }

    /// The renormalized `theta`-th power of the weight: leaf values are
    /// raised to `theta` and the splits re-aggregated, which renormalizes
    /// the mean to 1 automatically. Any finite `theta` is admissible; for
    /// `theta` in [0, 1] the result contracts toward the uniform weight.
    /// Extreme trees can produce splits below the default floor; the result
    /// is still strictly inside (0, 1) per node.
    pub fn power(&self, theta: F) -> Self {
        assert!(theta.is_finite(), "power exponent must be finite");
        let mut mass = self.leaf_log_means();
        for m in mass.iter_mut() {
            *m = *m * theta;
        }
        let mut splits = vec![F::zero(); self.node_count()];
        for level in (0..self.depth).rev() {
            for j in 0..1usize << level {
                let node = DyadicIndex { level, pos: j as u64 };
                let (left, right) = (mass[2 * j], mass[2 * j + 1]);
                splits[node.slot()] = logistic(left - right);
                mass[j] = log_add_exp(left, right);
            }
        }
        WeightTree::from_splits_unchecked(self.depth, splits)
    }
}

/// `1 / (1 + exp(-d))`, the left-mass fraction with log-mass difference `d`.
fn logistic<F: Real>(d: F) -> F {
    if d >= F::zero() {
        F::one() / (F::one() + (-d).exp())
    } else {
        let e = d.exp();
        e / (F::one() + e)
    }
}

// ---------------------------------------------------------------------------
// Haar series
// ---------------------------------------------------------------------------

/// Coefficients indexed by the internal nodes of a depth-`depth` tree,
/// stored sparsely.
///
/// The same container serves two readings: as a linear Haar expansion
/// `sum b_I h_I` (a mean-zero function), and as the factor data of the
/// product `prod (1 + b_I h_I)` (a weight; see
/// [`HaarSeries::weight_tree`]). Operations state which reading they use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HaarSeriesWire<F>", into = "HaarSeriesWire<F>")]
#[serde(bound(
    serialize = "F: Real + Serialize",
    deserialize = "F: Real + serde::de::DeserializeOwned"
))]
pub struct HaarSeries<F: Real> {
    depth: u32,
    coeffs: BTreeMap<DyadicIndex, F>,
}

#[derive(Serialize, Deserialize)]
struct CoeffWire<F> {
    level: u32,
    pos: u64,
    b: F,
}

#[derive(Serialize, Deserialize)]
struct HaarSeriesWire<F> {
    depth: u32,
    coeffs: Vec<CoeffWire<F>>,
}

impl<F: Real> From<HaarSeries<F>> for HaarSeriesWire<F> {
    fn from(series: HaarSeries<F>) -> Self {
        let coeffs = series
            .coeffs
            .into_iter()
            .map(|(idx, b)| CoeffWire { level: idx.level, pos: idx.pos, b })
            .collect();
        HaarSeriesWire { depth: series.depth, coeffs }
    }
}

impl<F: Real> TryFrom<HaarSeriesWire<F>> for HaarSeries<F> {
    type Error = Error;

    fn try_from(wire: HaarSeriesWire<F>) -> Result<Self> {
        let entries = wire
            .coeffs
            .into_iter()
            .map(|c| Ok((DyadicIndex::new(c.level, c.pos)?, c.b)))
            .collect::<Result<Vec<_>>>()?;
        HaarSeries::new(wire.depth, entries)
    }
}

impl<F: Real> HaarSeries<F> {
    /// Builds a series from `(index, coefficient)` pairs. Indices must be
    /// internal nodes (level < depth), distinct, with finite coefficients;
    /// exact zeros are dropped.
    pub fn new(depth: u32, entries: impl IntoIterator<Item = (DyadicIndex, F)>) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange { depth, min: 1, max: MAX_DEPTH });
        }
        let mut coeffs = BTreeMap::new();
        for (index, b) in entries {
            if index.level >= depth {
                return Err(Error::LevelOutOfRange { level: index.level, depth });
            }
            if !b.is_finite() {
                return Err(Error::BadIndex { level: index.level, pos: index.pos });
            }
            if coeffs.insert(index, b).is_some() {
                return Err(Error::DuplicateIndex { level: index.level, pos: index.pos });
            }
        }
        coeffs.retain(|_, b| *b != F::zero());
        Ok(HaarSeries { depth, coeffs })
    }

    /// A series with no nonzero coefficients.
    pub fn empty(depth: u32) -> Self {
        HaarSeries { depth, coeffs: BTreeMap::new() }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Coefficient at `index` (zero when absent).
    pub fn coeff(&self, index: DyadicIndex) -> F {
        self.coeffs.get(&index).copied().unwrap_or_else(F::zero)
    }

    /// Nonzero coefficients in index order.
    pub fn iter(&self) -> impl Iterator<Item = (DyadicIndex, F)> + '_ {
        self.coeffs.iter().map(|(i, b)| (*i, *b))
    }

    pub fn nonzero_count(&self) -> usize {
        self.coeffs.len()
    }

    /// The same expansion with every coefficient scaled by `factor`.
    pub fn scaled(&self, factor: F) -> Self {
        let coeffs = if factor == F::zero() {
            BTreeMap::new()
        } else {
            self.coeffs.iter().map(|(i, b)| (*i, *b * factor)).collect()
        };
        HaarSeries { depth: self.depth, coeffs }
    }

    /// Restriction to levels below `depth` (coefficients survive unchanged).
    pub fn truncated(&self, depth: u32) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange { depth, min: 1, max: MAX_DEPTH });
        }
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(i, _)| i.level < depth)
            .map(|(i, b)| (*i, *b))
            .collect();
        Ok(HaarSeries { depth, coeffs })
    }

    /// `sup |b_I| |I|^{-1/2}`: the flat norm of the expansion terms. Factors
    /// `1 + b_I h_I` stay positive exactly when this is below 1.
    pub fn flat_norm(&self) -> F {
        self.coeffs
            .iter()
            .map(|(i, b)| b.abs() * F::lit(i.level as f64 / 2.0).exp2())
            .fold(F::zero(), F::max)
    }

    /// Checks the flat norm stays below `1 - margin`.
    pub fn require_flat_margin(&self, margin: F) -> Result<()> {
        let norm = self.flat_norm();
        if norm > F::one() - margin {
            let (worst, _) = self
                .coeffs
                .iter()
                .max_by(|(i, a), (j, b)| {
                    let na = a.abs() * F::lit(i.level as f64 / 2.0).exp2();
                    let nb = b.abs() * F::lit(j.level as f64 / 2.0).exp2();
                    na.partial_cmp(&nb).expect("finite norms")
                })
                .expect("nonempty if norm > 0");
            return Err(Error::SplitOutOfRange {
                level: worst.level,
                pos: worst.pos,
                value: (F::lit(0.5) * (F::one() - norm)).as_f64(),
                floor: (F::lit(0.5) * margin).as_f64(),
            });
        }
        Ok(())
    }

    /// The weight `prod (1 + b_I h_I)` (product reading): at node `I`,
    /// `s = (1 - b |I|^{-1/2}) / 2`. Fails if any split leaves its range,
    /// i.e. if some factor is not strictly positive with margin.
    pub fn weight_tree(&self) -> Result<WeightTree<F>> {
        let half = F::lit(0.5);
        let depth = self.depth;
        let mut splits = vec![half; (1usize << depth) - 1];
        for (&index, &b) in &self.coeffs {
            let scale = F::lit(index.level as f64 / 2.0).exp2();
            splits[index.slot()] = half * (F::one() - b * scale);
        }
        WeightTree::new(depth, splits)
    }

    /// Length-normalized box sums `(1/|J|) sum_{I <= J} b_I^2` for every
    /// node `J`, as a level-order vector over all nodes including leaves
    /// (leaves contribute empty sums). Bottom-up: the per-length sums of
    /// the two halves average, and the node's own term enters as
    /// `b^2 / |J|`.
    pub fn box_sums(&self) -> Vec<F> {
        let total = (1usize << (self.depth + 1)) - 1;
        let mut sums = vec![F::zero(); total];
        let half = F::lit(0.5);
        for level in (0..self.depth).rev() {
            let inv_len = F::lit(level as f64).exp2();
            for pos in 0..1u64 << level {
                let node = DyadicIndex { level, pos };
                let (l, r) = node.children();
                let b = self.coeff(node);
                sums[node.slot()] =
                    b * b * inv_len + (sums[l.slot()] + sums[r.slot()]) * half;
            }
        }
        sums
    }
}

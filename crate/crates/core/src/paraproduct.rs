//! Finite-depth dyadic paraproducts and their resolvents.
//!
//! The paraproduct of a Haar series `b` sends `f` to
//! `sum_I (mean of f over I) b_I h_I`. In the Haar basis its matrix is
//! strictly triangular for the inclusion order: the column of `h_J` has
//! entries only at rows `I` strictly inside `J`, because the mean of
//! `h_J` vanishes on every interval not inside a half of `J`. Strict
//! triangularity makes the operator nilpotent at depth `N`, so
//! `(I - lambda pi_b)^{-1}` is the finite Neumann sum, computed here
//! exactly.
//!
//! Applications run in coefficient space, where triangularity is
//! structural: each application produces coefficients only strictly
//! below the input's topmost level, so iterated applications reach
//! exact zero with no floating-point cancellation involved.
//!
//! Operator norms on `L^p` for `p != 2` are not exactly computable;
//! `resolvent_norm_lower_bound` reports the best ratio over a seeded
//! family of trial functions, which is a certified lower bound and
//! nothing more.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::rhp_functional;
use crate::dyadic::{DyadicIndex, HaarSeries, WeightTree};
use crate::error::{Error, Result};
use crate::lambda::Lambda;
use crate::scalar::Real;

/// Coefficient vectors are dense, so operator depths stay well below the
/// tree-functional cap.
pub const PARAPRODUCT_MAX_DEPTH: u32 = 20;

#[inline]
fn haar_scale<F: Real>(level: u32) -> F {
    F::lit(0.5 * level as f64).exp2()
}

fn require_operator_depth(depth: u32) -> Result<()> {
    if depth == 0 || depth > PARAPRODUCT_MAX_DEPTH {
        return Err(Error::DepthOutOfRange { depth, min: 1, max: PARAPRODUCT_MAX_DEPTH });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mean-zero functions
// ---------------------------------------------------------------------------

/// A mean-zero function at depth `N`, stored by its Haar coefficients on
/// levels `0..N-1` in level order. Equivalently a leaf-constant function
/// on `2^N` leaves whose integral vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanZeroFunction<F> {
    depth: u32,
    coeffs: Vec<F>,
}

const MEAN_ZERO_TOL: f64 = 1e-12;

impl<F: Real> MeanZeroFunction<F> {
    /// Builds from a full level-order coefficient vector
    /// (`2^depth - 1` entries).
    pub fn from_coefficients(depth: u32, coeffs: Vec<F>) -> Result<Self> {
        require_operator_depth(depth)?;
        let expected = (1usize << depth) - 1;
        if coeffs.len() != expected {
            return Err(Error::LengthMismatch { depth, expected, got: coeffs.len() });
        }
        Ok(MeanZeroFunction { depth, coeffs })
    }

    /// The zero function.
    pub fn zero(depth: u32) -> Result<Self> {
        require_operator_depth(depth)?;
        Ok(MeanZeroFunction { depth, coeffs: vec![F::zero(); (1usize << depth) - 1] })
    }

    /// The Haar function `h_I` as an element of the depth-`N` space.
    pub fn basis(depth: u32, index: DyadicIndex) -> Result<Self> {
        let mut f = Self::zero(depth)?;
        if index.level() >= depth {
            return Err(Error::LevelOutOfRange { level: index.level(), depth });
        }
        f.coeffs[index.slot()] = F::one();
        Ok(f)
    }

    /// Builds from leaf values (`2^depth` entries, left to right), which
    /// must integrate to zero within `1e-12` of the sup norm.
    pub fn from_leaf_values(leaves: &[F]) -> Result<Self> {
        let n = leaves.len();
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::LengthMismatch { depth: 0, expected: 2, got: n });
        }
        let depth = n.trailing_zeros();
        require_operator_depth(depth)?;

        // Means of every node, bottom-up; then coefficients from the
        // difference of child means.
        let mut means = vec![F::zero(); n - 1];
        let half = F::lit(0.5);
        for k in (0..depth).rev() {
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                let (l, r) = if k + 1 == depth {
                    let j = s - ((1usize << k) - 1);
                    (leaves[2 * j], leaves[2 * j + 1])
                } else {
                    (means[2 * s + 1], means[2 * s + 2])
                };
                means[s] = half * (l + r);
            }
        }
        let total = means[0];
        let scale = leaves.iter().fold(F::one(), |m, v| m.max(v.abs()));
        if total.abs() > F::lit(MEAN_ZERO_TOL) * scale {
            return Err(Error::NotMeanZero { mean: total.as_f64(), tol: MEAN_ZERO_TOL });
        }

        let mut coeffs = vec![F::zero(); n - 1];
        for k in 0..depth {
            let step = half / haar_scale::<F>(k);
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                let (l, r) = if k + 1 == depth {
                    let j = s - ((1usize << k) - 1);
                    (leaves[2 * j], leaves[2 * j + 1])
                } else {
                    (means[2 * s + 1], means[2 * s + 2])
                };
                coeffs[s] = (r - l) * step;
            }
        }
        Ok(MeanZeroFunction { depth, coeffs })
    }

    /// The indicator of `I` minus its measure: the natural mean-zero
    /// version of a localized bump.
    pub fn recentered_indicator(depth: u32, index: DyadicIndex) -> Result<Self> {
        require_operator_depth(depth)?;
        if index.level() > depth {
            return Err(Error::LevelOutOfRange { level: index.level(), depth });
        }
        let n = 1usize << depth;
        let measure = (-F::lit(index.level() as f64)).exp2();
        let mut leaves = vec![-measure; n];
        let width = 1usize << (depth - index.level());
        let start = index.pos() as usize * width;
        for v in &mut leaves[start..start + width] {
            *v = F::one() - measure;
        }
        Self::from_leaf_values(&leaves)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn coefficient(&self, index: DyadicIndex) -> F {
        if index.level() >= self.depth {
            F::zero()
        } else {
            self.coeffs[index.slot()]
        }
    }

    pub fn coefficients(&self) -> &[F] {
        &self.coeffs
    }

    /// Leaf values of the function (length `2^depth`).
    pub fn leaf_values(&self) -> Vec<F> {
        let n = 1usize << self.depth;
        let mut vals = vec![F::zero(); n - 1];
        let mut leaves = vec![F::zero(); n];
        for k in 0..self.depth {
            let t = haar_scale::<F>(k);
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                let down = vals[s] - self.coeffs[s] * t;
                let up = vals[s] + self.coeffs[s] * t;
                if k + 1 == self.depth {
                    let j = s - ((1usize << k) - 1);
                    leaves[2 * j] = down;
                    leaves[2 * j + 1] = up;
                } else {
                    vals[2 * s + 1] = down;
                    vals[2 * s + 2] = up;
                }
            }
        }
        leaves
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == F::zero())
    }

    fn add_scaled(&mut self, other: &Self, factor: F) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * *b;
        }
    }

    fn l2_norm(&self) -> F {
        self.coeffs.iter().map(|c| *c * *c).sum::<F>().sqrt()
    }

    fn scale(&mut self, factor: F) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }
}

/// Exact `L^p` norm of a leaf-constant function, `p >= 1`.
pub fn lp_norm<F: Real>(f: &MeanZeroFunction<F>, p: F) -> Result<F> {
    if !p.is_finite() || p < F::one() {
        return Err(Error::BadExponent { p: p.as_f64(), reason: "lp_norm requires p >= 1" });
    }
    let leaves = f.leaf_values();
    let measure = (-F::lit(f.depth() as f64)).exp2();
    let sum: F = leaves.iter().map(|v| v.abs().powf(p) * measure).sum();
    Ok(sum.powf(F::one() / p))
}

// ---------------------------------------------------------------------------
// The paraproduct operator
// ---------------------------------------------------------------------------

/// The paraproduct of a Haar series in the depth-`N` Haar basis.
///
/// Entries are never materialized: the matrix is determined by the dense
/// coefficient vector, entry `(I, J) = b_I h_J(I)` for `I` strictly
/// inside `J`, and both the entry accessor and the applications read it
/// off directly. Columns are sparse in exactly this sense.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarOperator<F> {
    depth: u32,
    b: Vec<F>,
}

impl<F: Real> HaarOperator<F> {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Matrix entry at (row `I`, column `J`): `b_I` times the value of
    /// `h_J` on `I`, zero unless `I` is strictly inside `J`.
    pub fn entry(&self, row: DyadicIndex, col: DyadicIndex) -> F {
        if row.level() >= self.depth
            || col.level() >= self.depth
            || !col.strictly_contains(row)
        {
            return F::zero();
        }
        let sign = if col.children().0.contains(row) { -F::one() } else { F::one() };
        self.b[row.slot()] * sign * haar_scale::<F>(col.level())
    }

    /// All nonzero entries as `(row, column, value)`, row-major within a
    /// column. Cost is `O(entries)`; intended for small depths.
    pub fn entries(&self) -> Vec<(DyadicIndex, DyadicIndex, F)> {
        let mut out = Vec::new();
        for k in 0..self.depth {
            for pos in 0..1u64 << k {
                let row = DyadicIndex::new(k, pos).expect("row in range");
                if self.b[row.slot()] == F::zero() {
                    continue;
                }
                let mut col = row;
                while let Some(parent) = col.parent() {
                    col = parent;
                    out.push((row, col, self.entry(row, col)));
                }
            }
        }
        out
    }

    /// Applies the operator to a coefficient vector. The output
    /// coefficient at `I` is `b_I` times the mean of the input over `I`,
    /// and that mean involves only coefficients strictly above `I`.
    pub fn apply(&self, f: &MeanZeroFunction<F>) -> Result<MeanZeroFunction<F>> {
        if f.depth != self.depth {
            return Err(Error::DepthMismatch { left: self.depth, right: f.depth });
        }
        let n = 1usize << self.depth;
        // means[s]: mean of f over the node at slot s, accumulated by
        // descending through ancestors' Haar values.
        let mut means = vec![F::zero(); n - 1];
        let mut out = vec![F::zero(); n - 1];
        for k in 0..self.depth {
            let t = haar_scale::<F>(k);
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                out[s] = self.b[s] * means[s];
                if k + 1 < self.depth {
                    means[2 * s + 1] = means[s] - f.coeffs[s] * t;
                    means[2 * s + 2] = means[s] + f.coeffs[s] * t;
                }
            }
        }
        Ok(MeanZeroFunction { depth: self.depth, coeffs: out })
    }

    /// Applies the transpose: the output coefficient at `J` collects
    /// `b_I f_I` over `I` strictly inside `J`, weighted by `h_J` on `I`.
    pub fn apply_transpose(&self, f: &MeanZeroFunction<F>) -> Result<MeanZeroFunction<F>> {
        if f.depth != self.depth {
            return Err(Error::DepthMismatch { left: self.depth, right: f.depth });
        }
        let n = 1usize << self.depth;
        // sums[s]: sum of b_I f_I over the whole subtree at slot s.
        let mut sums = vec![F::zero(); n - 1];
        for k in (0..self.depth).rev() {
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                let below = if k + 1 < self.depth {
                    sums[2 * s + 1] + sums[2 * s + 2]
                } else {
                    F::zero()
                };
                sums[s] = self.b[s] * f.coeffs[s] + below;
            }
        }
        let mut out = vec![F::zero(); n - 1];
        for k in 0..self.depth.saturating_sub(1) {
            let t = haar_scale::<F>(k);
            for s in (1usize << k) - 1..(1usize << (k + 1)) - 1 {
                out[s] = t * (sums[2 * s + 2] - sums[2 * s + 1]);
            }
        }
        Ok(MeanZeroFunction { depth: self.depth, coeffs: out })
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(|c| *c == F::zero())
    }
}

/// The paraproduct matrix of `series` on the depth-`N` mean-zero space.
/// The series must live on levels strictly above `depth`.
pub fn paraproduct_matrix<F: Real>(series: &HaarSeries<F>, depth: u32) -> Result<HaarOperator<F>> {
    require_operator_depth(depth)?;
    if series.depth() > depth {
        return Err(Error::LevelOutOfRange { level: series.depth(), depth });
    }
    let mut b = vec![F::zero(); (1usize << depth) - 1];
    for (index, value) in series.iter() {
        b[index.slot()] = value;
    }
    Ok(HaarOperator { depth, b })
}

// ---------------------------------------------------------------------------
// Resolvents
// ---------------------------------------------------------------------------

/// `(I - lambda pi_b)^{-1} f`, exactly, as the finite Neumann sum
/// `sum_k (lambda pi_b)^k f`. Nilpotency truncates the sum at the depth.
pub fn apply_resolvent<F: Real>(
    series: &HaarSeries<F>,
    lambda: Lambda,
    f: &MeanZeroFunction<F>,
) -> Result<MeanZeroFunction<F>> {
    let op = paraproduct_matrix(series, f.depth())?;
    resolvent_with(&op, F::lit(lambda.value()), f, false)
}

/// Shared Neumann evaluation for the resolvent and its transpose.
fn resolvent_with<F: Real>(
    op: &HaarOperator<F>,
    lambda: F,
    f: &MeanZeroFunction<F>,
    transpose: bool,
) -> Result<MeanZeroFunction<F>> {
    let mut acc = f.clone();
    let mut term = f.clone();
    for _ in 0..op.depth() {
        term = if transpose { op.apply_transpose(&term)? } else { op.apply(&term)? };
        term.scale(lambda);
        if term.is_zero() {
            break;
        }
        acc.add_scaled(&term, F::one());
    }
    Ok(acc)
}

/// Relative residual of a claimed resolvent image in the leaf max-norm:
/// `max |(I - lambda pi_b) g - f| / max |f|`.
pub fn resolvent_residual<F: Real>(
    series: &HaarSeries<F>,
    lambda: Lambda,
    f: &MeanZeroFunction<F>,
    g: &MeanZeroFunction<F>,
) -> Result<F> {
    let op = paraproduct_matrix(series, f.depth())?;
    let mut back = g.clone();
    let pg = op.apply(g)?;
    back.add_scaled(&pg, -F::lit(lambda.value()));
    back.add_scaled(f, -F::one());
    let err = back
        .leaf_values()
        .iter()
        .fold(F::zero(), |m, v| m.max(v.abs()));
    let scale = f
        .leaf_values()
        .iter()
        .fold(F::zero(), |m, v| m.max(v.abs()));
    if scale == F::zero() {
        return Ok(err);
    }
    Ok(err / scale)
}

// ---------------------------------------------------------------------------
// Norm probes
// ---------------------------------------------------------------------------

/// A certified lower bound on the resolvent's `L^p` operator norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBound<F> {
    /// Best ratio over the trial family (random plus structured inputs).
    pub trial_bound: F,
    /// At `p = 2` only: the Rayleigh quotient after 30 power iterations
    /// on the normal operator, reported separately.
    pub power_iteration: Option<F>,
}

fn gaussian<F: Real>(rng: &mut ChaCha8Rng) -> F {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    F::lit((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
}

fn random_function<F: Real>(depth: u32, rng: &mut ChaCha8Rng) -> MeanZeroFunction<F> {
    let coeffs = (0..(1usize << depth) - 1).map(|_| gaussian(rng)).collect();
    MeanZeroFunction { depth, coeffs }
}

const POWER_ITERATIONS: usize = 30;

/// Lower-bounds the `L^p` norm of `(I - lambda pi_b)^{-1}` at the given
/// depth: the best ratio `|Rf|_p / |f|_p` over `trials` seeded Gaussian
/// coefficient vectors plus the structured family of left-spine bumps
/// (re-centered indicators and Haar functions of `(0, 2^-l]`).
/// Deterministic for a fixed seed.
pub fn resolvent_norm_lower_bound<F: Real>(
    series: &HaarSeries<F>,
    lambda: Lambda,
    p: F,
    depth: u32,
    trials: usize,
    seed: u64,
) -> Result<NormBound<F>> {
    if trials == 0 {
        return Err(Error::EmptyInput("trials"));
    }
    if !p.is_finite() || p <= F::one() {
        return Err(Error::BadExponent { p: p.as_f64(), reason: "norm probe requires p > 1" });
    }
    let op = paraproduct_matrix(series, depth)?;
    let lam = F::lit(lambda.value());

    let mut candidates: Vec<MeanZeroFunction<F>> = Vec::new();
    for l in 0..depth {
        candidates.push(MeanZeroFunction::basis(depth, DyadicIndex::new(l, 0)?)?);
    }
    for l in 1..=depth {
        candidates.push(MeanZeroFunction::recentered_indicator(
            depth,
            DyadicIndex::new(l, 0)?,
        )?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        candidates.push(random_function(depth, &mut rng));
    }

    let mut best = F::zero();
    for f in &candidates {
        let denom = lp_norm(f, p)?;
        if denom == F::zero() {
            continue;
        }
        let rf = resolvent_with(&op, lam, f, false)?;
        best = best.max(lp_norm(&rf, p)? / denom);
    }

    let power_iteration = if p == F::lit(2.0) {
        let mut v = random_function::<F>(depth, &mut rng);
        let norm = v.l2_norm();
        if norm > F::zero() {
            v.scale(F::one() / norm);
        }
        for _ in 0..POWER_ITERATIONS {
            let rv = resolvent_with(&op, lam, &v, false)?;
            let mut u = resolvent_with(&op, lam, &rv, true)?;
            let norm = u.l2_norm();
            if norm == F::zero() {
                break;
            }
            u.scale(F::one() / norm);
            v = u;
        }
        let rv = resolvent_with(&op, lam, &v, false)?;
        Some(rv.l2_norm() / v.l2_norm())
    } else {
        None
    };

    Ok(NormBound { trial_bound: best, power_iteration })
}

// ---------------------------------------------------------------------------
// Joint sweeps
// ---------------------------------------------------------------------------

/// One cell of a resolvent sweep: the norm lower bound next to the
/// reverse Holder functional of the contracted weight, at one depth and
/// one contraction factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<F> {
    pub depth: u32,
    pub lambda: F,
    pub p: F,
    pub norm_lower_bound: F,
    pub power_iteration: Option<F>,
    pub rhp_omega_lambda: F,
}

/// Evaluates the resolvent norm bound and `rhp_functional` of the
/// contracted weight side by side over a (depth, lambda) grid.
pub fn resolvent_sweep<F: Real>(
    series: &HaarSeries<F>,
    p: F,
    depths: &[u32],
    lambdas: &[Lambda],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow<F>>> {
    if depths.is_empty() {
        return Err(Error::EmptyInput("depth grid"));
    }
    if lambdas.is_empty() {
        return Err(Error::EmptyInput("lambda grid"));
    }
    let mut rows = Vec::with_capacity(depths.len() * lambdas.len());
    for &depth in depths {
        let local = if series.depth() > depth {
            series.truncated(depth)?
        } else {
            series.clone()
        };
        for &lambda in lambdas {
            let bound = resolvent_norm_lower_bound(&local, lambda, p, depth, trials, seed)?;
            let weight: WeightTree<F> = local.scaled(F::lit(lambda.value())).weight_tree()?;
            let rhp = rhp_functional(&weight, p)?.value;
            rows.push(SweepRow {
                depth,
                lambda: F::lit(lambda.value()),
                p,
                norm_lower_bound: bound.trial_bound,
                power_iteration: bound.power_iteration,
                rhp_omega_lambda: rhp,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn idx(level: u32, pos: u64) -> DyadicIndex {
        DyadicIndex::new(level, pos).unwrap()
    }

    fn series(depth: u32, entries: &[(u32, u64, f64)]) -> HaarSeries<f64> {
        HaarSeries::new(
            depth,
            entries.iter().map(|&(k, j, b)| (idx(k, j), b)).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn coefficient_and_leaf_views_agree() {
        let f = MeanZeroFunction::<f64>::basis(3, idx(1, 1)).unwrap();
        let leaves = f.leaf_values();
        // h_{(1,1)}: 0 on (0,1/2], -sqrt2 then +sqrt2 on the halves of (1/2,1].
        let r2 = 2f64.sqrt();
        assert_eq!(&leaves[0..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(leaves[4], -r2);
        assert_relative_eq!(leaves[6], r2);
        let back = MeanZeroFunction::from_leaf_values(&leaves).unwrap();
        for k in 0..3 {
            for j in 0..1u64 << k {
                assert_relative_eq!(
                    back.coefficient(idx(k, j)),
                    f.coefficient(idx(k, j)),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn leaf_constructor_rejects_nonzero_mean() {
        assert!(matches!(
            MeanZeroFunction::from_leaf_values(&[1.0, 1.0, -1.0, 0.5]),
            Err(Error::NotMeanZero { .. })
        ));
        assert!(MeanZeroFunction::from_leaf_values(&[1.0, -1.0, 2.0, -2.0]).is_ok());
        assert!(MeanZeroFunction::from_leaf_values(&[1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn recentered_indicator_is_mean_zero_and_local() {
        let f = MeanZeroFunction::<f64>::recentered_indicator(4, idx(2, 0)).unwrap();
        let leaves = f.leaf_values();
        for (i, v) in leaves.iter().enumerate() {
            let expected = if i < 4 { 0.75 } else { -0.25 };
            assert_relative_eq!(*v, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn lp_norm_of_haar_functions() {
        // Root Haar function has |h| = 1 everywhere: norm 1 for every p.
        let root = MeanZeroFunction::<f64>::basis(3, idx(0, 0)).unwrap();
        for p in [1.0, 1.7, 2.0, 5.0] {
            assert_relative_eq!(lp_norm(&root, p).unwrap(), 1.0, epsilon = 1e-14);
        }
        // Deeper h_I: norm |I|^{1/p - 1/2}; p = 2 gives 1.
        let f = MeanZeroFunction::<f64>::basis(4, idx(2, 1)).unwrap();
        assert_relative_eq!(lp_norm(&f, 2.0).unwrap(), 1.0, epsilon = 1e-14);
        for p in [1.0, 1.5, 3.0] {
            let expected = 0.25f64.powf(1.0 / p - 0.5);
            assert_relative_eq!(lp_norm(&f, p).unwrap(), expected, epsilon = 1e-13);
        }
        assert!(lp_norm(&f, 0.9).is_err());
    }

    #[test]
    fn matrix_entries_match_the_formula() {
        // Depth 2, single coefficient at (1,0): the only column with an
        // entry is the root, and pi_b h_root = -c h_{(1,0)}.
        let c = 0.3;
        let op = paraproduct_matrix(&series(2, &[(1, 0, c)]), 2).unwrap();
        assert_relative_eq!(op.entry(idx(1, 0), idx(0, 0)), -c);
        assert_eq!(op.entry(idx(1, 1), idx(0, 0)), 0.0);
        assert_eq!(op.entry(idx(0, 0), idx(1, 0)), 0.0);
        assert_eq!(op.entries().len(), 1);

        let root = MeanZeroFunction::basis(2, idx(0, 0)).unwrap();
        let out = op.apply(&root).unwrap();
        assert_relative_eq!(out.coefficient(idx(1, 0)), -c);
        assert_eq!(out.coefficient(idx(0, 0)), 0.0);
        assert_eq!(out.coefficient(idx(1, 1)), 0.0);

        // Finest-level Haar functions are annihilated: no room below.
        let fine = MeanZeroFunction::basis(2, idx(1, 1)).unwrap();
        assert!(op.apply(&fine).unwrap().is_zero());

        // Zero series: zero operator.
        let zero_op = paraproduct_matrix(&HaarSeries::<f64>::empty(2), 2).unwrap();
        assert!(zero_op.is_zero());
        assert!(zero_op.apply(&root).unwrap().is_zero());
    }

    #[test]
    fn operator_depth_validation() {
        let s = series(2, &[(1, 0, 0.3)]);
        assert!(paraproduct_matrix(&s, 1).is_err());
        assert!(paraproduct_matrix(&s, PARAPRODUCT_MAX_DEPTH + 1).is_err());
        let op = paraproduct_matrix(&s, 3).unwrap();
        let f = MeanZeroFunction::<f64>::zero(4).unwrap();
        assert!(matches!(op.apply(&f), Err(Error::DepthMismatch { .. })));
    }

    #[test]
    fn nilpotency_is_exact_on_every_basis_vector() {
        // A dense series: every node of a random tree contributes.
        let tree = WeightTree::<f64>::new(5, {
            let mut v = Vec::new();
            for i in 0..31 {
                v.push(0.3 + 0.4 * ((i * 17 % 13) as f64 / 13.0));
            }
            v
        })
        .unwrap();
        let s = tree.haar_series();
        let op = paraproduct_matrix(&s, 5).unwrap();
        for k in 0..5 {
            for j in 0..1u64 << k {
                let mut f = MeanZeroFunction::basis(5, idx(k, j)).unwrap();
                for _ in 0..5 {
                    f = op.apply(&f).unwrap();
                }
                assert!(f.coefficients().iter().all(|c| *c == 0.0));
            }
        }
    }

    #[test]
    fn resolvent_identity_cases() {
        let s = series(3, &[(0, 0, 0.2), (1, 1, -0.3), (2, 0, 0.1)]);
        let f = MeanZeroFunction::basis(3, idx(0, 0)).unwrap();
        // lambda = 0: resolvent is the identity, bitwise.
        let r0 = apply_resolvent(&s, Lambda::ZERO, &f).unwrap();
        assert_eq!(r0, f);
        // Zero series: identity too.
        let rz = apply_resolvent(&HaarSeries::empty(3), Lambda::new(0.7).unwrap(), &f).unwrap();
        assert_eq!(rz, f);
    }

    #[test]
    fn transpose_is_the_adjoint() {
        let s = series(3, &[(0, 0, 0.4), (1, 0, -0.2), (2, 3, 0.5)]);
        let op = paraproduct_matrix(&s, 3).unwrap();
        let f = MeanZeroFunction::from_coefficients(
            3,
            vec![0.3, -0.1, 0.7, 0.2, -0.5, 0.0, 0.9],
        )
        .unwrap();
        let g = MeanZeroFunction::from_coefficients(
            3,
            vec![-0.6, 0.8, 0.1, -0.3, 0.4, 0.2, -0.7],
        )
        .unwrap();
        let dot = |a: &MeanZeroFunction<f64>, b: &MeanZeroFunction<f64>| -> f64 {
            a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| x * y).sum()
        };
        let lhs = dot(&op.apply(&f).unwrap(), &g);
        let rhs = dot(&f, &op.apply_transpose(&g).unwrap());
        assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn norm_bound_identity_cases() {
        let zero = HaarSeries::<f64>::empty(4);
        let b = resolvent_norm_lower_bound(&zero, Lambda::new(0.5).unwrap(), 2.0, 4, 3, 7)
            .unwrap();
        assert_eq!(b.trial_bound, 1.0);
        assert_eq!(b.power_iteration, Some(1.0));

        let s = series(4, &[(1, 0, 0.4)]);
        let b0 = resolvent_norm_lower_bound(&s, Lambda::ZERO, 3.0, 4, 3, 7).unwrap();
        assert_eq!(b0.trial_bound, 1.0);
        assert_eq!(b0.power_iteration, None);

        assert!(resolvent_norm_lower_bound(&s, Lambda::ZERO, 3.0, 4, 0, 7).is_err());
    }

    #[test]
    fn norm_bound_is_deterministic_and_positive() {
        let s = series(5, &[(0, 0, 0.5), (1, 0, -0.4), (2, 0, 0.3), (3, 0, 0.2)]);
        let lam = Lambda::new(0.9).unwrap();
        let a = resolvent_norm_lower_bound(&s, lam, 2.0, 5, 5, 42).unwrap();
        let b = resolvent_norm_lower_bound(&s, lam, 2.0, 5, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.trial_bound >= 1.0);
        let p = a.power_iteration.unwrap();
        assert!(p.is_finite() && p > 0.0);
        // The power iteration refines the L2 estimate at least to the
        // level of the best trial vector's Rayleigh quotient.
        assert!(p >= 0.5 * a.trial_bound);
    }

    #[test]
    fn sweep_zero_series_is_all_ones() {
        let rows = resolvent_sweep(
            &HaarSeries::<f64>::empty(4),
            2.0,
            &[3, 4],
            &[Lambda::ZERO, Lambda::new(0.5).unwrap(), Lambda::ONE],
            2,
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        for row in rows {
            assert_eq!(row.norm_lower_bound, 1.0);
            assert_eq!(row.power_iteration, Some(1.0));
            assert_eq!(row.rhp_omega_lambda, 1.0);
        }
        assert!(resolvent_sweep(&HaarSeries::<f64>::empty(4), 2.0, &[], &[Lambda::ZERO], 2, 1)
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn resolvent_residual_is_tiny(
            seed in 0u64..1u64 << 48,
            lambda in -1.0f64..1.0,
            depth in 2u32..7,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = (1usize << depth) - 1;
            let coeffs: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
            let f = MeanZeroFunction::from_coefficients(depth, coeffs).unwrap();
            // A series with flat norm safely below 1 (resolvent-friendly).
            let entries: Vec<(DyadicIndex, f64)> = (0..depth)
                .flat_map(|k| (0..1u64 << k).map(move |j| (k, j)))
                .map(|(k, j)| {
                    let raw: f64 = rand::Rng::gen_range(&mut rng, -0.9..0.9);
                    (idx(k, j), raw * 0.5f64.powf(k as f64 / 2.0))
                })
                .collect();
            let s = HaarSeries::new(depth, entries).unwrap();
            let lam = Lambda::new(lambda).unwrap();
            let rf = apply_resolvent(&s, lam, &f).unwrap();
            let residual = resolvent_residual(&s, lam, &f, &rf).unwrap();
            prop_assert!(residual <= 1e-10, "residual {residual}");
        }

        #[test]
        fn applications_agree_with_entry_sums(
            seed in 0u64..1u64 << 48,
            depth in 2u32..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = (1usize << depth) - 1;
            let entries: Vec<(DyadicIndex, f64)> = (0..depth)
                .flat_map(|k| (0..1u64 << k).map(move |j| (k, j)))
                .map(|(k, j)| (idx(k, j), rand::Rng::gen_range(&mut rng, -1.0..1.0)))
                .collect();
            let s = HaarSeries::new(depth, entries).unwrap();
            let op = paraproduct_matrix(&s, depth).unwrap();
            let coeffs: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
            let f = MeanZeroFunction::from_coefficients(depth, coeffs).unwrap();
            let fast = op.apply(&f).unwrap();
            // Dense entry-by-entry evaluation of the same matrix.
            let mut slow = MeanZeroFunction::zero(depth).unwrap();
            let mut slow_c = vec![0.0; n];
            for k in 0..depth {
                for j in 0..1u64 << k {
                    let row = idx(k, j);
                    let mut acc = 0.0;
                    for kc in 0..depth {
                        for jc in 0..1u64 << kc {
                            let col = idx(kc, jc);
                            acc += op.entry(row, col) * f.coefficient(col);
                        }
                    }
                    slow_c[row.slot()] = acc;
                }
            }
            slow.coeffs.copy_from_slice(&slow_c);
            for (a, b) in fast.coefficients().iter().zip(slow.coefficients()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}

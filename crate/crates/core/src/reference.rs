//! Brute-force re-implementations of the crate's functionals, written as
//! directly as possible from the definitions and sharing no code with the
//! optimized engines. They exist to cross-check results in tests and are
//! exponential in depth; keep inputs small.

use crate::dyadic::{DyadicIndex, HaarSeries, WeightTree};
use crate::error::Result;
use crate::scalar::Real;

/// Leaf values of the weight, computed by plain recursive mass splitting
/// (no logarithms, no shared code with `WeightTree::leaf_log_means`).
pub fn leaf_values<F: Real>(tree: &WeightTree<F>) -> Vec<F> {
    let depth = tree.depth();
    let mut out = vec![F::zero(); 1usize << depth];
    fn fill<F: Real>(tree: &WeightTree<F>, node: DyadicIndex, value: F, out: &mut [F]) {
        if node.level() == tree.depth() {
            out[node.pos() as usize] = value;
            return;
        }
        let s = tree.split(node).expect("internal node");
        let two = F::lit(2.0);
        let (l, r) = node.children();
        fill(tree, l, value * two * s, out);
        fill(tree, r, value * two * (F::one() - s), out);
    }
    fill(tree, DyadicIndex::ROOT, F::one(), &mut out);
    out
}

/// All dyadic indices of level <= depth, coarse to fine.
pub fn all_nodes(depth: u32) -> Vec<DyadicIndex> {
    (0..=depth)
        .flat_map(|k| (0..1u64 << k).map(move |j| DyadicIndex::new(k, j).expect("in range")))
        .collect()
}

fn leaf_range(node: DyadicIndex, depth: u32) -> std::ops::Range<usize> {
    let span = 1usize << (depth - node.level());
    let start = (node.pos() as usize) * span;
    start..start + span
}

/// Average of the leaf values under `node`.
pub fn mean<F: Real>(leaves: &[F], node: DyadicIndex, depth: u32) -> F {
    let range = leaf_range(node, depth);
    let count = F::lit(range.len() as f64);
    leaves[range].iter().copied().sum::<F>() / count
}

/// Average of the `r`-th powers of the leaf values under `node`.
pub fn mean_power<F: Real>(leaves: &[F], node: DyadicIndex, depth: u32, r: F) -> F {
    let range = leaf_range(node, depth);
    let count = F::lit(range.len() as f64);
    leaves[range].iter().map(|v| v.powf(r)).sum::<F>() / count
}

/// Multiplicative Haar coefficient at `node`, from raw masses:
/// `b = (1 - 2 mass_left / mass) |I|^{1/2}`.
pub fn haar_coefficient<F: Real>(leaves: &[F], node: DyadicIndex, depth: u32) -> F {
    let (l, _) = node.children();
    let m = mean(leaves, node, depth);
    let ml = mean(leaves, l, depth);
    // mass_left / mass = (m_l |I|/2) / (m |I|) = m_l / (2 m)
    let s = ml / (F::lit(2.0) * m);
    (F::one() - F::lit(2.0) * s) * F::lit(-(node.level() as f64) / 2.0).exp2()
}

/// Supremum of parent-to-child mass ratios. A child holds half the length,
/// so its mass is `mean * |I| / 2`.
pub fn doubling<F: Real>(tree: &WeightTree<F>) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let two = F::lit(2.0);
    let mut best = F::neg_infinity();
    for node in all_nodes(depth) {
        if node.level() == depth {
            continue;
        }
        let m = mean(&leaves, node, depth);
        let (l, r) = node.children();
        let worst = (two * m / mean(&leaves, l, depth)).max(two * m / mean(&leaves, r, depth));
        best = best.max(worst);
    }
    best
}

pub fn ainf<F: Real>(tree: &WeightTree<F>) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let mut best = F::one();
    for node in all_nodes(depth) {
        let range = leaf_range(node, depth);
        let count = F::lit(range.len() as f64);
        let log_avg = leaves[range].iter().map(|v| v.ln()).sum::<F>() / count;
        best = best.max(mean(&leaves, node, depth) / log_avg.exp());
    }
    best
}

pub fn rhp<F: Real>(tree: &WeightTree<F>, p: F) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let mut best = F::one();
    for node in all_nodes(depth) {
        let v = mean_power(&leaves, node, depth, p).powf(F::one() / p)
            / mean(&leaves, node, depth);
        best = best.max(v);
    }
    best
}

pub fn ap<F: Real>(tree: &WeightTree<F>, p: F) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let r = -(F::one() / (p - F::one()));
    let mut best = F::one();
    for node in all_nodes(depth) {
        let v = mean(&leaves, node, depth)
            * mean_power(&leaves, node, depth, r).powf(p - F::one());
        best = best.max(v);
    }
    best
}

/// Supremum of `m_J / m_I` over every nested pair of dyadic intervals,
/// by direct double loop.
pub fn a1<F: Real>(tree: &WeightTree<F>) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let nodes = all_nodes(depth);
    let mut best = F::one();
    for &outer in &nodes {
        let m_outer = mean(&leaves, outer, depth);
        for &inner in &nodes {
            if outer.contains(inner) {
                best = best.max(m_outer / mean(&leaves, inner, depth));
            }
        }
    }
    best
}

/// Direct double loop over `J` and the coefficients inside it.
pub fn carleson<F: Real>(series: &HaarSeries<F>) -> F {
    let depth = series.depth();
    let mut best = F::zero();
    for node in all_nodes(depth) {
        let mut sum = F::zero();
        for (index, b) in series.iter() {
            if node.contains(index) {
                sum += b * b;
            }
        }
        best = best.max(sum * F::lit(node.level() as f64).exp2());
    }
    best
}

/// Direct double loop for the weighted coefficient sums.
pub fn buckley<F: Real>(tree: &WeightTree<F>, p: F) -> F {
    let depth = tree.depth();
    let leaves = leaf_values(tree);
    let r = -(F::one() / (p - F::one()));
    let mut best = F::zero();
    for outer in all_nodes(depth) {
        if outer.level() == depth {
            continue;
        }
        let m_outer = mean(&leaves, outer, depth);
        let mut sum = F::zero();
        for inner in all_nodes(depth) {
            if inner.level() == depth || !outer.contains(inner) {
                continue;
            }
            let b = haar_coefficient(&leaves, inner, depth);
            let ratio = mean(&leaves, inner, depth) / m_outer;
            sum += ratio.powf(r) * b * b;
        }
        best = best.max(sum * F::lit(outer.level() as f64).exp2());
    }
    best
}

/// Pointwise product expansion `prod (1 + b_I h_I(x))` evaluated at leaf
/// midpoints: the product reading of a coefficient series, without going
/// through splits.
pub fn product_leaf_values<F: Real>(series: &HaarSeries<F>) -> Vec<F> {
    let depth = series.depth();
    let n = 1usize << depth;
    let mut out = vec![F::one(); n];
    for (leaf, slot) in out.iter_mut().enumerate() {
        let x = F::lit((leaf as f64 + 0.5) / n as f64);
        for (index, b) in series.iter() {
            *slot *= F::one() + b * crate::dyadic::haar_value(index, x);
        }
    }
    out
}

/// Mean-one check plus leaf-by-leaf agreement between a tree and the
/// product expansion of its own coefficient series.
pub fn product_identity_error<F: Real>(tree: &WeightTree<F>) -> Result<F> {
    let direct = leaf_values(tree);
    let via_product = product_leaf_values(&tree.haar_series());
    let mut worst = F::zero();
    for (a, b) in direct.iter().zip(&via_product) {
        worst = worst.max((*a - *b).abs() / a.abs().max(F::one()));
    }
    Ok(worst)
}

/// The paraproduct `sum_I (mean of f on I) b_I h_I` evaluated literally in
/// leaf space: for every node, the mean is a plain leaf average and the
/// Haar function is added pointwise. Quadratic in the leaf count.
pub fn paraproduct_leaf_apply<F: Real>(series: &HaarSeries<F>, f_leaves: &[F]) -> Vec<F> {
    let depth = f_leaves.len().trailing_zeros();
    let n = f_leaves.len();
    let mut out = vec![F::zero(); n];
    for (index, b) in series.iter() {
        let m = mean(f_leaves, index, depth);
        for (leaf, slot) in out.iter_mut().enumerate() {
            let x = F::lit((leaf as f64 + 0.5) / n as f64);
            *slot += m * b * crate::dyadic::haar_value(index, x);
        }
    }
    out
}

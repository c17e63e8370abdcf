//! A numerical laboratory for dyadic weights on (0, 1].
//!
//! The crate models positive step weights as binary trees of mass splits,
//! expands them in the Haar basis, measures them with the standard class
//! functionals (doubling, flatness, reverse Holder, two-weight brackets),
//! deforms them by scaling their Haar coefficients, builds periodic
//! families with closed-form reverse Holder constants, and inverts
//! paraproduct perturbations of the identity exactly.
//!
//! Everything is generic over the scalar through [`scalar::Real`];
//! `f64` aliases are exported at the root for the common case.

pub mod classes;
pub mod dyadic;
pub mod error;
pub mod lambda;
pub mod paraproduct;
pub mod periodic;
pub mod reference;
pub mod scalar;
pub mod solve;

mod logspace;

pub use classes::{class_report, ClassReport};
pub use dyadic::{haar_value, DyadicIndex, HaarSeries, WeightTree};
pub use error::{Error, Result};
pub use lambda::{lambda_op, lambda_op_product, Lambda};
pub use paraproduct::{
    apply_resolvent, lp_norm, paraproduct_matrix, resolvent_norm_lower_bound, resolvent_sweep,
    HaarOperator, MeanZeroFunction,
};
pub use periodic::{
    build_counterexample, critical_exponent, minimal_period, periodic_weight, rhp_condition,
    rhp_constant_periodic, rhp_ratio_closed_form, CounterexampleCert, PeriodicSpec,
};
pub use scalar::Real;

/// Weight tree over `f64`, the default precision.
pub type WeightTree64 = WeightTree<f64>;
/// Weight tree over `f32`, for storage-bound sweeps.
pub type WeightTree32 = WeightTree<f32>;
/// Haar expansion over `f64`.
pub type HaarSeries64 = HaarSeries<f64>;
/// Haar expansion over `f32`.
pub type HaarSeries32 = HaarSeries<f32>;

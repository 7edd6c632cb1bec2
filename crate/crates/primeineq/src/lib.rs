//! Prime solutions of simultaneous linear inequalities with algebraic coefficients.
//!
//! The pipeline validates a system, splits off its rational part, predicts the
//! number of prime solutions from local densities and a volume, and counts them
//! exactly for comparison.

// index loops follow the matrix notation; `!(x <= y)` is the NaN-rejecting form
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::result_unit_err)]

pub mod algebraic;
pub mod analytic;
pub mod arith;
pub mod counter;
pub mod forms;
pub mod geom;
pub mod local;
pub mod quad;

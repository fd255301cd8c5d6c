//! Painlevé metrics from generalized Stäckel data, and numerical
//! verification of their separability structure.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::redundant_guards,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::type_complexity
)]

pub mod catalogue;
pub mod conformal;
pub mod curvature;
pub mod dynamics;
pub mod expr;
pub mod killing;
pub mod linalg;
pub mod ode;
pub mod operators;
pub mod report;
pub mod sampling;
pub mod separation;
pub mod specfile;
pub mod stackel;
pub mod tolerances;

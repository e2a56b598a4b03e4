//! Experiment drivers and file formats for weighted Bergman kernels with
//! prescribed vanishing on the Riemann sphere.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod experiments;
pub mod io;
pub mod report;
pub mod scenario;

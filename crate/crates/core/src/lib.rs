//! Partial Bergman kernels, pole-constrained equilibrium envelopes and zeros
//! of random sections on the Riemann sphere with `L = O(k)`.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command
//! line and parallel drivers live in the companion `sphere-bergman` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod envelope;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod roots;
pub mod sections;
pub mod weight;
pub mod zeros;

pub use envelope::{
    equilibrium_current, envelope_stability_check, holder_diagnostic, solve_envelope, EnvelopeProblem, EnvelopeResult,
    EquilibriumCurrent, SolverOptions,
};
pub use error::Error;
pub use geometry::{chordal_sigma, fs_weight, Chart, Pole, PoleSet, ProjectivePoint};
pub use oracle::{radial_oracle, RadialEnvelope};
pub use quadrature::{GridField, SphereGrid};
pub use sections::{bergman_field, dimension, is_big, threshold, variational_check, BergmanField, SectionSpace};
pub use weight::{modulus_of_continuity, HolderBound, Preset, WeightSpec};
pub use zeros::{sample_section, zero_divisor, EmpiricalDivisor, RandomSection, TestFunction};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::envelope::EnvelopeResult;

#[derive(Clone, Debug)]
pub enum Error {
    InvalidTau(f64),
    CoincidentPoles,
    GridTooSmall { n_radial: usize, n_angular: usize },
    /// The requested grid is below the resolution floor for this degree.
    GridBelowFloor { need: (usize, usize), have: (usize, usize) },
    GridMismatch,
    DimensionZero,
    IllConditioned { rank: usize, dim: usize },
    /// `Σ τ_j >= k`: the envelope class degenerates.
    NotBig { theta_mass: f64 },
    MaxIterations { iterations: usize, residual: f64, best: Box<EnvelopeResult> },
    RootFindingFailed { residuals: Vec<f64> },
    OffAxisPole,
    NonRadialWeight,
    InvalidArgument(&'static str),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. } | Error::MaxIterations { .. } | Error::RootFindingFailed { .. }
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidTau(t) => write!(f, "vanishing rate must be positive and finite, got {t}"),
            Error::CoincidentPoles => write!(f, "pole points must be pairwise distinct"),
            Error::GridTooSmall { n_radial, n_angular } => {
                write!(f, "grid {n_radial}x{n_angular} is below the minimum 2x4")
            }
            Error::GridBelowFloor { need, have } => write!(
                f,
                "grid {}x{} is below the resolution floor {}x{}",
                have.0, have.1, need.0, need.1
            ),
            Error::GridMismatch => write!(f, "field and grid dimensions differ"),
            Error::DimensionZero => write!(f, "the constrained section space is zero"),
            Error::IllConditioned { rank, dim } => {
                write!(f, "weighted evaluation matrix has numerical rank {rank} < {dim}")
            }
            Error::NotBig { theta_mass } => write!(
                f,
                "configuration is not big: k - sum(tau) = {theta_mass} <= 0 (need sum of taus < k)"
            ),
            Error::MaxIterations { iterations, residual, .. } => {
                write!(f, "envelope solver stopped after {iterations} sweeps at residual {residual:e}")
            }
            Error::RootFindingFailed { residuals } => {
                let worst = residuals.iter().copied().fold(0.0, f64::max);
                write!(f, "root refinement failed to converge (worst residual {worst:e})")
            }
            Error::OffAxisPole => write!(f, "radial oracle needs all poles at 0 or infinity"),
            Error::NonRadialWeight => write!(f, "radial oracle needs a rotation-invariant weight"),
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
        }
    }
}

impl core::error::Error for Error {}

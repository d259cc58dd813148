//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("lattice dimension {0} unsupported (1 <= d <= 3)")]
    DimensionUnsupported(usize),

    #[error("frequency is rational at radius {radius}: torus norm of {site:?} is zero")]
    RationalFrequency { site: Vec<i64>, radius: usize },

    #[error("potential pole on lattice sites {sites:?} at theta={theta}")]
    PoleOnLattice { theta: f64, sites: Vec<Vec<i64>> },

    #[error("energy {energy} within {dist:e} of the spectrum")]
    SingularEnergy { energy: f64, dist: f64 },

    #[error("pivot-deleted block is singular at the requested energy")]
    SingularMinor,

    #[error("expected 1 eigenvalue in the window, found {found}")]
    RootCountMismatch { found: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("separation premise violated: sites {a:?}, {b:?} at distance {dist} < {required}")]
    PremiseViolated {
        a: Vec<i64>,
        b: Vec<i64>,
        dist: i64,
        required: i64,
    },

    #[error("fewer than {needed} usable decay samples ({got})")]
    InsufficientDecaySamples { needed: usize, got: usize },

    #[error("operation requires {required} potential class")]
    UnsupportedRegime { required: &'static str },

    #[error("degenerate schedule: {0}")]
    DegenerateSchedule(String),

    #[error("subset equals the full domain; boundary sum is empty")]
    DegenerateSubset,
}

pub type Result<T> = std::result::Result<T, CoreError>;

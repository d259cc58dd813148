//! Numerical laboratory for quasi-periodic Schrödinger operators on finite
//! boxes of Z^d with Lipschitz monotone potentials: Rellich curves via Schur
//! complements, resonant-set combinatorics, Green's-function decay bounds and
//! localization diagnostics.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod localization;
pub mod msa;
pub mod operator;
pub mod quasiperiodic;
pub mod rellich;
pub mod schur;

pub use error::{CoreError, Result};
pub use lattice::{cube, cube_at_origin, BoundaryPair, LatticePoint, LatticeSet};
pub use msa::{BlockHierarchy, ScaleSchedule};
pub use operator::{assemble, DirichletOperator, GreensFunction, ModelParams};
pub use quasiperiodic::{FrequencySpec, PotentialSpec, Side};
pub use rellich::CurveOracle;

//! Numerical machinery for sparse domination of Hilbert transforms along
//! monomial curves: nonisotropic dyadic grids and curve-scaled cubes,
//! quadrature realizations of single-scale averages and truncated Hilbert
//! transforms, the stopping-time sparse construction with verifiable
//! sparsity certificates, nonisotropic Muckenhoupt weights, and the
//! sharpness experiment for the admissible exponent region.

pub mod curve;
pub mod error;
pub mod families;
pub mod fit;
pub mod geom;
pub mod grid;
pub mod gridfn;
pub mod operators;
pub mod region;
pub mod sparse;
pub mod weights;
pub mod torsion;

pub use curve::{GammaCube, MonomialCurve};
pub use error::{Error, Result};
pub use geom::{BoxN, Frame};
pub use grid::{DyadicCube, DyadicGrid};
pub use gridfn::{GridFunction, GridGeometry};
pub use operators::{BumpProfile, QuadratureRule, TruncationWindow};
pub use region::{admissible_region, dual_region, in_admissible_interior, SparseRegion};
pub use sparse::{SparseCollection, SparseParams, SparsityCertificate, StoppingTree};
pub use torsion::TorsionCurve;
pub use weights::{QuasiBallFamily, Weight};

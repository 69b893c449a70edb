//! Minimization of principal-stretch distortion energies over tetrahedral
//! meshes with projected Newton.
//!
//! The per-element 12x12 energy Hessian is never eigendecomposed numerically.
//! Instead it is factorized analytically into a 3x3 stretch block plus six
//! scalar twist/flip values ([`eigsys`]), which makes the positive-definite
//! projection a matter of clamping nine numbers. Everything downstream —
//! assembly ([`assembly`]), the Newton loop ([`solver`]) and the command-line
//! front end — works against that factorization.
//!
//! All numeric code is generic over the scalar type through [`Real`]
//! (effectively `f32` or `f64`); concrete `f64` aliases are exported at the
//! crate root for the common case.

// Index loops mirror the matrix arithmetic they implement.
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod eigsys;
pub mod energy;
pub mod fixtures;
pub mod meshio;
pub mod oracle;
mod real;
pub mod smallmat;
pub mod solver;
pub mod svd_diff;

pub use real::Real;

/// Double-precision aliases; the CLI and most tests use these.
pub type Mat3d = smallmat::Mat3<f64>;
pub type Svd3d = smallmat::Svd3<f64>;
pub type SymEig3d = smallmat::SymEig3<f64>;
pub type TetMeshD = assembly::TetMesh<f64>;
pub type ElementRefD = assembly::ElementRef<f64>;
pub type ConstraintSetD = assembly::ConstraintSet<f64>;
pub type SolverConfigD = solver::SolverConfig<f64>;
pub type SolveTraceD = solver::SolveTrace<f64>;

/// Single-precision aliases.
pub type Mat3f = smallmat::Mat3<f32>;
pub type Svd3f = smallmat::Svd3<f32>;
pub type TetMeshF = assembly::TetMesh<f32>;

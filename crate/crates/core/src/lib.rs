//! Vectorial Sturm–Liouville eigenvalue problems on `[0, π]` and the
//! construction of isospectral problems from finite-rank Gel'fand–Levitan
//! kernels.
//!
//! ```text
//! -φ'' + P(x) φ = λ φ,   B φ'(0) + A φ(0) = 0,   𝓑 φ'(π) + 𝓐 φ(π) = 0
//! ```
//!
//! The pipeline is: [`spectrum::scan_spectrum`] locates eigenvalues and
//! orthogonal eigenbases, [`transform::build_perturbation`] selects weighted
//! eigenfunctions, [`transform::transform_problem`] solves the degenerate
//! kernel in closed form and returns `(Q, Ã, B, 𝓐̃, 𝓑)`, and [`verify`]
//! checks isospectrality and the kernel identities numerically.

pub mod error;
pub mod fd;
pub mod function;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod spectrum;
pub mod spline;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use function::VectorFunction;
pub use grid::Grid;
pub use model::{builtin_problem, validate_problem, BoundaryPair, MatrixPotential, Problem};
pub use spectrum::{scan_spectrum, ScanOptions, SpectrumReport};

//! Numerical laboratory for the singular Liouville equation
//!
//! ```text
//!     Δu + |x|^{2N} h(x) e^u = 0        in a disk,
//! ```
//!
//! the desingularized form of a Liouville equation with a quantized point
//! source of strength `4πN` at the origin. The crate provides:
//!
//! * the explicit two-parameter family of entire solutions with finite mass
//!   `8π(N+1)` and its parameter kernels ([`family`]),
//! * the trigonometric circulant system that pins the first-order locations
//!   of the `N+1` bubbling points ([`circulant`]),
//! * Dirichlet Green functions on disks and harmonic de-oscillation
//!   ([`green`]),
//! * Pohozaev identities evaluated by quadrature on small balls
//!   ([`pohozaev`]),
//! * executable asymptotic predictors with independent oracles
//!   ([`asymptotics`]),
//! * a finite-volume Newton-continuation solver that produces bubbling
//!   branches on polar grids ([`solver`]).
//!
//! All floating-point work is deterministic: identical inputs produce
//! bitwise-identical outputs at a fixed thread count.

pub mod asymptotics;
pub mod circulant;
pub mod coeff;
pub mod family;
pub mod field;
pub mod green;
pub mod pohozaev;
pub mod quad;
pub mod solver;

pub use asymptotics::{BlowupData, DisplacementPrediction, GluckExpansion};
pub use circulant::{CirculantSystem, IdentityReport, NondegeneracyConstant};
pub use coeff::CoeffExpr;
pub use family::{GlobalSolutionParams, KernelDerivatives, KernelMatrix};
pub use field::ScalarField;
pub use green::{DiskGreen, HarmonicLift};
pub use pohozaev::{PohozaevReport, ToleranceBudget};
pub use solver::{DiskProblem, SolutionField};

/// Complex number alias used throughout; points of the plane are `Complex64`.
pub type C64 = num_complex::Complex64;

//! Linear Grad moment systems in half-space.
//!
//! Builds the flux and collision matrices of the moment equations
//! `A W'(y) = -Q W(y) + h(y)` on `y ∈ [0, ∞)`, decides whether a wall
//! operator makes the problem well-posed, and assembles the closed-form
//! solution together with its weighted-norm diagnostics.

pub mod error;
pub mod exppoly;
pub mod grid;
pub mod linalg;
pub mod maxwell;
pub mod moments;
pub mod quadrature;
pub mod solver;
pub mod transform;
pub mod wellposed;

pub use error::{Error, Result};
pub use exppoly::ExpPolyVec;
pub use maxwell::{HChoice, MaxwellBC};
pub use moments::{BoundaryData, MomentSystem, MultiIndex, Parity, Variant};
pub use solver::HalfspaceSolution;
pub use transform::{SpectralFactorization, SubspaceDecomposition};
pub use wellposed::{BcKind, BoundaryOperator, WellposednessVerdict};

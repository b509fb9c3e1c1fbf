//! Mixedness testing with unentangled measurements.
//!
//! Haar sampling and dense complex linear algebra, density matrices and POVM
//! simulation, the likelihood-ratio machinery behind the `d^{3/2}/ε²` lower
//! bound, its classical analogue with exact closed forms, a collision-based
//! uniformity tester and the random-basis mixedness certifier built on it.

pub mod certifier;
pub mod error;
pub mod haar;
pub mod likelihood;
pub mod matrix;
pub mod mc;
pub mod moments;
pub mod paninski;
pub mod rng;
pub mod scalar;
pub mod states;
pub mod stats;
pub mod uniformity;

pub use error::{Error, Result};
pub use matrix::{Eigh, Hermitian, Matrix, MatrixFile};
pub use rng::{rng_derive, RngSeed, StreamRng};
pub use scalar::{Field, Real};

/// Double-precision complex matrix.
pub type ComplexMatrix = Matrix<f64>;
/// Double-precision Hermitian matrix.
pub type HermitianMatrix = Hermitian<f64>;
/// Double-precision eigendecomposition.
pub type EighResult = Eigh<f64>;
pub type ComplexMatrixF32 = Matrix<f32>;
pub type HermitianMatrixF32 = Hermitian<f32>;
/// Exact rational scalar for the classical closed forms.
pub type Exact = num_rational::BigRational;

//! Symbolic–numeric calculus of superforms and supercurrents on `R^n x R^n`.

pub mod error;
pub mod exterior;
pub mod field;
pub mod poly;
pub mod quadrature;
pub mod calculus;
pub mod positivity;
pub mod currents;
pub mod lelong;
pub mod builtins;
pub mod degree;

pub use error::{Error, Result};
pub use exterior::{beta, beta_power, BasisElement, Coeff, MultiIndex, Superform};
pub use field::{FieldSpec, Func, MaxAffine, MollifierKernel, ScalarField};
pub use poly::Poly;

//! Finite sections of singular integral operators with flip.
//!
//! The crate builds finite sections `P_n A P_n` of operators generated by the
//! Riesz projection `P`, the flip `J` and Laurent operators with block
//! piecewise-continuous symbols, maps sequences of such sections to their
//! limit operators and local symbols, and compares the resulting stability
//! prediction with direct singular-value sweeps.
//!
//! Module map:
//!
//! * [`symbol`]: matrix-valued piecewise trigonometric polynomials on the circle.
//! * [`opexpr`]: operator expressions over `I, P, Q, J, L(a)` and finite-rank atoms.
//! * [`sections`]: dense section matrices on `Z_n = {-n, .., n-1}` and sweeps.
//! * [`symbolmaps`]: the limit homomorphisms of section sequences.
//! * [`linemodels`]: model operators on the line and half-line and their cell discretizations.
//! * [`localsym`]: local symbols at jump points and at `±1`.
//! * [`stability`]: the combined stability report.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod linemodels;
pub mod localsym;
pub mod opexpr;
pub mod sections;
pub mod sexpr;
pub mod stability;
pub mod symbol;
pub mod symbolmaps;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

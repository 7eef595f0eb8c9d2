//! Numerical periodic homogenization of weakly coupled cooperative
//! convection–diffusion–reaction systems.
// Index loops mirror the stencil formulas; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod effective;
pub mod error;
pub mod factorize;
pub mod fine;
pub mod fixtures;
pub mod fourier;
pub mod grid;
pub mod krylov;
pub mod problem;
pub mod sparse;
pub mod spectral;
pub mod validate;

pub use error::{Error, HypothesisViolation, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/cell.md")]
    mod cell {}
    #[doc = include_str!("../../../book/src/homogenized.md")]
    mod homogenized {}
    #[doc = include_str!("../../../book/src/fine.md")]
    mod fine {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
}

//! Numerical toolkit for backward bubble towers of the critical heat equation.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod ansatz;
pub mod constants;
pub mod corrector;
pub mod duhamel;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod ode;
pub mod parameters;
pub mod profiles;
pub mod quadrature;
pub mod simulator;
pub mod special;
pub mod weights;

pub use constants::{build_constant_table, AnalyticParams, ConstantTable, TowerScales};
pub use error::{Error, Result};
pub use profiles::Dimension;

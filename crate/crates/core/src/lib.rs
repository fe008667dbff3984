//! Boundary-integral synthesis of a double-layer density on a thin coaxial
//! antenna whose field cancels an incoming TM waveguide mode inside an
//! annular control shell while staying small on the waveguide wall.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod feasibility;
pub mod field;
pub mod geometry;
pub mod kernels;
pub mod modes;
pub mod operator;
pub mod oracle;
pub mod pipeline;
pub mod quadrature;
pub mod solver;
pub mod specialfun;

pub use error::{Error, Result};
pub use num_complex::Complex64 as c64;

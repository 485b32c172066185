//! Shape optimization of a Stokes-Brinkman channel on a transformed
//! reference domain.

pub mod adjoint;
pub mod control;
pub mod data;
pub mod error;
pub mod fem;
pub mod functional;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod par;
pub mod quadrature;
pub mod sensitivity;
pub mod state;

pub use error::{Error, Result};

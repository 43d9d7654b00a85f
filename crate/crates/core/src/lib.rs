//! Specular billiard flow in the unit disk and the free transport equation
//! with specular reflection: characteristics, their derivatives, boundary
//! compatibility checks for initial data, and mild-solution evaluation.

pub mod compat;
pub mod deriv;
pub mod error;
pub mod flow;
pub mod geom;
pub mod sample;
pub mod transport;

pub use error::{Error, Result};
